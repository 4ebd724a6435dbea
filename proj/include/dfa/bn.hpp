#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dfa/condmodel.hpp"
#include "dfa/core.hpp"

namespace dfa {

struct Edge {
  Index from = 0;
  Index to = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Directed acyclic graph over the features plus the target node.
/// Acyclicity, self-loops and parallel edges are rejected on construction.
class Dag {
 public:
  Dag() = default;
  Dag(Index num_nodes, const std::vector<Edge>& edges, std::vector<std::string> names = {});

  Index size() const noexcept { return static_cast<Index>(parents_.size()); }
  const IndexSet& parents(Index v) const { return parents_.at(v); }
  const IndexSet& children(Index v) const { return children_.at(v); }
  bool has_edge(Index from, Index to) const;
  bool adjacent(Index a, Index b) const { return has_edge(a, b) || has_edge(b, a); }
  std::vector<Edge> edges() const;
  IndexSet topological_order() const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::string name(Index v) const;

 private:
  std::vector<IndexSet> parents_;
  std::vector<IndexSet> children_;
  std::vector<std::string> names_;
};

/// Partially directed graph: a directed edge set plus undirected links.
class Pdag {
 public:
  Pdag() = default;
  explicit Pdag(Index num_nodes, std::vector<std::string> names = {});

  Index size() const noexcept { return n_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  void add_undirected(Index a, Index b);
  /// Replaces any existing link between the endpoints.
  void orient(Index from, Index to);
  void remove_link(Index a, Index b);

  bool has_directed(Index from, Index to) const { return directed_.count({from, to}) > 0; }
  bool has_undirected(Index a, Index b) const { return undirected_.count(key(a, b)) > 0; }
  bool adjacent(Index a, Index b) const { return has_directed(a, b) || has_directed(b, a) || has_undirected(a, b); }

  const std::set<Edge>& directed() const noexcept { return directed_; }
  /// Undirected links stored with from < to.
  const std::set<Edge>& undirected() const noexcept { return undirected_; }
  IndexSet neighbors(Index v) const;

  /// Directed part is acyclic and no link is both directed and undirected.
  void validate() const;

  static Pdag from_dag(const Dag& dag);

 private:
  static Edge key(Index a, Index b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  void check_node(Index v) const;

  Index n_ = 0;
  std::set<Edge> directed_;
  std::set<Edge> undirected_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Graph queries

/// True iff every path between a and b is blocked given `given`.
bool d_separated(const Dag& dag, Index a, Index b, const IndexSet& given);

/// Parents, children and co-parents of v.
IndexSet markov_blanket(const Dag& dag, Index v);

/// { i in u : i not d-separated from y given o }.
IndexSet prune_candidates(const Dag& dag, Index y_node, const IndexSet& o, const IndexSet& u);

/// Unshielded colliders a -> c <- b, reported with a < b.
struct VStructure {
  Index a, c, b;
  auto operator<=>(const VStructure&) const = default;
};
std::set<VStructure> v_structures(const Dag& dag);
std::set<VStructure> v_structures(const Pdag& pdag);

/// Applies orientation propagation (Meek rules 1-3) until nothing changes.
void propagate_orientations(Pdag& pdag);

/// The completed PDAG of the Markov equivalence class of `dag`.
Pdag cpdag(const Dag& dag);

struct CpdagDiff {
  std::vector<Edge> missing;      // adjacent in truth only
  std::vector<Edge> extra;        // adjacent in learned only
  std::vector<Edge> misoriented;  // adjacent in both, different mark
  std::vector<VStructure> missing_v;
  std::vector<VStructure> extra_v;

  std::size_t skeleton_errors() const { return missing.size() + extra.size(); }
  std::size_t v_structure_errors() const { return missing_v.size() + extra_v.size(); }
  bool identical() const { return skeleton_errors() == 0 && v_structure_errors() == 0 && misoriented.empty(); }
};

CpdagDiff diff_cpdag(const Pdag& truth, const Pdag& learned);
std::string format_diff(const CpdagDiff& diff, const std::vector<std::string>& names);

// ---------------------------------------------------------------------------
// Conditional-independence oracles

struct CiResult {
  bool independent = false;
  double stat = 0.0;  // nats
};

/// I(x_i ; x_j | x_cond) <= threshold  =>  independent. Symmetric in (i, j).
class CiOracle {
 public:
  explicit CiOracle(double epsilon) : epsilon_(epsilon) {}
  virtual ~CiOracle() = default;

  virtual Index num_nodes() const = 0;
  virtual double statistic(Index i, Index j, const IndexSet& cond) const = 0;
  virtual double threshold(Index /*i*/, Index /*j*/, const IndexSet& /*cond*/) const { return epsilon_; }

  CiResult test(Index i, Index j, const IndexSet& cond) const;
  double epsilon() const noexcept { return epsilon_; }
  std::size_t tests_run() const noexcept { return tests_; }

 private:
  double epsilon_;
  mutable std::size_t tests_ = 0;
};

/// Exact partial-correlation CMI under a Gaussian over all nodes.
class GaussianCiOracle final : public CiOracle {
 public:
  GaussianCiOracle(GaussianParams g, double epsilon);
  Index num_nodes() const override { return g_.dim(); }
  double statistic(Index i, Index j, const IndexSet& cond) const override;

 private:
  GaussianParams g_;
};

/// Gaussian CMI of the sample covariance, thresholded either at a fixed
/// epsilon or at the 95th percentile of a permutation null (x_j shuffled).
class SampleGaussianCiOracle final : public CiOracle {
 public:
  struct PermutationNull {
    int permutations = 100;
    double quantile = 0.95;
    std::uint64_t seed = 0;
  };

  SampleGaussianCiOracle(Eigen::MatrixXd rows, double epsilon);
  SampleGaussianCiOracle(Eigen::MatrixXd rows, PermutationNull null);

  Index num_nodes() const override { return static_cast<Index>(rows_.cols()); }
  double statistic(Index i, Index j, const IndexSet& cond) const override;
  double threshold(Index i, Index j, const IndexSet& cond) const override;

 private:
  Eigen::MatrixXd rows_;
  GaussianParams fitted_;
  std::optional<PermutationNull> null_;
};

/// Monte Carlo CMI from a fitted engine, averaged over reference rows
/// (pointwise CMI at each row's values of the conditioning set). Node
/// numbering follows NodeMap: for classification the last node is y.
class EngineCiOracle final : public CiOracle {
 public:
  EngineCiOracle(const Engine& engine, Eigen::MatrixXd reference_nodes, double epsilon, std::size_t n_samples,
                 std::uint64_t seed);

  Index num_nodes() const override { return num_nodes_; }
  double statistic(Index i, Index j, const IndexSet& cond) const override;

 private:
  const Engine* engine_;
  Eigen::MatrixXd reference_;
  MixtureModel flattened_;  // classification: mixture over (y, k) with weights P(y) w_{y,k}
  Index num_nodes_;
  std::size_t n_samples_;
  std::uint64_t seed_;
};

inline constexpr double kDefaultMcEpsilon = 0.015;

// ---------------------------------------------------------------------------
// Structure learning

/// Test every pair against all remaining nodes; dependent pairs enter
/// each other's blanket, so the result is symmetric.
std::vector<IndexSet> learn_markov_blankets(const CiOracle& ci);

struct StructureResult {
  Pdag pdag;
  std::map<std::pair<Index, Index>, IndexSet> separating_sets;
  std::vector<std::string> warnings;
};

/// Moral graph -> spouse-link deletion with separating sets -> v-structure
/// orientation.
inline constexpr int kMaxSeparatingSetSize = 4;
StructureResult resolve_structure(const std::vector<IndexSet>& blankets, const CiOracle& ci,
                                  std::vector<std::string> names = {}, int max_set_size = kMaxSeparatingSetSize);

/// Propagates orientations, then orients the remaining undirected links
/// by seeded choice without creating v-structures or cycles. Throws
/// NoValidExtension when that is impossible, unless `warnings` is given:
/// then a plain sink is used instead and the event is recorded.
Dag complete_orientation(const Pdag& pdag, std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

struct LearnedBn {
  Dag dag;
  Pdag pdag;
  std::vector<IndexSet> blankets;
  std::vector<std::string> warnings;
};

LearnedBn learn_bn(const CiOracle& ci, std::uint64_t seed, std::vector<std::string> names = {});

// ---------------------------------------------------------------------------
// Features <-> graph nodes

/// Graph layout for a task with F features: classification uses nodes
/// 0..F-1 for features and F for y; regression uses the joint column layout.
struct NodeMap {
  TaskKind task;
  Index num_features = 0;

  Index y_node() const noexcept { return task.is_classification() ? num_features : task.target_index; }
  Index node_of(Index feature) const noexcept { return feature_to_column(feature, task); }
  Index feature_of(Index node) const noexcept;
  Index num_nodes() const noexcept { return num_features + 1; }
};

/// Rows laid out one column per graph node (classification appends y).
Eigen::MatrixXd node_matrix(const Dataset& ds);
std::vector<std::string> node_names(const Dataset& ds);

// ---------------------------------------------------------------------------
// Edge-list files: one `parent -> child` per line; a bare name declares a node.

void write_dag(const Dag& dag, const std::filesystem::path& path);
std::string format_dag(const Dag& dag);
Dag parse_dag(const std::string& text, const std::vector<std::string>& names = {});
Dag read_dag(const std::filesystem::path& path, const std::vector<std::string>& names = {});

}  // namespace dfa
