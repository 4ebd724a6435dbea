#include "dfa/bn.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dfa/cmi.hpp"

namespace dfa {
namespace {

void sort_unique(IndexSet& s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
}

bool directed_path(const Pdag& g, Index from, Index to) {
  std::vector<char> seen(g.size(), 0);
  std::deque<Index> q{from};
  while (!q.empty()) {
    const Index v = q.front();
    q.pop_front();
    if (v == to) return true;
    if (seen[v]) continue;
    seen[v] = 1;
    for (const Edge& e : g.directed())
      if (e.from == v && !seen[e.to]) q.push_back(e.to);
  }
  return false;
}

bool contains(const IndexSet& s, Index v) { return std::find(s.begin(), s.end(), v) != s.end(); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Dag

Dag::Dag(Index num_nodes, const std::vector<Edge>& edges, std::vector<std::string> names)
    : parents_(num_nodes), children_(num_nodes), names_(std::move(names)) {
  if (!names_.empty() && names_.size() != num_nodes)
    throw Error(ErrorCode::DimensionMismatch, "node names must cover every node");
  for (const Edge& e : edges) {
    if (e.from >= num_nodes || e.to >= num_nodes)
      throw Error(ErrorCode::InvalidNode, "edge endpoint outside the graph");
    if (e.from == e.to) throw Error(ErrorCode::CyclicGraph, "self-loop on node " + std::to_string(e.from));
    if (contains(children_[e.from], e.to)) throw Error(ErrorCode::InvalidArgument, "parallel edge");
    if (contains(children_[e.to], e.from)) throw Error(ErrorCode::CyclicGraph, "two-cycle between nodes");
    children_[e.from].push_back(e.to);
    parents_[e.to].push_back(e.from);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
  for (auto& c : children_) std::sort(c.begin(), c.end());
  if (topological_order().size() != num_nodes) throw Error(ErrorCode::CyclicGraph, "graph contains a directed cycle");
}

bool Dag::has_edge(Index from, Index to) const {
  if (from >= size() || to >= size()) return false;
  return std::binary_search(children_[from].begin(), children_[from].end(), to);
}

std::vector<Edge> Dag::edges() const {
  std::vector<Edge> out;
  for (Index v = 0; v < size(); ++v)
    for (Index c : children_[v]) out.push_back({v, c});
  return out;
}

IndexSet Dag::topological_order() const {
  std::vector<std::size_t> indeg(size());
  for (Index v = 0; v < size(); ++v) indeg[v] = parents_[v].size();
  std::deque<Index> ready;
  for (Index v = 0; v < size(); ++v)
    if (indeg[v] == 0) ready.push_back(v);
  IndexSet order;
  while (!ready.empty()) {
    const Index v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (Index c : children_[v])
      if (--indeg[c] == 0) ready.push_back(c);
  }
  return order;
}

std::string Dag::name(Index v) const {
  if (v < names_.size()) return names_[v];
  return "x" + std::to_string(v);
}

// ---------------------------------------------------------------------------
// Pdag

Pdag::Pdag(Index num_nodes, std::vector<std::string> names) : n_(num_nodes), names_(std::move(names)) {}

void Pdag::check_node(Index v) const {
  if (v >= n_) throw Error(ErrorCode::InvalidNode, "node " + std::to_string(v) + " outside the graph");
}

void Pdag::add_undirected(Index a, Index b) {
  check_node(a);
  check_node(b);
  if (a == b) throw Error(ErrorCode::InvalidNode, "self-link");
  remove_link(a, b);
  undirected_.insert(key(a, b));
}

void Pdag::orient(Index from, Index to) {
  check_node(from);
  check_node(to);
  if (from == to) throw Error(ErrorCode::InvalidNode, "self-loop");
  remove_link(from, to);
  directed_.insert({from, to});
}

void Pdag::remove_link(Index a, Index b) {
  directed_.erase({a, b});
  directed_.erase({b, a});
  undirected_.erase(key(a, b));
}

IndexSet Pdag::neighbors(Index v) const {
  IndexSet out;
  for (Index w = 0; w < n_; ++w)
    if (w != v && adjacent(v, w)) out.push_back(w);
  return out;
}

void Pdag::validate() const {
  for (const Edge& e : directed_) {
    check_node(e.from);
    check_node(e.to);
    if (undirected_.count(key(e.from, e.to))) throw Error(ErrorCode::InvalidArgument, "link both directed and undirected");
  }
  // directed part must be acyclic
  Dag(n_, std::vector<Edge>(directed_.begin(), directed_.end()));
}

Pdag Pdag::from_dag(const Dag& dag) {
  Pdag p(dag.size(), dag.names());
  for (const Edge& e : dag.edges()) p.orient(e.from, e.to);
  return p;
}

// ---------------------------------------------------------------------------
// Graph queries

bool d_separated(const Dag& dag, Index a, Index b, const IndexSet& given) {
  const Index n = dag.size();
  if (a >= n || b >= n) throw Error(ErrorCode::InvalidNode, "query node outside the graph");
  if (a == b) throw Error(ErrorCode::InvalidArgument, "d-separation of a node from itself");
  std::vector<char> in_given(n, 0);
  for (Index s : given) {
    if (s >= n) throw Error(ErrorCode::InvalidNode, "conditioning node outside the graph");
    in_given[s] = 1;
  }
  if (in_given[a] || in_given[b]) throw Error(ErrorCode::InvalidArgument, "query node inside the conditioning set");

  // ancestors of the conditioning set (inclusive) unblock colliders
  std::vector<char> anc(n, 0);
  std::deque<Index> q(given.begin(), given.end());
  while (!q.empty()) {
    const Index v = q.front();
    q.pop_front();
    if (anc[v]) continue;
    anc[v] = 1;
    for (Index p : dag.parents(v)) q.push_back(p);
  }

  // reachability over (node, arrived-from-child = up / from-parent = down)
  enum : int { kUp = 0, kDown = 1 };
  std::vector<std::array<char, 2>> visited(n, {0, 0});
  std::deque<std::pair<Index, int>> frontier{{a, kUp}};
  while (!frontier.empty()) {
    auto [v, dir] = frontier.front();
    frontier.pop_front();
    if (visited[v][static_cast<std::size_t>(dir)]) continue;
    visited[v][static_cast<std::size_t>(dir)] = 1;
    if (v == b) return false;
    if (dir == kUp && !in_given[v]) {
      for (Index p : dag.parents(v)) frontier.push_back({p, kUp});
      for (Index c : dag.children(v)) frontier.push_back({c, kDown});
    } else if (dir == kDown) {
      if (!in_given[v])
        for (Index c : dag.children(v)) frontier.push_back({c, kDown});
      if (anc[v])
        for (Index p : dag.parents(v)) frontier.push_back({p, kUp});
    }
  }
  return true;
}

IndexSet markov_blanket(const Dag& dag, Index v) {
  if (v >= dag.size()) throw Error(ErrorCode::InvalidNode, "node " + std::to_string(v));
  IndexSet mb = dag.parents(v);
  for (Index c : dag.children(v)) {
    mb.push_back(c);
    for (Index p : dag.parents(c))
      if (p != v) mb.push_back(p);
  }
  sort_unique(mb);
  return mb;
}

IndexSet prune_candidates(const Dag& dag, Index y_node, const IndexSet& o, const IndexSet& u) {
  if (y_node >= dag.size()) throw Error(ErrorCode::InvalidNode, "target node outside the graph");
  if (contains(o, y_node) || contains(u, y_node)) throw Error(ErrorCode::InvalidNode, "target node among features");
  IndexSet out;
  for (Index i : u)
    if (!d_separated(dag, i, y_node, o)) out.push_back(i);
  return out;
}

std::set<VStructure> v_structures(const Dag& dag) {
  std::set<VStructure> out;
  for (Index c = 0; c < dag.size(); ++c) {
    const auto& ps = dag.parents(c);
    for (std::size_t x = 0; x < ps.size(); ++x)
      for (std::size_t y = x + 1; y < ps.size(); ++y)
        if (!dag.adjacent(ps[x], ps[y])) out.insert({std::min(ps[x], ps[y]), c, std::max(ps[x], ps[y])});
  }
  return out;
}

std::set<VStructure> v_structures(const Pdag& pdag) {
  std::vector<IndexSet> parents(pdag.size());
  for (const Edge& e : pdag.directed()) parents[e.to].push_back(e.from);
  std::set<VStructure> out;
  for (Index c = 0; c < pdag.size(); ++c) {
    auto& ps = parents[c];
    std::sort(ps.begin(), ps.end());
    for (std::size_t x = 0; x < ps.size(); ++x)
      for (std::size_t y = x + 1; y < ps.size(); ++y)
        if (!pdag.adjacent(ps[x], ps[y])) out.insert({ps[x], c, ps[y]});
  }
  return out;
}

void propagate_orientations(Pdag& g) {
  const Index n = g.size();
  bool changed = true;
  while (changed) {
    changed = false;
    const std::vector<Edge> und(g.undirected().begin(), g.undirected().end());
    for (const Edge& link : und) {
      for (int flip = 0; flip < 2 && !changed; ++flip) {
        const Index b = flip ? link.to : link.from;
        const Index c = flip ? link.from : link.to;
        // candidate orientation b -> c
        bool apply = false;
        for (Index a = 0; a < n && !apply; ++a) {
          // R1: a -> b - c, a and c not adjacent
          if (a != c && g.has_directed(a, b) && !g.adjacent(a, c)) apply = true;
          // R2: b -> a -> c with b - c
          if (g.has_directed(b, a) && g.has_directed(a, c)) apply = true;
        }
        if (!apply) {
          // R3: b - x, b - w, x -> c, w -> c, x and w not adjacent
          IndexSet mids;
          for (Index x = 0; x < n; ++x)
            if (g.has_undirected(b, x) && g.has_directed(x, c)) mids.push_back(x);
          for (std::size_t p = 0; p < mids.size() && !apply; ++p)
            for (std::size_t q = p + 1; q < mids.size() && !apply; ++q)
              if (!g.adjacent(mids[p], mids[q])) apply = true;
        }
        if (apply && !directed_path(g, c, b)) {
          g.orient(b, c);
          changed = true;
        }
      }
      if (changed) break;
    }
  }
}

Pdag cpdag(const Dag& dag) {
  Pdag p(dag.size(), dag.names());
  for (const Edge& e : dag.edges()) p.add_undirected(e.from, e.to);
  for (const auto& v : v_structures(dag)) {
    p.orient(v.a, v.c);
    p.orient(v.b, v.c);
  }
  propagate_orientations(p);
  return p;
}

CpdagDiff diff_cpdag(const Pdag& truth, const Pdag& learned) {
  if (truth.size() != learned.size()) throw Error(ErrorCode::DimensionMismatch, "graphs differ in node count");
  CpdagDiff d;
  const Index n = truth.size();
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const bool in_t = truth.adjacent(a, b);
      const bool in_l = learned.adjacent(a, b);
      if (in_t && !in_l) d.missing.push_back({a, b});
      if (!in_t && in_l) d.extra.push_back({a, b});
      if (in_t && in_l) {
        const int mark_t = truth.has_undirected(a, b) ? 0 : truth.has_directed(a, b) ? 1 : 2;
        const int mark_l = learned.has_undirected(a, b) ? 0 : learned.has_directed(a, b) ? 1 : 2;
        if (mark_t != mark_l) d.misoriented.push_back({a, b});
      }
    }
  }
  const auto vt = v_structures(truth);
  const auto vl = v_structures(learned);
  std::set_difference(vt.begin(), vt.end(), vl.begin(), vl.end(), std::back_inserter(d.missing_v));
  std::set_difference(vl.begin(), vl.end(), vt.begin(), vt.end(), std::back_inserter(d.extra_v));
  return d;
}

std::string format_diff(const CpdagDiff& diff, const std::vector<std::string>& names) {
  auto nm = [&](Index v) { return v < names.size() ? names[v] : "x" + std::to_string(v); };
  std::ostringstream os;
  os << "missing edges: " << diff.missing.size() << "\n";
  for (const auto& e : diff.missing) os << "  - " << nm(e.from) << " -- " << nm(e.to) << "\n";
  os << "extra edges: " << diff.extra.size() << "\n";
  for (const auto& e : diff.extra) os << "  + " << nm(e.from) << " -- " << nm(e.to) << "\n";
  os << "misoriented edges: " << diff.misoriented.size() << "\n";
  for (const auto& e : diff.misoriented) os << "  ~ " << nm(e.from) << " -- " << nm(e.to) << "\n";
  os << "missing v-structures: " << diff.missing_v.size() << "\n";
  for (const auto& v : diff.missing_v) os << "  - " << nm(v.a) << " -> " << nm(v.c) << " <- " << nm(v.b) << "\n";
  os << "extra v-structures: " << diff.extra_v.size() << "\n";
  for (const auto& v : diff.extra_v) os << "  + " << nm(v.a) << " -> " << nm(v.c) << " <- " << nm(v.b) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// CI oracles

CiResult CiOracle::test(Index i, Index j, const IndexSet& cond) const {
  ++tests_;
  const Index lo = std::min(i, j), hi = std::max(i, j);
  IndexSet c = cond;
  sort_unique(c);
  const double stat = statistic(lo, hi, c);
  return {stat <= threshold(lo, hi, c), stat};
}

GaussianCiOracle::GaussianCiOracle(GaussianParams g, double epsilon) : CiOracle(epsilon), g_(std::move(g)) {
  g_.validate();
}

double GaussianCiOracle::statistic(Index i, Index j, const IndexSet& cond) const {
  return cmi_gaussian_exact(g_, i, j, cond).value;
}

SampleGaussianCiOracle::SampleGaussianCiOracle(Eigen::MatrixXd rows, double epsilon)
    : CiOracle(epsilon), rows_(std::move(rows)), fitted_(fit_gaussian(rows_)) {}

SampleGaussianCiOracle::SampleGaussianCiOracle(Eigen::MatrixXd rows, PermutationNull null)
    : CiOracle(0.0), rows_(std::move(rows)), fitted_(fit_gaussian(rows_)), null_(null) {}

double SampleGaussianCiOracle::statistic(Index i, Index j, const IndexSet& cond) const {
  return cmi_gaussian_exact(fitted_, i, j, cond).value;
}

double SampleGaussianCiOracle::threshold(Index i, Index j, const IndexSet& cond) const {
  if (!null_) return epsilon();
  std::uint64_t tag = 0;
  for (Index c : cond) tag = splitmix64(tag ^ c);
  Rng rng(derive_seed(null_->seed, {i, j, tag}));
  std::vector<double> null_stats;
  Eigen::MatrixXd permuted = rows_;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(rows_.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (int p = 0; p < null_->permutations; ++p) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index r = 0; r < rows_.rows(); ++r)
      permuted(r, static_cast<Eigen::Index>(j)) = rows_(perm[static_cast<std::size_t>(r)], static_cast<Eigen::Index>(j));
    null_stats.push_back(cmi_gaussian_exact(fit_gaussian(permuted), i, j, cond).value);
  }
  std::sort(null_stats.begin(), null_stats.end());
  const auto k = static_cast<std::size_t>(std::ceil(null_->quantile * static_cast<double>(null_stats.size()))) - 1;
  return null_stats[std::min(k, null_stats.size() - 1)];
}

EngineCiOracle::EngineCiOracle(const Engine& engine, Eigen::MatrixXd reference_nodes, double epsilon,
                               std::size_t n_samples, std::uint64_t seed)
    : CiOracle(epsilon),
      engine_(&engine),
      reference_(std::move(reference_nodes)),
      num_nodes_(engine.num_features() + 1),
      n_samples_(n_samples),
      seed_(seed) {
  if (static_cast<Index>(reference_.cols()) != num_nodes_)
    throw Error(ErrorCode::DimensionMismatch, "reference rows must have one column per node");
  if (reference_.rows() == 0) throw Error(ErrorCode::TooFewRows, "engine CI oracle needs reference rows");
  if (engine.is_classification()) {
    const auto& ccm = engine.classes();
    for (int y = 0; y < ccm.num_classes(); ++y) {
      const auto& m = ccm.per_class[static_cast<std::size_t>(y)];
      for (std::size_t k = 0; k < m.size(); ++k) {
        flattened_.weights.push_back(ccm.class_prior[static_cast<std::size_t>(y)] * m.weights[k]);
        flattened_.components.push_back(m.components[k]);
      }
    }
  }
}

double EngineCiOracle::statistic(Index i, Index j, const IndexSet& cond) const {
  double total = 0.0;
  const auto rows = reference_.rows();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::uint64_t s = derive_seed(seed_, {i, j, static_cast<std::uint64_t>(r)});
    if (!engine_->is_classification()) {
      std::vector<double> vals;
      for (Index c : cond) vals.push_back(reference_(r, static_cast<Eigen::Index>(c)));
      const ObservedState st(num_nodes_, cond, vals);
      total += cmi_regression(engine_->joint().density, i, st, j, n_samples_, s).value;
      continue;
    }
    const Index y = num_nodes_ - 1;
    const auto& ccm = engine_->classes();
    IndexSet feats;
    std::vector<double> vals;
    for (Index c : cond)
      if (c != y) {
        feats.push_back(c);
        vals.push_back(reference_(r, static_cast<Eigen::Index>(c)));
      }
    const ObservedState st(y, feats, vals);
    if (i == y || j == y) {
      total += cmi_classification(ccm, i == y ? j : i, st, n_samples_, s).value;
    } else if (contains(cond, y)) {
      const auto label = static_cast<std::size_t>(std::lround(reference_(r, static_cast<Eigen::Index>(y))));
      total += cmi_regression(ccm.per_class.at(label), i, st, j, n_samples_, s).value;
    } else {
      total += cmi_regression(flattened_, i, st, j, n_samples_, s).value;
    }
  }
  return total / static_cast<double>(rows);
}

// ---------------------------------------------------------------------------
// Structure learning

std::vector<IndexSet> learn_markov_blankets(const CiOracle& ci) {
  const Index n = ci.num_nodes();
  std::vector<IndexSet> mbs(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      IndexSet rest;
      for (Index k = 0; k < n; ++k)
        if (k != i && k != j) rest.push_back(k);
      if (!ci.test(i, j, rest).independent) {
        mbs[i].push_back(j);
        mbs[j].push_back(i);
      }
    }
  }
  for (auto& m : mbs) sort_unique(m);
  return mbs;
}

namespace {

// Calls fn(subset) for every subset of `pool` with size <= max_size, by
// increasing size; stops when fn returns true.
template <class Fn>
bool for_each_subset(const IndexSet& pool, int max_size, Fn&& fn) {
  const int n = static_cast<int>(pool.size());
  for (int k = 0; k <= std::min(n, max_size); ++k) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      IndexSet s;
      for (int t : idx) s.push_back(pool[static_cast<std::size_t>(t)]);
      if (fn(s)) return true;
      int p = k - 1;
      while (p >= 0 && idx[static_cast<std::size_t>(p)] == n - k + p) --p;
      if (p < 0) break;
      ++idx[static_cast<std::size_t>(p)];
      for (int q = p + 1; q < k; ++q) idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
    }
  }
  return false;
}

}  // namespace

StructureResult resolve_structure(const std::vector<IndexSet>& blankets, const CiOracle& ci,
                                  std::vector<std::string> names, int max_set_size) {
  const Index n = blankets.size();
  for (Index i = 0; i < n; ++i)
    for (Index j : blankets[i]) {
      if (j >= n) throw Error(ErrorCode::InvalidNode, "blanket member outside the graph");
      if (!contains(blankets[j], i)) throw Error(ErrorCode::InvalidArgument, "Markov blankets are not symmetric");
    }

  StructureResult res;
  res.pdag = Pdag(n, std::move(names));
  // moral graph
  for (Index i = 0; i < n; ++i)
    for (Index j : blankets[i])
      if (i < j) res.pdag.add_undirected(i, j);

  // delete links that some subset of a blanket separates
  for (Index i = 0; i < n; ++i) {
    for (Index j : blankets[i]) {
      if (j <= i) continue;
      IndexSet bi, bj;
      for (Index v : blankets[i])
        if (v != j) bi.push_back(v);
      for (Index v : blankets[j])
        if (v != i) bj.push_back(v);
      const IndexSet& first = bi.size() <= bj.size() ? bi : bj;
      const IndexSet& second = bi.size() <= bj.size() ? bj : bi;
      IndexSet found;
      auto separates = [&](const IndexSet& s) {
        if (ci.test(i, j, s).independent) {
          found = s;
          return true;
        }
        return false;
      };
      const bool deleted = for_each_subset(first, max_set_size, separates) ||
                           (second != first && for_each_subset(second, max_set_size, separates));
      if (deleted) {
        res.pdag.remove_link(i, j);
        res.separating_sets[{i, j}] = found;
      }
    }
  }

  // orient v-structures i -> k <- j for deleted spouse links
  for (const auto& [pair, sep] : res.separating_sets) {
    const auto [i, j] = pair;
    for (Index k = 0; k < n; ++k) {
      if (k == i || k == j || !res.pdag.adjacent(i, k) || !res.pdag.adjacent(j, k) || contains(sep, k)) continue;
      for (Index end : {i, j}) {
        if (res.pdag.has_directed(k, end)) {
          res.warnings.push_back("conflicting orientation on link " + std::to_string(end) + " - " + std::to_string(k) +
                                 "; keeping the earlier one");
          continue;
        }
        if (directed_path(res.pdag, k, end)) {
          res.warnings.push_back("skipping " + std::to_string(end) + " -> " + std::to_string(k) +
                                 ": it would close a directed cycle");
          continue;
        }
        res.pdag.orient(end, k);
      }
    }
  }
  res.pdag.validate();
  return res;
}

Dag complete_orientation(const Pdag& pdag, std::uint64_t seed, std::vector<std::string>* warnings) {
  pdag.validate();
  Pdag g = pdag;
  propagate_orientations(g);

  // extend without new v-structures: repeatedly remove an eligible sink
  const Index n = g.size();
  std::vector<char> alive(n, 1);
  std::vector<Edge> out(g.directed().begin(), g.directed().end());
  Rng rng(derive_seed(seed, {0x0e1u}));
  for (Index removed = 0; removed < n; ++removed) {
    IndexSet eligible;
    for (Index x = 0; x < n; ++x) {
      if (!alive[x]) continue;
      bool sink = true;
      for (Index w = 0; w < n && sink; ++w)
        if (alive[w] && g.has_directed(x, w)) sink = false;
      if (!sink) continue;
      IndexSet adj;
      for (Index w = 0; w < n; ++w)
        if (alive[w] && w != x && g.adjacent(x, w)) adj.push_back(w);
      bool ok = true;
      for (Index y : adj) {
        if (!g.has_undirected(x, y)) continue;
        for (Index z : adj)
          if (z != y && !g.adjacent(y, z)) ok = false;
      }
      if (ok) eligible.push_back(x);
    }
    if (eligible.empty()) {
      if (!warnings) throw Error(ErrorCode::NoValidExtension, "no orientation avoids new v-structures and cycles");
      for (Index x = 0; x < n && eligible.empty(); ++x) {
        if (!alive[x]) continue;
        bool sink = true;
        for (Index w = 0; w < n && sink; ++w)
          if (alive[w] && g.has_directed(x, w)) sink = false;
        if (sink) eligible.push_back(x);
      }
      warnings->push_back("no consistent extension; node " + std::to_string(eligible.front()) +
                          " oriented as a sink anyway");
    }
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    const Index x = eligible[pick(rng)];
    for (Index y = 0; y < n; ++y)
      if (alive[y] && g.has_undirected(x, y)) out.push_back({y, x});
    alive[x] = 0;
  }
  std::sort(out.begin(), out.end());
  return Dag(n, out, pdag.names());
}

LearnedBn learn_bn(const CiOracle& ci, std::uint64_t seed, std::vector<std::string> names) {
  LearnedBn out;
  out.blankets = learn_markov_blankets(ci);
  StructureResult sr = resolve_structure(out.blankets, ci, std::move(names));
  out.pdag = sr.pdag;
  propagate_orientations(out.pdag);
  out.warnings = std::move(sr.warnings);
  out.dag = complete_orientation(sr.pdag, seed, &out.warnings);
  return out;
}

// ---------------------------------------------------------------------------
// Node layout

Index NodeMap::feature_of(Index node) const noexcept {
  if (task.is_classification()) return node;
  return node < task.target_index ? node : node - 1;
}

Eigen::MatrixXd node_matrix(const Dataset& ds) {
  if (!ds.task.is_classification()) return ds.rows;
  Eigen::MatrixXd out(ds.rows.rows(), ds.rows.cols() + 1);
  out.leftCols(ds.rows.cols()) = ds.rows;
  for (Eigen::Index r = 0; r < ds.rows.rows(); ++r) out(r, ds.rows.cols()) = ds.labels[static_cast<std::size_t>(r)];
  return out;
}

std::vector<std::string> node_names(const Dataset& ds) {
  std::vector<std::string> names = ds.feature_names;
  if (names.empty())
    for (Index c = 0; c < ds.num_columns(); ++c) names.push_back("x" + std::to_string(c));
  if (ds.task.is_classification()) names.push_back("y");
  return names;
}

// ---------------------------------------------------------------------------
// Edge-list files

std::string format_dag(const Dag& dag) {
  std::ostringstream os;
  os << "# nodes: " << dag.size() << "\n";
  for (Index v = 0; v < dag.size(); ++v)
    if (dag.parents(v).empty() && dag.children(v).empty()) os << dag.name(v) << "\n";
  for (const Edge& e : dag.edges()) os << dag.name(e.from) << " -> " << dag.name(e.to) << "\n";
  return os.str();
}

void write_dag(const Dag& dag, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << format_dag(dag);
}

Dag parse_dag(const std::string& text, const std::vector<std::string>& names_in) {
  std::vector<std::string> names = names_in;
  const bool fixed = !names.empty();
  auto node = [&](const std::string& nm, int line) -> Index {
    auto it = std::find(names.begin(), names.end(), nm);
    if (it != names.end()) return static_cast<Index>(it - names.begin());
    if (fixed) throw Error(ErrorCode::InvalidNode, "line " + std::to_string(line) + ": unknown node '" + nm + "'");
    names.push_back(nm);
    return names.size() - 1;
  };
  std::vector<Edge> edges;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto arrow = s.find("->");
    if (arrow == std::string::npos) {
      node(s, line);
      continue;
    }
    const std::string from = trim(s.substr(0, arrow));
    const std::string to = trim(s.substr(arrow + 2));
    if (from.empty() || to.empty()) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": malformed edge");
    const Index a = node(from, line);
    const Index b = node(to, line);
    edges.push_back({a, b});
  }
  return Dag(names.size(), edges, names);
}

Dag read_dag(const std::filesystem::path& path, const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open DAG file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dag(ss.str(), names);
}

}  // namespace dfa
