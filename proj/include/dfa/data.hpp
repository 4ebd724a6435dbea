#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfa/bn.hpp"
#include "dfa/condmodel.hpp"
#include "dfa/core.hpp"
#include "json.hpp"

namespace dfa {

// ---------------------------------------------------------------------------
// Gated synthetic: x0 ~ U(0,1) picks which of x1..x_{d-1} carries the class.

struct HierarchicalSpec {
  Index n = 20000;
  Index d = 10;
  double noise_var = 0.3;
  int num_classes = 2;
  bool per_feature_weights = false;  // one (w1, w2) pair per gated feature
  bool normalize = true;
  bool flip_labels = false;  // y -> K-1-y on the same random stream
  std::uint64_t seed = 0;

  void validate() const;
};

struct HierarchicalData {
  Dataset data;
  std::vector<double> w1;  // size 1 when shared
  std::vector<double> w2;
};

HierarchicalData gen_hierarchical(const HierarchicalSpec& spec);

/// Gated feature index (1-based among x1..x_{d-1}) for a value of x0.
Index hierarchical_gate(double x0, Index d);

// ---------------------------------------------------------------------------
// Linear-Gaussian Bayesian networks

struct LinearGaussianBnSpec {
  enum class Target { None, Classification, Regression };

  Dag dag;
  Index n = 5000;
  double noise_var = 0.3;
  double weight_low = 0.0;
  double weight_high = 1.0;
  Target target = Target::None;
  Index target_node = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BnData {
  Dataset data;
  /// Graph in the NodeMap layout of `data` (classification moves the target last).
  Dag dag;
  /// Population distribution of all continuous node values in the same layout.
  GaussianParams population;
  /// weights(p, c) for edge p -> c, in the original node order.
  Eigen::MatrixXd weights;
  /// Classification: the median the target was split at.
  double threshold = 0.0;
};

BnData gen_linear_gaussian_bn(const LinearGaussianBnSpec& spec);

/// Sigma = (I - W^T)^{-1} D (I - W^T)^{-T} for x = W^T x + e, e ~ N(0, D).
GaussianParams linear_gaussian_population(const Dag& dag, const Eigen::MatrixXd& weights, double noise_var);

Dag asia_dag();
Dag sachs_dag();
/// Five-node graph with y as node 4 and edges x2->x0, y->x0, y->x1, x1->x3.
Dag toy_pruning_dag();
/// asia / sachs / toy by name.
Dag fixture_dag(const std::string& name);

// ---------------------------------------------------------------------------
// Time-series chain: x_t = phi x_{t-1} + s (t+1)/T drift + noise, s = 2y - 1.

struct ChainTimeSeriesSpec {
  Index n = 6000;
  Index num_steps = 12;
  double phi = 0.5;
  double drift = 1.0;
  double noise_var = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset gen_chain_timeseries(const ChainTimeSeriesSpec& spec);

// ---------------------------------------------------------------------------
// CSV

struct CsvOptions {
  bool header = true;
  /// Column holding y: a header name or a zero-based index. Empty: last column.
  std::string label_column;
  bool regression = false;
  bool normalize = false;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});
/// Classification writes y as the last column "y".
std::string format_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

nlohmann::json dag_to_json(const Dag& dag);
Dag dag_from_json(const nlohmann::json& j);

}  // namespace dfa
