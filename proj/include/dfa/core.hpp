#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfa/error.hpp"

namespace dfa {

using Index = std::size_t;
using IndexSet = std::vector<Index>;

/// Observed subset o with values x_o over a d-dimensional instance.
///
/// Value type: acquire() returns a new state and leaves the receiver
/// untouched, so an episode trace can keep every intermediate state.
class ObservedState {
 public:
  ObservedState() = default;
  explicit ObservedState(Index dim) : dim_(dim) {}
  ObservedState(Index dim, IndexSet observed, std::vector<double> values);

  Index dim() const noexcept { return dim_; }
  const IndexSet& observed() const noexcept { return observed_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return observed_.size(); }
  bool empty() const noexcept { return observed_.empty(); }

  bool contains(Index i) const noexcept;
  double value_of(Index i) const;

  /// {0..d-1} \ o in ascending order.
  IndexSet unobserved() const;

  /// Largest observed index, or -1 when nothing is observed.
  long long max_observed() const noexcept;

  ObservedState acquire(Index i, double v) const;

  Eigen::VectorXd values_vector() const;

 private:
  Index dim_ = 0;
  IndexSet observed_;
  std::vector<double> values_;
};

inline ObservedState acquire(const ObservedState& state, Index i, double v) { return state.acquire(i, v); }

struct TaskKind {
  enum class Kind { Classification, Regression };

  Kind kind = Kind::Classification;
  int num_classes = 2;      // classification only
  Index target_index = 0;   // regression only: column of y inside the joint rows

  static TaskKind classification(int num_classes);
  static TaskKind regression(Index target_index);

  bool is_classification() const noexcept { return kind == Kind::Classification; }
  bool operator==(const TaskKind&) const = default;
};

/// n x d table. For classification `labels` carries one class per row; for
/// regression y lives inside `rows` at task.target_index.
struct Dataset {
  Eigen::MatrixXd rows;
  std::vector<int> labels;
  TaskKind task;
  std::vector<std::string> feature_names;

  Index num_rows() const noexcept { return static_cast<Index>(rows.rows()); }
  Index num_columns() const noexcept { return static_cast<Index>(rows.cols()); }
  /// Acquirable features: every column except the regression target.
  Index num_features() const noexcept;

  /// Feature values of one row with the regression target removed.
  Eigen::VectorXd features(Index row) const;
  double target(Index row) const;

  Dataset subset(std::span<const Index> row_indices) const;
  void validate() const;
};

/// Maps an acquirable feature index to its column in the joint row layout.
inline Index feature_to_column(Index feature, const TaskKind& task) noexcept {
  if (task.is_classification()) return feature;
  return feature < task.target_index ? feature : feature + 1;
}

/// Per-column min-max statistics. Constant columns map to 0.
struct MinMaxStats {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  static MinMaxStats fit(const Dataset& ds);
  Dataset apply(const Dataset& ds) const;
  double apply_value(Index column, double v) const;
};

inline Dataset normalize(const Dataset& ds) { return MinMaxStats::fit(ds).apply(ds); }

struct SplitIndices {
  IndexSet train, val, test;
};

struct Split {
  Dataset train, val, test;
  SplitIndices indices;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

SplitIndices split_indices(Index n, SplitRatios ratios, std::uint64_t seed);
Split split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed);

}  // namespace dfa
