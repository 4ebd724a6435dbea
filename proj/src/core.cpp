#include "dfa/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dfa/rng.hpp"

namespace dfa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AlreadyObserved: return "AlreadyObserved";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::OverlappingSets: return "OverlappingSets";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TargetObserved: return "TargetObserved";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::InvalidNode: return "InvalidNode";
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::NoValidExtension: return "NoValidExtension";
    case ErrorCode::NoRemainingSteps: return "NoRemainingSteps";
    case ErrorCode::Misaligned: return "Misaligned";
    case ErrorCode::EmptyValidation: return "EmptyValidation";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularCovariance:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::NoValidExtension:
      return ErrorCategory::Numeric;
    case ErrorCode::TooFewRows:
    case ErrorCode::ParseError:
    case ErrorCode::RaggedRows:
    case ErrorCode::Io:
    case ErrorCode::CyclicGraph:
    case ErrorCode::EmptyValidation:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Config;
  }
}

// ---------------------------------------------------------------------------
// ObservedState

ObservedState::ObservedState(Index dim, IndexSet observed, std::vector<double> values)
    : dim_(dim), observed_(std::move(observed)), values_(std::move(values)) {
  if (observed_.size() != values_.size())
    throw Error(ErrorCode::DimensionMismatch, "observed indices and values differ in length");
  IndexSet sorted = observed_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error(ErrorCode::AlreadyObserved, "duplicate observed index");
  if (!sorted.empty() && sorted.back() >= dim_)
    throw Error(ErrorCode::IndexOutOfRange, "observed index " + std::to_string(sorted.back()) + " >= dim");
}

bool ObservedState::contains(Index i) const noexcept {
  return std::find(observed_.begin(), observed_.end(), i) != observed_.end();
}

double ObservedState::value_of(Index i) const {
  auto it = std::find(observed_.begin(), observed_.end(), i);
  if (it == observed_.end()) throw Error(ErrorCode::IndexOutOfRange, "feature " + std::to_string(i) + " not observed");
  return values_[static_cast<std::size_t>(it - observed_.begin())];
}

IndexSet ObservedState::unobserved() const {
  IndexSet u;
  u.reserve(dim_ - observed_.size());
  for (Index i = 0; i < dim_; ++i)
    if (!contains(i)) u.push_back(i);
  return u;
}

long long ObservedState::max_observed() const noexcept {
  if (observed_.empty()) return -1;
  return static_cast<long long>(*std::max_element(observed_.begin(), observed_.end()));
}

ObservedState ObservedState::acquire(Index i, double v) const {
  if (i >= dim_) throw Error(ErrorCode::IndexOutOfRange, "feature " + std::to_string(i) + " >= dim " + std::to_string(dim_));
  if (contains(i)) throw Error(ErrorCode::AlreadyObserved, "feature " + std::to_string(i));
  ObservedState next = *this;
  next.observed_.push_back(i);
  next.values_.push_back(v);
  return next;
}

Eigen::VectorXd ObservedState::values_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(values_.data(), static_cast<Eigen::Index>(values_.size()));
}

// ---------------------------------------------------------------------------
// TaskKind / Dataset

TaskKind TaskKind::classification(int num_classes) {
  if (num_classes < 2) throw Error(ErrorCode::InvalidArgument, "classification needs K >= 2");
  TaskKind t;
  t.kind = Kind::Classification;
  t.num_classes = num_classes;
  return t;
}

TaskKind TaskKind::regression(Index target_index) {
  TaskKind t;
  t.kind = Kind::Regression;
  t.num_classes = 0;
  t.target_index = target_index;
  return t;
}

Index Dataset::num_features() const noexcept {
  return task.is_classification() ? num_columns() : num_columns() - 1;
}

Eigen::VectorXd Dataset::features(Index row) const {
  const Index f = num_features();
  Eigen::VectorXd x(static_cast<Eigen::Index>(f));
  for (Index j = 0; j < f; ++j)
    x(static_cast<Eigen::Index>(j)) = rows(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(feature_to_column(j, task)));
  return x;
}

double Dataset::target(Index row) const {
  if (task.is_classification()) return static_cast<double>(labels.at(row));
  return rows(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(task.target_index));
}

Dataset Dataset::subset(std::span<const Index> row_indices) const {
  Dataset out;
  out.task = task;
  out.feature_names = feature_names;
  out.rows.resize(static_cast<Eigen::Index>(row_indices.size()), rows.cols());
  for (std::size_t r = 0; r < row_indices.size(); ++r) {
    if (row_indices[r] >= num_rows()) throw Error(ErrorCode::IndexOutOfRange, "row index");
    out.rows.row(static_cast<Eigen::Index>(r)) = rows.row(static_cast<Eigen::Index>(row_indices[r]));
    if (task.is_classification()) out.labels.push_back(labels.at(row_indices[r]));
  }
  return out;
}

void Dataset::validate() const {
  if (task.is_classification()) {
    if (labels.size() != num_rows()) throw Error(ErrorCode::DimensionMismatch, "one label per row required");
    for (int y : labels)
      if (y < 0 || y >= task.num_classes)
        throw Error(ErrorCode::IndexOutOfRange, "class label " + std::to_string(y) + " outside [0, K)");
  } else {
    if (task.target_index >= num_columns()) throw Error(ErrorCode::IndexOutOfRange, "regression target column");
  }
  if (!feature_names.empty() && feature_names.size() != num_columns())
    throw Error(ErrorCode::DimensionMismatch, "feature_names must name every column");
  if (!rows.allFinite()) throw Error(ErrorCode::ParseError, "non-finite value in dataset");
}

// ---------------------------------------------------------------------------
// Normalization

MinMaxStats MinMaxStats::fit(const Dataset& ds) {
  if (ds.num_rows() == 0) throw Error(ErrorCode::TooFewRows, "cannot normalize an empty dataset");
  return {ds.rows.colwise().minCoeff().transpose(), ds.rows.colwise().maxCoeff().transpose()};
}

double MinMaxStats::apply_value(Index column, double v) const {
  const auto c = static_cast<Eigen::Index>(column);
  const double range = max(c) - min(c);
  if (!(range > 0.0)) return 0.0;
  return (v - min(c)) / range;
}

Dataset MinMaxStats::apply(const Dataset& ds) const {
  if (static_cast<Eigen::Index>(ds.num_columns()) != min.size())
    throw Error(ErrorCode::DimensionMismatch, "normalization statistics do not match dataset width");
  Dataset out = ds;
  for (Eigen::Index c = 0; c < out.rows.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows.rows(); ++r)
      out.rows(r, c) = apply_value(static_cast<Index>(c), ds.rows(r, c));
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

SplitIndices split_indices(Index n, SplitRatios ratios, std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "split ratios must sum to 1");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative");
  if (n < 10) throw Error(ErrorCode::TooFewRows, "need at least 10 rows to split, got " + std::to_string(n));

  IndexSet perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(derive_seed(seed, {0x5911u}));
  std::shuffle(perm.begin(), perm.end(), rng);

  const auto n_train = static_cast<Index>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_val = static_cast<Index>(std::llround(ratios.val * static_cast<double>(n)));
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Split split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed) {
  Split s;
  s.indices = split_indices(ds.num_rows(), ratios, seed);
  s.train = ds.subset(s.indices.train);
  s.val = ds.subset(s.indices.val);
  s.test = ds.subset(s.indices.test);
  return s;
}

}  // namespace dfa
