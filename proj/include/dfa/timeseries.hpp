#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfa/acquisition.hpp"
#include "dfa/condmodel.hpp"
#include "dfa/core.hpp"
#include "json.hpp"

namespace dfa {

/// Observed state over T time steps of `step_width` features each; feature
/// f belongs to step f / step_width. Steps can only be acquired in order.
class ChronoState {
 public:
  ChronoState(Index num_steps, Index step_width);

  Index num_steps() const noexcept { return num_steps_; }
  Index step_width() const noexcept { return step_width_; }
  const ObservedState& observed() const noexcept { return state_; }
  const IndexSet& acquired_steps() const noexcept { return steps_; }
  /// -1 when nothing has been acquired.
  long long max_step() const noexcept { return steps_.empty() ? -1 : static_cast<long long>(steps_.back()); }
  IndexSet remaining_steps() const;
  IndexSet step_features(Index t) const;

  /// Reveals every feature of step t from the full instance.
  ChronoState acquire_step(Index t, const Eigen::VectorXd& instance) const;

 private:
  Index num_steps_;
  Index step_width_;
  ObservedState state_;
  IndexSet steps_;
};

struct DirichletParams {
  IndexSet support;
  std::vector<double> concentrations;

  void validate() const;
  std::vector<double> mean() const;
};

inline constexpr double kDefaultAlpha = 10.0;

/// Concentration alpha * (T - t) for t = max_o + 1 .. T - 1.
DirichletParams prior_params(Index num_steps, long long max_observed_step, double alpha);

/// Default draw count: 5 per remaining step.
inline std::size_t default_posterior_draws(std::size_t remaining_steps) { return 5 * remaining_steps; }

/// Block CMI of each remaining step, clamped at zero.
std::vector<double> step_informativeness(const ClassConditionalModel& ccm, const ChronoState& chrono,
                                         std::size_t n_samples, std::uint64_t seed);

/// Draws N steps with P(t) proportional to exp(I_t); counts sum to N.
std::vector<std::size_t> counts_from_informativeness(const std::vector<double>& info, std::size_t n_draws,
                                                     std::uint64_t seed);

std::vector<std::size_t> informativeness_counts(const ClassConditionalModel& ccm, const ChronoState& chrono,
                                                std::size_t n_draws, std::size_t n_samples, std::uint64_t seed);

DirichletParams posterior_params(const DirichletParams& prior, const std::vector<std::size_t>& counts);

/// argmax of one Dirichlet draw (normalized Gamma variates); ties go early.
Index select_time_step(const DirichletParams& post, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationBin {
  double lo = 0.0;
  double hi = 1.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

class CalibrationMap {
 public:
  CalibrationMap() = default;
  explicit CalibrationMap(std::vector<std::vector<CalibrationBin>> per_step) : per_step_(std::move(per_step)) {}

  Index num_steps() const noexcept { return per_step_.size(); }
  const std::vector<CalibrationBin>& bins(Index t) const { return per_step_.at(t); }
  double calibrate(Index t, double confidence) const;

 private:
  std::vector<std::vector<CalibrationBin>> per_step_;
};

/// (confidence, correct) pairs collected at one time step.
struct ConfidencePair {
  double confidence = 0.0;
  bool correct = false;
};

inline constexpr int kCalibrationBins = 10;

CalibrationMap fit_calibration(const std::vector<std::vector<ConfidencePair>>& per_step, int bins = kCalibrationBins);

/// Expected calibration error with equal-width bins.
double expected_calibration_error(const std::vector<ConfidencePair>& pairs, int bins = kCalibrationBins);

nlohmann::json to_json(const CalibrationMap& map);
CalibrationMap calibration_from_json(const nlohmann::json& j);

/// Pairs from acquiring steps 0..t in order, for every t, on each row.
std::vector<std::vector<ConfidencePair>> collect_confidence_pairs(const ClassConditionalModel& ccm,
                                                                  const Dataset& data, Index num_steps,
                                                                  Index step_width);

// ---------------------------------------------------------------------------
// Episodes

struct ChronoStep {
  Index step = 0;
  std::vector<double> informativeness;  // aligned with the remaining steps; empty for consecutive runs
  std::vector<double> posterior_concentrations;
  Prediction prediction;
  double calibrated_confidence = 0.0;
};

struct ChronoTrace {
  Index row = 0;
  int truth = 0;
  std::vector<ChronoStep> steps;

  Index stop_step() const { return steps.empty() ? 0 : steps.back().step; }
  const Prediction& final_prediction() const { return steps.back().prediction; }
};

/// Steps 0, 1, 2, ... until the calibrated max posterior reaches tau.
ChronoTrace run_consecutive(const ClassConditionalModel& ccm, const Eigen::VectorXd& instance, double tau,
                            const CalibrationMap& calib, Index num_steps, Index step_width);

struct ChronoPolicyOptions {
  double alpha = kDefaultAlpha;
  std::size_t n_draws = 0;  // 0: default_posterior_draws
  std::size_t n_samples = kDefaultCmiSamples;
  std::size_t max_steps = 0;  // 0: no budget
  double tau = 1.1;           // > 1 disables confidence stopping
  const CalibrationMap* calib = nullptr;
};

/// Dirichlet-posterior step selection, recomputing informativeness every step.
ChronoTrace run_chrono_episode(const ClassConditionalModel& ccm, const Eigen::VectorXd& instance, Index num_steps,
                               Index step_width, const ChronoPolicyOptions& options, std::uint64_t seed);

struct TimeStepRow {
  Index time_step = 0;
  double accuracy = 0.0;
  double mean_calibrated_confidence = 0.0;
};

/// Accuracy and mean calibrated confidence after acquiring steps 0..t.
std::vector<TimeStepRow> time_step_table(const ClassConditionalModel& ccm, const Dataset& data,
                                         const CalibrationMap& calib, Index num_steps, Index step_width);
std::string format_time_step_csv(const std::vector<TimeStepRow>& rows);

}  // namespace dfa
