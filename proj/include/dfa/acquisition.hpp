#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfa/bn.hpp"
#include "dfa/cmi.hpp"
#include "dfa/condmodel.hpp"
#include "dfa/core.hpp"
#include "json.hpp"

namespace dfa {

struct Policy {
  enum class Kind { Dynamic, Static };
  Kind kind = Kind::Dynamic;
  IndexSet order;  // Static only

  static Policy dynamic() { return {}; }
  static Policy fixed(IndexSet order);
  void validate(Index num_features) const;
};

struct StoppingRule {
  enum class Kind { Budget, Confidence, Exhaustion };
  Kind kind = Kind::Exhaustion;
  std::size_t max_acquisitions = 0;
  double threshold = 1.0;

  static StoppingRule budget(std::size_t max_acquisitions);
  static StoppingRule confidence(double tau);
  static StoppingRule exhaustion() { return {}; }
  void validate(Index num_features, const TaskKind& task) const;
};

/// Classification: label, posterior and its max. Regression: value only.
struct Prediction {
  int label = -1;
  double value = 0.0;
  std::vector<double> posterior;
  double confidence = 0.0;
};

struct CandidateScore {
  Index feature = 0;
  double cmi = 0.0;
};

struct StepRecord {
  Index chosen = 0;
  double value = 0.0;
  std::vector<CandidateScore> scores;  // empty under a static policy
  IndexSet pruned;                     // unobserved features skipped by the pruner this step
  Prediction prediction;               // after acquiring `chosen`
};

struct EpisodeTrace {
  Index row = 0;
  double truth = 0.0;
  Prediction initial;  // before any acquisition
  std::vector<StepRecord> steps;

  std::size_t steps_taken() const noexcept { return steps.size(); }
  const Prediction& final_prediction() const noexcept { return steps.empty() ? initial : steps.back().prediction; }
  /// Prediction after `k` acquisitions; later steps repeat the last one.
  const Prediction& prediction_at(std::size_t k) const noexcept;
};

struct Selection {
  Index feature = 0;
  std::vector<CandidateScore> scores;
};

/// CMI of one unobserved feature with the target. `state` is in feature space.
CmiEstimate feature_cmi(const Engine& engine, Index feature, const ObservedState& state, std::size_t n_samples,
                        std::uint64_t seed);

Selection next_feature_dynamic(const Engine& engine, const ObservedState& state, const IndexSet& candidates,
                               std::size_t n_samples, std::uint64_t seed);

Prediction predict(const Engine& engine, const ObservedState& state);

struct EpisodeOptions {
  std::size_t n_samples = kDefaultCmiSamples;
  const Dag* pruner = nullptr;  // node layout per NodeMap
};

EpisodeTrace run_episode(const Engine& engine, const Eigen::VectorXd& instance, const Policy& policy,
                         const StoppingRule& stop, const EpisodeOptions& options, std::uint64_t seed);

/// Greedy order by CMI averaged over the reference rows, each conditioned on
/// its own values of the features already ordered.
IndexSet static_order(const Engine& engine, const Dataset& reference, std::size_t n_samples, std::uint64_t seed);

/// One episode per row, run in parallel with seed base_seed + row.
std::vector<EpisodeTrace> run_episodes(const Engine& engine, const Dataset& data, const Policy& policy,
                                       const StoppingRule& stop, const EpisodeOptions& options,
                                       std::uint64_t base_seed);

struct CurvePoint {
  std::size_t step = 0;
  double metric_mean = 0.0;
  double metric_stderr = 0.0;
};

/// Accuracy (classification) or RMSE (regression) after 0..max_steps
/// acquisitions. RMSE standard error uses the delta method.
std::vector<CurvePoint> metric_curve(const std::vector<EpisodeTrace>& traces, const TaskKind& task,
                                     std::size_t max_steps);

double mean_steps(const std::vector<EpisodeTrace>& traces);

nlohmann::json to_json(const EpisodeTrace& trace, const TaskKind& task);
void write_traces_jsonl(const std::vector<EpisodeTrace>& traces, const TaskKind& task,
                        const std::filesystem::path& path);
std::string format_curve_csv(const std::vector<CurvePoint>& curve);
void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

struct CurveSeries {
  std::string label;
  std::vector<CurvePoint> points;
};
std::string format_curve_svg(const std::vector<CurveSeries>& series, const std::string& y_label);

}  // namespace dfa
