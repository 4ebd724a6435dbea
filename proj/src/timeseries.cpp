#include "dfa/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <iomanip>

#include "dfa/cmi.hpp"
#include "dfa/parallel.hpp"

namespace dfa {

ChronoState::ChronoState(Index num_steps, Index step_width)
    : num_steps_(num_steps), step_width_(step_width), state_(num_steps * step_width) {
  if (num_steps == 0 || step_width == 0) throw Error(ErrorCode::InvalidArgument, "time series needs steps and features");
}

IndexSet ChronoState::remaining_steps() const {
  IndexSet out;
  for (Index t = static_cast<Index>(max_step() + 1); t < num_steps_; ++t) out.push_back(t);
  return out;
}

IndexSet ChronoState::step_features(Index t) const {
  if (t >= num_steps_) throw Error(ErrorCode::IndexOutOfRange, "time step " + std::to_string(t));
  IndexSet out;
  for (Index k = 0; k < step_width_; ++k) out.push_back(t * step_width_ + k);
  return out;
}

ChronoState ChronoState::acquire_step(Index t, const Eigen::VectorXd& instance) const {
  if (t >= num_steps_) throw Error(ErrorCode::IndexOutOfRange, "time step " + std::to_string(t));
  if (static_cast<long long>(t) <= max_step())
    throw Error(ErrorCode::InvalidArgument, "time step " + std::to_string(t) + " is not after the last acquired step");
  if (static_cast<Index>(instance.size()) != state_.dim()) throw Error(ErrorCode::DimensionMismatch, "instance length");
  ChronoState next = *this;
  for (Index f : step_features(t)) next.state_ = next.state_.acquire(f, instance(static_cast<Eigen::Index>(f)));
  next.steps_.push_back(t);
  return next;
}

void DirichletParams::validate() const {
  if (support.empty()) throw Error(ErrorCode::NoRemainingSteps, "empty Dirichlet support");
  if (support.size() != concentrations.size()) throw Error(ErrorCode::Misaligned, "support and concentrations differ");
  for (double c : concentrations)
    if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "concentrations must be positive");
}

std::vector<double> DirichletParams::mean() const {
  double total = 0.0;
  for (double c : concentrations) total += c;
  std::vector<double> out;
  for (double c : concentrations) out.push_back(c / total);
  return out;
}

DirichletParams prior_params(Index num_steps, long long max_observed_step, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be positive");
  if (max_observed_step + 1 >= static_cast<long long>(num_steps))
    throw Error(ErrorCode::NoRemainingSteps, "no time steps remain after step " + std::to_string(max_observed_step));
  DirichletParams p;
  for (auto t = static_cast<Index>(max_observed_step + 1); t < num_steps; ++t) {
    p.support.push_back(t);
    p.concentrations.push_back(alpha * static_cast<double>(num_steps - t));
  }
  return p;
}

std::vector<double> step_informativeness(const ClassConditionalModel& ccm, const ChronoState& chrono,
                                         std::size_t n_samples, std::uint64_t seed) {
  const IndexSet steps = chrono.remaining_steps();
  if (steps.empty()) throw Error(ErrorCode::NoRemainingSteps, "all time steps acquired");
  std::vector<double> info;
  for (Index t : steps) {
    const double v =
        cmi_classification_block(ccm, chrono.step_features(t), chrono.observed(), n_samples, derive_seed(seed, {t}))
            .value;
    info.push_back(std::max(0.0, v));
  }
  return info;
}

std::vector<std::size_t> counts_from_informativeness(const std::vector<double>& info, std::size_t n_draws,
                                                     std::uint64_t seed) {
  if (info.empty()) throw Error(ErrorCode::NoRemainingSteps, "no steps to draw from");
  std::vector<double> w;
  for (double v : info) w.push_back(std::max(0.0, v));
  softmax_inplace(w);
  Rng rng(seed);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::vector<std::size_t> counts(info.size(), 0);
  for (std::size_t n = 0; n < n_draws; ++n) ++counts[pick(rng)];
  return counts;
}

std::vector<std::size_t> informativeness_counts(const ClassConditionalModel& ccm, const ChronoState& chrono,
                                                std::size_t n_draws, std::size_t n_samples, std::uint64_t seed) {
  const auto info = step_informativeness(ccm, chrono, n_samples, derive_seed(seed, {1}));
  return counts_from_informativeness(info, n_draws, derive_seed(seed, {2}));
}

DirichletParams posterior_params(const DirichletParams& prior, const std::vector<std::size_t>& counts) {
  if (counts.size() != prior.support.size()) throw Error(ErrorCode::Misaligned, "counts not aligned with the support");
  DirichletParams post = prior;
  for (std::size_t k = 0; k < counts.size(); ++k) post.concentrations[k] += static_cast<double>(counts[k]);
  return post;
}

Index select_time_step(const DirichletParams& post, std::uint64_t seed) {
  post.validate();
  if (post.support.size() == 1) return post.support.front();
  Rng rng(seed);
  std::vector<double> draws;
  double total = 0.0;
  for (double c : post.concentrations) {
    std::gamma_distribution<double> g(c, 1.0);
    draws.push_back(g(rng));
    total += draws.back();
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < draws.size(); ++k)
    if (draws[k] / total > draws[best] / total) best = k;
  return post.support[best];
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

std::size_t bin_of(double confidence, std::size_t bins) {
  const double c = std::clamp(confidence, 0.0, 1.0);
  return std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1);
}

// Pool-adjacent-violators on (value, weight), producing a non-decreasing fit.
std::vector<double> isotonic(const std::vector<double>& v, const std::vector<double>& w) {
  struct Block {
    double sum, weight;
    std::size_t len;
  };
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < v.size(); ++k) {
    blocks.push_back({v[k] * w[k], w[k], 1});
    while (blocks.size() > 1) {
      const Block& b = blocks.back();
      const Block& a = blocks[blocks.size() - 2];
      if (a.sum / a.weight <= b.sum / b.weight) break;
      Block merged{a.sum + b.sum, a.weight + b.weight, a.len + b.len};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  for (const Block& b : blocks) out.insert(out.end(), b.len, b.sum / b.weight);
  return out;
}

}  // namespace

double CalibrationMap::calibrate(Index t, double confidence) const {
  const auto& b = bins(t);
  return b[bin_of(confidence, b.size())].accuracy;
}

CalibrationMap fit_calibration(const std::vector<std::vector<ConfidencePair>>& per_step, int bins) {
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "calibration needs at least two bins");
  if (per_step.empty()) throw Error(ErrorCode::EmptyValidation, "no time steps to calibrate");
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::vector<CalibrationBin>> out;
  for (std::size_t t = 0; t < per_step.size(); ++t) {
    if (per_step[t].empty())
      throw Error(ErrorCode::EmptyValidation, "time step " + std::to_string(t) + " has no validation pairs");
    std::vector<CalibrationBin> table(nb);
    std::vector<double> hits(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      table[b].lo = static_cast<double>(b) / static_cast<double>(nb);
      table[b].hi = static_cast<double>(b + 1) / static_cast<double>(nb);
    }
    for (const auto& p : per_step[t]) {
      const std::size_t b = bin_of(p.confidence, nb);
      ++table[b].count;
      hits[b] += p.correct ? 1.0 : 0.0;
    }
    std::vector<std::size_t> filled;
    std::vector<double> vals, weights;
    for (std::size_t b = 0; b < nb; ++b)
      if (table[b].count > 0) {
        filled.push_back(b);
        vals.push_back(hits[b] / static_cast<double>(table[b].count));
        weights.push_back(static_cast<double>(table[b].count));
      }
    const std::vector<double> smooth = isotonic(vals, weights);
    for (std::size_t k = 0; k < filled.size(); ++k) table[filled[k]].accuracy = smooth[k];
    // empty bins take the nearest populated bin (the lower one on ties)
    for (std::size_t b = 0; b < nb; ++b) {
      if (table[b].count > 0) continue;
      std::size_t best = filled.front();
      for (std::size_t f : filled) {
        const auto dist = [&](std::size_t x) { return x > b ? x - b : b - x; };
        if (dist(f) < dist(best)) best = f;
      }
      table[b].accuracy = table[best].accuracy;
    }
    out.push_back(std::move(table));
  }
  return CalibrationMap(std::move(out));
}

double expected_calibration_error(const std::vector<ConfidencePair>& pairs, int bins) {
  if (pairs.empty()) return 0.0;
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<double> conf(nb, 0.0), hits(nb, 0.0), count(nb, 0.0);
  for (const auto& p : pairs) {
    const std::size_t b = bin_of(p.confidence, nb);
    conf[b] += p.confidence;
    hits[b] += p.correct ? 1.0 : 0.0;
    count[b] += 1.0;
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < nb; ++b)
    if (count[b] > 0) ece += std::abs(hits[b] - conf[b]);
  return ece / static_cast<double>(pairs.size());
}

nlohmann::json to_json(const CalibrationMap& map) {
  nlohmann::json out = nlohmann::json::array();
  for (Index t = 0; t < map.num_steps(); ++t) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& b : map.bins(t))
      table.push_back({{"lo", b.lo}, {"hi", b.hi}, {"accuracy", b.accuracy}, {"count", b.count}});
    out.push_back({{"time_step", t}, {"bins", table}});
  }
  return out;
}

CalibrationMap calibration_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "calibration must be a JSON array");
  std::vector<std::vector<CalibrationBin>> per_step;
  for (const auto& step : j) {
    std::vector<CalibrationBin> table;
    for (const auto& b : step.at("bins")) {
      CalibrationBin cb{b.at("lo").get<double>(), b.at("hi").get<double>(), b.at("accuracy").get<double>(),
                        b.at("count").get<std::size_t>()};
      if (cb.accuracy < 0.0 || cb.accuracy > 1.0) throw Error(ErrorCode::ParseError, "bin accuracy outside [0, 1]");
      table.push_back(cb);
    }
    if (table.size() < 2) throw Error(ErrorCode::ParseError, "calibration step with fewer than two bins");
    per_step.push_back(std::move(table));
  }
  return CalibrationMap(std::move(per_step));
}

std::vector<std::vector<ConfidencePair>> collect_confidence_pairs(const ClassConditionalModel& ccm,
                                                                  const Dataset& data, Index num_steps,
                                                                  Index step_width) {
  if (data.num_rows() == 0) throw Error(ErrorCode::EmptyValidation, "no validation rows");
  std::vector<std::vector<ConfidencePair>> rows(data.num_rows());
  parallel_for(rows.size(), [&](std::size_t r) {
    const Eigen::VectorXd x = data.features(r);
    const int truth = data.labels[r];
    ChronoState chrono(num_steps, step_width);
    for (Index t = 0; t < num_steps; ++t) {
      chrono = chrono.acquire_step(t, x);
      const auto post = class_posterior(ccm, chrono.observed().values_vector(), chrono.observed().observed());
      const auto best = static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin());
      rows[r].push_back({post[static_cast<std::size_t>(best)], best == truth});
    }
  });
  std::vector<std::vector<ConfidencePair>> per_step(num_steps);
  for (const auto& r : rows)
    for (Index t = 0; t < num_steps; ++t) per_step[t].push_back(r[t]);
  return per_step;
}

// ---------------------------------------------------------------------------
// Episodes

namespace {

Prediction classify(const ClassConditionalModel& ccm, const ChronoState& chrono) {
  Prediction p;
  p.posterior = class_posterior(ccm, chrono.observed().values_vector(), chrono.observed().observed());
  p.label = static_cast<int>(std::max_element(p.posterior.begin(), p.posterior.end()) - p.posterior.begin());
  p.confidence = p.posterior[static_cast<std::size_t>(p.label)];
  p.value = p.label;
  return p;
}

}  // namespace

ChronoTrace run_consecutive(const ClassConditionalModel& ccm, const Eigen::VectorXd& instance, double tau,
                            const CalibrationMap& calib, Index num_steps, Index step_width) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must lie in [0, 1]");
  if (calib.num_steps() < num_steps) throw Error(ErrorCode::DimensionMismatch, "calibration covers too few time steps");
  ChronoTrace trace;
  ChronoState chrono(num_steps, step_width);
  for (Index t = 0; t < num_steps; ++t) {
    chrono = chrono.acquire_step(t, instance);
    ChronoStep s;
    s.step = t;
    s.prediction = classify(ccm, chrono);
    s.calibrated_confidence = calib.calibrate(t, s.prediction.confidence);
    trace.steps.push_back(std::move(s));
    if (trace.steps.back().calibrated_confidence >= tau) break;
  }
  return trace;
}

ChronoTrace run_chrono_episode(const ClassConditionalModel& ccm, const Eigen::VectorXd& instance, Index num_steps,
                               Index step_width, const ChronoPolicyOptions& options, std::uint64_t seed) {
  ChronoTrace trace;
  ChronoState chrono(num_steps, step_width);
  for (std::size_t k = 0;; ++k) {
    if (options.max_steps && k >= options.max_steps) break;
    const IndexSet remaining = chrono.remaining_steps();
    if (remaining.empty()) break;
    const std::uint64_t s = derive_seed(seed, {k});
    const DirichletParams prior = prior_params(num_steps, chrono.max_step(), options.alpha);
    const std::size_t n_draws = options.n_draws ? options.n_draws : default_posterior_draws(remaining.size());
    ChronoStep rec;
    rec.informativeness = step_informativeness(ccm, chrono, options.n_samples, derive_seed(s, {1}));
    const auto counts = counts_from_informativeness(rec.informativeness, n_draws, derive_seed(s, {2}));
    const DirichletParams post = posterior_params(prior, counts);
    rec.posterior_concentrations = post.concentrations;
    rec.step = select_time_step(post, derive_seed(s, {3}));
    chrono = chrono.acquire_step(rec.step, instance);
    rec.prediction = classify(ccm, chrono);
    rec.calibrated_confidence =
        options.calib ? options.calib->calibrate(rec.step, rec.prediction.confidence) : rec.prediction.confidence;
    trace.steps.push_back(std::move(rec));
    if (trace.steps.back().calibrated_confidence >= options.tau) break;
  }
  return trace;
}

std::vector<TimeStepRow> time_step_table(const ClassConditionalModel& ccm, const Dataset& data,
                                         const CalibrationMap& calib, Index num_steps, Index step_width) {
  const auto pairs = collect_confidence_pairs(ccm, data, num_steps, step_width);
  std::vector<TimeStepRow> out;
  for (Index t = 0; t < num_steps; ++t) {
    TimeStepRow row;
    row.time_step = t;
    for (const auto& p : pairs[t]) {
      row.accuracy += p.correct ? 1.0 : 0.0;
      row.mean_calibrated_confidence += calib.calibrate(t, p.confidence);
    }
    row.accuracy /= static_cast<double>(pairs[t].size());
    row.mean_calibrated_confidence /= static_cast<double>(pairs[t].size());
    out.push_back(row);
  }
  return out;
}

std::string format_time_step_csv(const std::vector<TimeStepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(10) << "time_step,accuracy,mean_calibrated_confidence\n";
  for (const auto& r : rows) os << r.time_step << ',' << r.accuracy << ',' << r.mean_calibrated_confidence << '\n';
  return os.str();
}

}  // namespace dfa
