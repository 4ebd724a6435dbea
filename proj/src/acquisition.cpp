#include "dfa/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dfa/parallel.hpp"

namespace dfa {
namespace {

Index argmax_lowest(const std::vector<double>& v) {
  Index best = 0;
  for (Index k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

ObservedState to_density_state(const Engine& engine, const ObservedState& state) {
  const Index dim = engine.joint().density.dim();
  return ObservedState(dim, engine.density_indices(state.observed()), state.values());
}

IndexSet apply_pruner(const Dag& dag, const Engine& engine, const ObservedState& state, const IndexSet& unobserved) {
  const NodeMap map{engine.task(), engine.num_features()};
  if (dag.size() != map.num_nodes())
    throw Error(ErrorCode::DimensionMismatch, "pruning graph has " + std::to_string(dag.size()) + " nodes, expected " +
                                                  std::to_string(map.num_nodes()));
  IndexSet o, u;
  for (Index f : state.observed()) o.push_back(map.node_of(f));
  for (Index f : unobserved) u.push_back(map.node_of(f));
  IndexSet keep;
  for (Index node : prune_candidates(dag, map.y_node(), o, u)) keep.push_back(map.feature_of(node));
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace

Policy Policy::fixed(IndexSet order) {
  Policy p;
  p.kind = Kind::Static;
  p.order = std::move(order);
  return p;
}

void Policy::validate(Index num_features) const {
  if (kind == Kind::Dynamic) return;
  IndexSet sorted = order;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() != num_features) throw Error(ErrorCode::InvalidArgument, "static order must list every feature once");
  for (Index k = 0; k < sorted.size(); ++k)
    if (sorted[k] != k) throw Error(ErrorCode::InvalidArgument, "static order is not a permutation");
}

StoppingRule StoppingRule::budget(std::size_t max_acquisitions) {
  StoppingRule r;
  r.kind = Kind::Budget;
  r.max_acquisitions = max_acquisitions;
  return r;
}

StoppingRule StoppingRule::confidence(double tau) {
  StoppingRule r;
  r.kind = Kind::Confidence;
  r.threshold = tau;
  return r;
}

void StoppingRule::validate(Index num_features, const TaskKind& task) const {
  if (kind == Kind::Budget && max_acquisitions > num_features)
    throw Error(ErrorCode::InvalidArgument, "budget exceeds the number of features");
  if (kind == Kind::Confidence) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(ErrorCode::InvalidArgument, "confidence threshold must lie in (0, 1]");
    if (!task.is_classification()) throw Error(ErrorCode::InvalidArgument, "confidence stopping needs a classification task");
  }
}

const Prediction& EpisodeTrace::prediction_at(std::size_t k) const noexcept {
  if (k == 0 || steps.empty()) return initial;
  return steps[std::min(k, steps.size()) - 1].prediction;
}

CmiEstimate feature_cmi(const Engine& engine, Index feature, const ObservedState& state, std::size_t n_samples,
                        std::uint64_t seed) {
  if (engine.is_classification()) return cmi_classification(engine.classes(), feature, state, n_samples, seed);
  const auto& joint = engine.joint();
  return cmi_regression(joint.density, engine.density_index(feature), to_density_state(engine, state),
                        joint.target_slot, n_samples, seed);
}

Selection next_feature_dynamic(const Engine& engine, const ObservedState& state, const IndexSet& candidates,
                               std::size_t n_samples, std::uint64_t seed) {
  if (candidates.empty()) throw Error(ErrorCode::NoCandidates, "no candidate features left");
  IndexSet sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  Selection sel;
  sel.scores.resize(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const Index f = sorted[k];
    if (f >= state.dim()) throw Error(ErrorCode::IndexOutOfRange, "candidate " + std::to_string(f));
    sel.scores[k] = {f, feature_cmi(engine, f, state, n_samples, derive_seed(seed, {f})).value};
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < sel.scores.size(); ++k)
    if (sel.scores[k].cmi > sel.scores[best].cmi) best = k;
  sel.feature = sel.scores[best].feature;
  return sel;
}

Prediction predict(const Engine& engine, const ObservedState& state) {
  Prediction p;
  const Eigen::VectorXd x = state.values_vector();
  if (engine.is_classification()) {
    p.posterior = class_posterior(engine.classes(), x, state.observed());
    p.label = static_cast<int>(argmax_lowest(p.posterior));
    p.confidence = p.posterior[static_cast<std::size_t>(p.label)];
    p.value = p.label;
    return p;
  }
  const auto& joint = engine.joint();
  const ConditionalDistribution cd =
      condition(joint.density, x, engine.density_indices(state.observed()), IndexSet{joint.target_slot});
  p.value = cd.mean()(0);
  return p;
}

EpisodeTrace run_episode(const Engine& engine, const Eigen::VectorXd& instance, const Policy& policy,
                         const StoppingRule& stop, const EpisodeOptions& options, std::uint64_t seed) {
  const Index d = engine.num_features();
  if (static_cast<Index>(instance.size()) != d)
    throw Error(ErrorCode::DimensionMismatch, "instance has " + std::to_string(instance.size()) + " features, model " +
                                                  std::to_string(d));
  policy.validate(d);
  stop.validate(d, engine.task());

  EpisodeTrace trace;
  ObservedState state(d);
  trace.initial = predict(engine, state);
  const Prediction* current = &trace.initial;
  for (std::size_t step = 0;; ++step) {
    if (stop.kind == StoppingRule::Kind::Budget && step >= stop.max_acquisitions) break;
    if (stop.kind == StoppingRule::Kind::Confidence && current->confidence >= stop.threshold) break;
    const IndexSet unobserved = state.unobserved();
    if (unobserved.empty()) break;

    StepRecord rec;
    if (policy.kind == Policy::Kind::Dynamic) {
      IndexSet candidates = unobserved;
      if (options.pruner) {
        candidates = apply_pruner(*options.pruner, engine, state, unobserved);
        std::set_difference(unobserved.begin(), unobserved.end(), candidates.begin(), candidates.end(),
                            std::back_inserter(rec.pruned));
      }
      if (candidates.empty()) break;
      Selection sel = next_feature_dynamic(engine, state, candidates, options.n_samples, derive_seed(seed, {step}));
      rec.chosen = sel.feature;
      rec.scores = std::move(sel.scores);
    } else {
      rec.chosen = policy.order[step];
    }
    rec.value = instance(static_cast<Eigen::Index>(rec.chosen));
    state = state.acquire(rec.chosen, rec.value);
    rec.prediction = predict(engine, state);
    trace.steps.push_back(std::move(rec));
    current = &trace.steps.back().prediction;
  }
  return trace;
}

IndexSet static_order(const Engine& engine, const Dataset& reference, std::size_t n_samples, std::uint64_t seed) {
  if (reference.num_rows() == 0) throw Error(ErrorCode::EmptyValidation, "static order needs reference rows");
  const Index d = engine.num_features();
  const Index n = reference.num_rows();
  std::vector<Eigen::VectorXd> rows(n);
  for (Index r = 0; r < n; ++r) rows[r] = reference.features(r);
  std::vector<ObservedState> states(n, ObservedState(d));

  IndexSet order;
  for (Index step = 0; step < d; ++step) {
    IndexSet remaining;
    for (Index f = 0; f < d; ++f)
      if (std::find(order.begin(), order.end(), f) == order.end()) remaining.push_back(f);
    std::vector<std::vector<double>> per_row(n);
    parallel_for(n, [&](std::size_t r) {
      per_row[r].resize(remaining.size());
      for (std::size_t k = 0; k < remaining.size(); ++k)
        per_row[r][k] = feature_cmi(engine, remaining[k], states[r], n_samples, derive_seed(seed, {step, remaining[k], r})).value;
    });
    std::vector<double> avg(remaining.size(), 0.0);
    for (Index r = 0; r < n; ++r)
      for (std::size_t k = 0; k < remaining.size(); ++k) avg[k] += per_row[r][k];
    const Index chosen = remaining[argmax_lowest(avg)];
    order.push_back(chosen);
    for (Index r = 0; r < n; ++r) states[r] = states[r].acquire(chosen, rows[r](static_cast<Eigen::Index>(chosen)));
  }
  return order;
}

std::vector<EpisodeTrace> run_episodes(const Engine& engine, const Dataset& data, const Policy& policy,
                                       const StoppingRule& stop, const EpisodeOptions& options,
                                       std::uint64_t base_seed) {
  std::vector<EpisodeTrace> out(data.num_rows());
  parallel_for(out.size(), [&](std::size_t r) {
    out[r] = run_episode(engine, data.features(r), policy, stop, options, base_seed + r);
    out[r].row = r;
    out[r].truth = data.target(r);
  });
  return out;
}

std::vector<CurvePoint> metric_curve(const std::vector<EpisodeTrace>& traces, const TaskKind& task,
                                     std::size_t max_steps) {
  std::vector<CurvePoint> curve;
  if (traces.empty()) return curve;
  const double n = static_cast<double>(traces.size());
  for (std::size_t k = 0; k <= max_steps; ++k) {
    CurvePoint pt;
    pt.step = k;
    if (task.is_classification()) {
      double hits = 0.0;
      for (const auto& t : traces) hits += t.prediction_at(k).label == static_cast<int>(std::lround(t.truth)) ? 1.0 : 0.0;
      const double acc = hits / n;
      pt.metric_mean = acc;
      pt.metric_stderr = std::sqrt(acc * (1.0 - acc) / n);
    } else {
      double sum = 0.0, sum_sq = 0.0;
      for (const auto& t : traces) {
        const double e = t.prediction_at(k).value - t.truth;
        sum += e * e;
        sum_sq += e * e * e * e;
      }
      const double mse = sum / n;
      const double var = n > 1 ? std::max(0.0, (sum_sq - n * mse * mse) / (n - 1)) : 0.0;
      pt.metric_mean = std::sqrt(mse);
      pt.metric_stderr = mse > 0.0 ? std::sqrt(var / n) / (2.0 * pt.metric_mean) : 0.0;
    }
    curve.push_back(pt);
  }
  return curve;
}

double mean_steps(const std::vector<EpisodeTrace>& traces) {
  if (traces.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : traces) s += static_cast<double>(t.steps_taken());
  return s / static_cast<double>(traces.size());
}

namespace {

nlohmann::json prediction_json(const Prediction& p, const TaskKind& task) {
  if (task.is_classification())
    return {{"label", p.label}, {"posterior", p.posterior}, {"confidence", p.confidence}};
  return {{"mean", p.value}};
}

}  // namespace

nlohmann::json to_json(const EpisodeTrace& trace, const TaskKind& task) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& c : s.scores) scores.push_back({{"feature", c.feature}, {"cmi", c.cmi}});
    steps.push_back({{"feature", s.chosen},
                     {"value", s.value},
                     {"scores", scores},
                     {"pruned", s.pruned},
                     {"prediction", prediction_json(s.prediction, task)}});
  }
  nlohmann::json out{{"row", trace.row},
                     {"initial", prediction_json(trace.initial, task)},
                     {"steps", steps},
                     {"steps_taken", trace.steps_taken()},
                     {"final", prediction_json(trace.final_prediction(), task)}};
  if (task.is_classification())
    out["truth"] = std::lround(trace.truth);
  else
    out["truth"] = trace.truth;
  return out;
}

void write_traces_jsonl(const std::vector<EpisodeTrace>& traces, const TaskKind& task,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& t : traces) out << to_json(t, task).dump() << '\n';
}

std::string format_curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "step,metric_mean,metric_stderr\n";
  for (const auto& p : curve) os << p.step << ',' << p.metric_mean << ',' << p.metric_stderr << '\n';
  return os.str();
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << format_curve_csv(curve);
}

std::string format_curve_svg(const std::vector<CurveSeries>& series, const std::string& y_label) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 20, B = 50;
  double x_max = 1, y_min = 1e300, y_max = -1e300;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      x_max = std::max(x_max, static_cast<double>(p.step));
      y_min = std::min(y_min, p.metric_mean - p.metric_stderr);
      y_max = std::max(y_max, p.metric_mean + p.metric_stderr);
    }
  if (!(y_max > y_min)) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  auto px = [&](double x) { return L + (W - L - R) * x / x_max; };
  auto py = [&](double y) { return H - B - (H - T - B) * (y - y_min) / (y_max - y_min); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (W + L) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">acquired features</text>\n";
  os << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2 << ")\" text-anchor=\"middle\">"
     << y_label << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = y_min + (y_max - y_min) * t / 4.0;
    os << "<text x=\"" << L - 5 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
       << std::setprecision(3) << y << std::setprecision(2) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % 5];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : series[s].points) os << px(static_cast<double>(p.step)) << ',' << py(p.metric_mean) << ' ';
    os << "\"/>\n";
    for (const auto& p : series[s].points) {
      const double x = px(static_cast<double>(p.step));
      os << "<line x1=\"" << x << "\" y1=\"" << py(p.metric_mean - p.metric_stderr) << "\" x2=\"" << x << "\" y2=\""
         << py(p.metric_mean + p.metric_stderr) << "\" stroke=\"" << c << "\"/>\n";
    }
    os << "<text x=\"" << W - R - 100 << "\" y=\"" << T + 15 + 15 * static_cast<double>(s) << "\" fill=\"" << c
       << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace dfa
