#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dfa/acquisition.hpp"
#include "dfa/bn.hpp"
#include "dfa/data.hpp"
#include "dfa/model_io.hpp"
#include "dfa/parallel.hpp"
#include "dfa/timeseries.hpp"
#include "json.hpp"

namespace dfa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::optional<json> read_json_if_exists(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

struct DataArgs {
  std::string path;
  std::string label;
  bool regression = false;

  void add(CLI::App* app, bool required) {
    auto* o = app->add_option("--data", path, "CSV dataset");
    if (required) o->required();
    app->add_option("--label", label, "label column name or index (default: last column)");
    app->add_flag("--regression", regression, "treat the label column as a continuous target");
  }
  Dataset load() const {
    CsvOptions opt;
    opt.label_column = label;
    opt.regression = regression;
    return load_csv(path, opt);
  }
};

/// The dataset a model was fitted on, split and normalized the same way.
struct Prepared {
  ModelDocument doc;
  Split split;
};

constexpr SplitRatios kRatios{};

Prepared prepare(const std::string& model_path, DataArgs data) {
  Prepared p{load_model(model_path), {}};
  const json& meta = p.doc.metadata;
  if (data.path.empty()) data.path = meta.value("data", "");
  if (data.path.empty()) throw Error(ErrorCode::InvalidArgument, "no --data given and the model names no dataset");
  if (data.label.empty()) data.label = meta.value("label", "");
  if (!data.regression) data.regression = !p.doc.engine.is_classification();
  Dataset ds = data.load();
  if (p.doc.normalization) ds = p.doc.normalization->apply(ds);
  if (ds.num_features() != p.doc.engine.num_features())
    throw Error(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(ds.num_features()) +
                                                  " features, the model expects " +
                                                  std::to_string(p.doc.engine.num_features()));
  p.split = split(ds, kRatios, meta.value("split_seed", std::uint64_t{0}));
  return p;
}

Dataset head(const Dataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.num_rows()) return ds;
  IndexSet idx(limit);
  for (Index k = 0; k < limit; ++k) idx[k] = k;
  return ds.subset(idx);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
  std::string kind = "hierarchical";
  std::string out;
  Index n = 0;
  std::uint64_t seed = 0;
  std::string graph = "asia";
  std::string target;
  std::string task = "classification";
  Index steps = 12;
  bool per_feature_weights = false;
  bool no_normalize = false;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  json side{{"generator", a.kind}, {"seed", a.seed}};
  Dataset ds;
  std::optional<Dag> truth;
  if (a.kind == "hierarchical") {
    HierarchicalSpec spec;
    if (a.n) spec.n = a.n;
    spec.seed = a.seed;
    spec.per_feature_weights = a.per_feature_weights;
    spec.normalize = !a.no_normalize;
    const HierarchicalData h = gen_hierarchical(spec);
    ds = h.data;
    side["spec"] = {{"n", spec.n},           {"d", spec.d},   {"noise_var", spec.noise_var},
                    {"num_classes", spec.num_classes}, {"per_feature_weights", spec.per_feature_weights},
                    {"normalized", spec.normalize},    {"w1", h.w1}, {"w2", h.w2}};
  } else if (a.kind == "bn") {
    LinearGaussianBnSpec spec;
    spec.dag = fs::exists(a.graph) ? read_dag(a.graph) : fixture_dag(a.graph);
    if (a.n) spec.n = a.n;
    spec.seed = a.seed;
    if (a.task == "classification") {
      spec.target = LinearGaussianBnSpec::Target::Classification;
    } else if (a.task == "regression") {
      spec.target = LinearGaussianBnSpec::Target::Regression;
    } else if (a.task == "none") {
      spec.target = LinearGaussianBnSpec::Target::None;
    } else {
      throw Error(ErrorCode::InvalidArgument, "--task must be classification, regression or none");
    }
    if (spec.target != LinearGaussianBnSpec::Target::None) {
      const auto& names = spec.dag.names();
      const std::string target = a.target.empty() ? spec.dag.name(spec.dag.size() - 1) : a.target;
      const auto it = std::find(names.begin(), names.end(), target);
      if (it == names.end()) throw Error(ErrorCode::InvalidNode, "target node '" + target + "' not in the graph");
      spec.target_node = static_cast<Index>(it - names.begin());
    }
    const BnData b = gen_linear_gaussian_bn(spec);
    ds = b.data;
    truth = b.dag;
    side["spec"] = {{"n", spec.n},
                    {"graph", a.graph},
                    {"task", a.task},
                    {"target", spec.target == LinearGaussianBnSpec::Target::None ? "" : spec.dag.name(spec.target_node)},
                    {"noise_var", spec.noise_var},
                    {"threshold", b.threshold}};
    json w = json::array();
    for (const Edge& e : spec.dag.edges())
      w.push_back({spec.dag.name(e.from), spec.dag.name(e.to),
                   b.weights(static_cast<Eigen::Index>(e.from), static_cast<Eigen::Index>(e.to))});
    side["weights"] = w;
    side["dag"] = dag_to_json(b.dag);
  } else if (a.kind == "chain") {
    ChainTimeSeriesSpec spec;
    if (a.n) spec.n = a.n;
    spec.num_steps = a.steps;
    spec.seed = a.seed;
    ds = gen_chain_timeseries(spec);
    side["spec"] = {{"n", spec.n},     {"num_steps", spec.num_steps}, {"step_width", 1},
                    {"phi", spec.phi}, {"drift", spec.drift},          {"noise_var", spec.noise_var}};
  } else {
    throw Error(ErrorCode::InvalidArgument, "--kind must be hierarchical, bn or chain");
  }
  const fs::path csv = a.out;
  write_text(csv, format_csv(ds));
  fs::path sidecar = csv;
  sidecar.replace_extension(".json");
  side["task"] = ds.task.is_classification() ? "classification" : "regression";
  if (!ds.task.is_classification()) side["label"] = ds.feature_names[ds.task.target_index];
  write_json(sidecar, side);
  if (truth) {
    fs::path dagfile = csv;
    dagfile.replace_extension(".dag");
    write_text(dagfile, format_dag(*truth));
  }
  out << "wrote " << ds.num_rows() << " rows to " << csv.string() << " (sidecar " << sidecar.string() << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  DataArgs data;
  std::string engine = "gaussian";
  std::uint64_t seed = 0;
  std::string out;
  bool no_normalize = false;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  Dataset ds = a.data.load();
  const SplitIndices idx = split_indices(ds.num_rows(), kRatios, a.seed);
  ModelDocument doc;
  if (!a.no_normalize) {
    doc.normalization = MinMaxStats::fit(ds.subset(idx.train));
    ds = doc.normalization->apply(ds);
  }
  const Split sp = split(ds, kRatios, a.seed);
  EngineFitReport report;
  doc.engine = fit_engine(sp.train, EngineSpec::parse(a.engine), a.seed, &report);
  doc.feature_names = ds.feature_names;
  doc.metadata = {{"data", a.data.path},
                  {"label", a.data.label},
                  {"seed", a.seed},
                  {"split_seed", a.seed},
                  {"split", {kRatios.train, kRatios.val, kRatios.test}},
                  {"train_rows", sp.train.num_rows()},
                  {"converged", report.converged},
                  {"component_resets", report.component_resets}};
  if (!doc.engine.is_classification()) doc.metadata["rmse_units"] = a.no_normalize ? "raw" : "normalized";
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  save_model(doc, a.out);

  // full-information test metric
  const TaskKind task = doc.engine.task();
  double metric = 0.0;
  for (Index r = 0; r < sp.test.num_rows(); ++r) {
    const Eigen::VectorXd x = sp.test.features(r);
    IndexSet all(x.size());
    for (Index k = 0; k < all.size(); ++k) all[k] = k;
    const Prediction p = predict(doc.engine, ObservedState(x.size(), all, std::vector<double>(x.data(), x.data() + x.size())));
    metric += task.is_classification() ? (p.label == sp.test.labels[r] ? 1.0 : 0.0)
                                       : (p.value - sp.test.target(r)) * (p.value - sp.test.target(r));
  }
  metric /= static_cast<double>(std::max<Index>(1, sp.test.num_rows()));
  out << "fitted " << doc.engine.spec().to_string() << " on " << sp.train.num_rows() << " rows"
      << (report.converged ? "" : " (EM not converged)") << "\n";
  out << (task.is_classification() ? "full-information test accuracy: " : "full-information test RMSE: ")
      << fmt(task.is_classification() ? metric : std::sqrt(metric)) << "\n";
  out << "model written to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// learn-bn helpers

struct OracleArgs {
  std::string oracle;  // gaussian | permutation | engine
  std::optional<double> epsilon;
  int permutations = 100;
  std::size_t reference_rows = 200;
  std::size_t n_samples = kDefaultCmiSamples;
  std::uint64_t seed = 0;
};

LearnedBn learn_from_engine(const Engine& engine, const Dataset& reference, const OracleArgs& a) {
  const Dataset ref = head(reference, a.reference_rows);
  EngineCiOracle ci(engine, node_matrix(ref), a.epsilon.value_or(kDefaultMcEpsilon), a.n_samples, a.seed);
  return learn_bn(ci, a.seed, node_names(ref));
}

LearnedBn learn_from_rows(const Dataset& ds, const OracleArgs& a) {
  const Eigen::MatrixXd rows = node_matrix(ds);
  if (a.oracle == "permutation") {
    SampleGaussianCiOracle ci(rows, SampleGaussianCiOracle::PermutationNull{a.permutations, 0.95, a.seed});
    return learn_bn(ci, a.seed, node_names(ds));
  }
  SampleGaussianCiOracle ci(rows, a.epsilon.value_or(0.002));
  return learn_bn(ci, a.seed, node_names(ds));
}

/// Reorders a graph read from disk into the dataset's node layout. A single
/// unmatched node is taken to be the class column "y".
Dag align_dag(const Dag& g, const std::vector<std::string>& names) {
  if (g.names() == names) return g;
  if (g.size() != names.size())
    throw Error(ErrorCode::DimensionMismatch, "graph has " + std::to_string(g.size()) + " nodes, the dataset " +
                                                  std::to_string(names.size()));
  std::vector<Index> to(g.size(), names.size());
  std::vector<bool> used(names.size(), false);
  std::vector<Index> unmatched;
  for (Index v = 0; v < g.size(); ++v) {
    const auto it = std::find(names.begin(), names.end(), g.name(v));
    if (it == names.end()) {
      unmatched.push_back(v);
      continue;
    }
    to[v] = static_cast<Index>(it - names.begin());
    used[to[v]] = true;
  }
  if (!unmatched.empty()) {
    const auto y = std::find(names.begin(), names.end(), "y");
    if (unmatched.size() != 1 || y == names.end() || used[static_cast<Index>(y - names.begin())])
      throw Error(ErrorCode::DimensionMismatch, "graph nodes differ from the dataset columns");
    to[unmatched[0]] = static_cast<Index>(y - names.begin());
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) edges.push_back({to[e.from], to[e.to]});
  return Dag(names.size(), edges, names);
}

Dag load_truth(const std::string& path) {
  if (fs::path(path).extension() == ".json") {
    const auto j = read_json_if_exists(path);
    if (!j || !j->contains("dag")) throw Error(ErrorCode::Io, "no DAG in " + path);
    return dag_from_json(j->at("dag"));
  }
  return read_dag(path);
}

// ---------------------------------------------------------------------------
// acquire

struct AcquireArgs {
  std::string model;
  DataArgs data;
  std::string policy = "dfa";
  std::optional<std::size_t> budget;
  std::optional<double> confidence;
  std::string prune_bn;
  std::size_t n_samples = kDefaultCmiSamples;
  std::uint64_t seed = 0;
  std::string out;
  std::string static_on = "val";
  std::size_t limit = 0;
  OracleArgs oracle;
};

struct PolicyRun {
  std::string name;
  std::vector<EpisodeTrace> traces;
  std::size_t failures = 0;
  double mean_candidates = 0.0;
};

PolicyRun run_policy(const std::string& name, const Engine& engine, const Dataset& test, const Policy& policy,
                     const StoppingRule& stop, const EpisodeOptions& options, std::uint64_t seed, std::ostream& err) {
  std::vector<std::optional<EpisodeTrace>> slots(test.num_rows());
  std::vector<std::string> errors(test.num_rows());
  parallel_for(slots.size(), [&](std::size_t r) {
    try {
      EpisodeTrace t = run_episode(engine, test.features(r), policy, stop, options, seed + r);
      t.row = r;
      t.truth = test.target(r);
      slots[r] = std::move(t);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });
  PolicyRun run{name, {}, 0, 0.0};
  double cand = 0.0, steps = 0.0;
  for (std::size_t r = 0; r < slots.size(); ++r) {
    if (!slots[r]) {
      ++run.failures;
      err << "instance " << r << " failed (" << name << "): " << errors[r] << "\n";
      continue;
    }
    for (const auto& s : slots[r]->steps) {
      cand += static_cast<double>(s.scores.size());
      steps += 1.0;
    }
    run.traces.push_back(std::move(*slots[r]));
  }
  run.mean_candidates = steps > 0 ? cand / steps : 0.0;
  return run;
}

int cmd_acquire(const AcquireArgs& a, std::ostream& out, std::ostream& err) {
  if (a.policy != "dfa" && a.policy != "sfa" && a.policy != "both")
    throw Error(ErrorCode::InvalidArgument, "--policy must be dfa, sfa or both");
  if (a.static_on != "val" && a.static_on != "test")
    throw Error(ErrorCode::InvalidArgument, "--static-on must be val or test");
  const Prepared p = prepare(a.model, a.data);
  const Engine& engine = p.doc.engine;
  const TaskKind task = engine.task();
  const Index d = engine.num_features();
  const Dataset test = head(p.split.test, a.limit);
  if (test.num_rows() == 0) throw Error(ErrorCode::TooFewRows, "empty test split");

  StoppingRule stop = StoppingRule::budget(a.budget.value_or(d));
  if (a.confidence) {
    if (a.budget) throw Error(ErrorCode::InvalidArgument, "use either --budget or --confidence");
    stop = StoppingRule::confidence(*a.confidence);
  }
  stop.validate(d, task);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  json summary{{"model", a.model}, {"test_rows", test.num_rows()}, {"seed", a.seed}, {"n_samples", a.n_samples}};

  std::optional<Dag> pruner;
  if (!a.prune_bn.empty()) {
    if (a.prune_bn == "learn") {
      OracleArgs o = a.oracle;
      o.seed = a.seed;
      const LearnedBn bn = learn_from_engine(engine, p.split.val, o);
      for (const auto& w : bn.warnings) err << "warning: " << w << "\n";
      pruner = bn.dag;
      write_text(dir / "learned.dag", format_dag(bn.dag));
    } else {
      pruner = align_dag(read_dag(a.prune_bn), node_names(p.split.val));
    }
    summary["pruner"] = a.prune_bn;
  }
  EpisodeOptions options;
  options.n_samples = a.n_samples;
  options.pruner = pruner ? &*pruner : nullptr;

  std::vector<PolicyRun> runs;
  if (a.policy != "sfa") runs.push_back(run_policy("dfa", engine, test, Policy::dynamic(), stop, options, a.seed, err));
  if (a.policy != "dfa") {
    const Dataset& ref = a.static_on == "test" ? test : p.split.val;
    const IndexSet order = static_order(engine, ref, a.n_samples, derive_seed(a.seed, {0x5fau}));
    summary["static_order"] = order;
    summary["static_on"] = a.static_on;
    EpisodeOptions sopt = options;
    sopt.pruner = nullptr;
    runs.push_back(run_policy("sfa", engine, test, Policy::fixed(order), stop, sopt, a.seed, err));
  }

  std::size_t max_steps = 0;
  for (const auto& r : runs)
    for (const auto& t : r.traces) max_steps = std::max(max_steps, t.steps_taken());
  std::vector<CurveSeries> series;
  const std::string metric = task.is_classification() ? "accuracy" : "rmse";
  for (const auto& r : runs) {
    const auto curve = metric_curve(r.traces, task, max_steps);
    write_text(dir / ("curve_" + r.name + ".csv"), format_curve_csv(curve));
    std::ostringstream jsonl;
    for (const auto& t : r.traces) jsonl << to_json(t, task).dump() << '\n';
    write_text(dir / ("traces_" + r.name + ".jsonl"), jsonl.str());
    series.push_back({r.name, curve});
    summary[r.name] = {{"final_" + metric, curve.empty() ? 0.0 : curve.back().metric_mean},
                       {"mean_steps", mean_steps(r.traces)},
                       {"mean_candidates", r.mean_candidates},
                       {"failures", r.failures}};
    out << r.name << ": " << metric << " by step";
    for (const auto& c : curve) out << ' ' << fmt(c.metric_mean);
    out << "  (mean steps " << fmt(mean_steps(r.traces), 2) << ")\n";
  }
  write_text(dir / "curves.svg", format_curve_svg(series, metric));
  write_json(dir / "summary.json", summary);
  return kOk;
}

// ---------------------------------------------------------------------------
// learn-bn

struct LearnArgs {
  DataArgs data;
  std::string model;
  OracleArgs oracle;
  std::string out;
  std::string truth;
};

int cmd_learn_bn(const LearnArgs& a, std::ostream& out, std::ostream& err) {
  LearnedBn bn;
  std::vector<std::string> names;
  OracleArgs o = a.oracle;
  if (!a.model.empty()) {
    if (o.oracle.empty()) o.oracle = "engine";
    const Prepared p = prepare(a.model, a.data);
    names = node_names(p.split.val);
    if (o.oracle == "engine") {
      bn = learn_from_engine(p.doc.engine, p.split.val, o);
    } else {
      bn = learn_from_rows(p.split.train, o);
    }
  } else {
    if (a.data.path.empty()) throw Error(ErrorCode::InvalidArgument, "learn-bn needs --data or --model");
    if (o.oracle.empty()) o.oracle = "gaussian";
    if (o.oracle == "engine") throw Error(ErrorCode::InvalidArgument, "the engine oracle needs --model");
    const Dataset ds = a.data.load();
    names = node_names(ds);
    bn = learn_from_rows(ds, o);
  }
  if (o.oracle != "gaussian" && o.oracle != "permutation" && o.oracle != "engine")
    throw Error(ErrorCode::InvalidArgument, "--oracle must be gaussian, permutation or engine");
  for (const auto& w : bn.warnings) err << "warning: " << w << "\n";
  if (!a.out.empty()) write_text(a.out, format_dag(bn.dag));
  out << "learned " << bn.dag.edges().size() << " edges over " << bn.dag.size() << " nodes\n";

  std::string truth = a.truth;
  if (truth.empty() && !a.data.path.empty()) {
    fs::path side = a.data.path;
    side.replace_extension(".json");
    const auto j = read_json_if_exists(side);
    if (j && j->contains("dag")) truth = side.string();
  }
  if (!truth.empty()) {
    const Dag t = align_dag(load_truth(truth), names);
    const CpdagDiff diff = diff_cpdag(cpdag(t), bn.pdag);
    out << "CPDAG comparison against " << truth << "\n" << format_diff(diff, names);
    out << "skeleton errors: " << diff.skeleton_errors() << ", v-structure errors: " << diff.v_structure_errors()
        << "\n";
  }
  return kOk;
}

int cmd_dag_diff(const std::string& truth, const std::string& learned, std::ostream& out) {
  const Dag l = read_dag(learned);
  Dag t = load_truth(truth);
  t = align_dag(t, l.names());
  const CpdagDiff diff = diff_cpdag(cpdag(t), cpdag(l));
  out << format_diff(diff, l.names());
  out << "skeleton errors: " << diff.skeleton_errors() << ", v-structure errors: " << diff.v_structure_errors() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// ts

struct TsArgs {
  DataArgs data;
  Index n = 0;
  std::uint64_t seed = 0;
  Index steps = 0;
  Index step_width = 1;
  std::string engine = "gaussian";
  std::string mode = "both";
  double alpha = kDefaultAlpha;
  double tau = 0.9;
  std::size_t budget = 0;
  std::size_t n_draws = 0;
  std::size_t n_samples = kDefaultCmiSamples;
  std::string out;
};

json chrono_json(const ChronoTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"step", s.step},
                     {"informativeness", s.informativeness},
                     {"posterior_concentrations", s.posterior_concentrations},
                     {"label", s.prediction.label},
                     {"confidence", s.prediction.confidence},
                     {"calibrated_confidence", s.calibrated_confidence}});
  return {{"row", t.row}, {"truth", t.truth}, {"steps", steps}};
}

int cmd_ts(const TsArgs& a, std::ostream& out) {
  if (a.mode != "dirichlet" && a.mode != "consecutive" && a.mode != "both")
    throw Error(ErrorCode::InvalidArgument, "--mode must be dirichlet, consecutive or both");
  Dataset ds;
  if (a.data.path.empty()) {
    ChainTimeSeriesSpec spec;
    if (a.n) spec.n = a.n;
    if (a.steps) spec.num_steps = a.steps;
    spec.seed = a.seed;
    ds = gen_chain_timeseries(spec);
  } else {
    ds = a.data.load();
  }
  if (!ds.task.is_classification()) throw Error(ErrorCode::InvalidArgument, "time-series runs need class labels");
  const Index width = a.step_width;
  const Index T = a.steps ? a.steps : ds.num_features() / std::max<Index>(width, 1);
  if (width == 0 || T * width != ds.num_features())
    throw Error(ErrorCode::DimensionMismatch, "steps x step width must equal the number of features");

  const Split sp = split(ds, kRatios, a.seed);
  const Engine engine = fit_engine(sp.train, EngineSpec::parse(a.engine), a.seed);
  const auto& ccm = engine.classes();
  const CalibrationMap calib = fit_calibration(collect_confidence_pairs(ccm, sp.val, T, width));

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_json(dir / "calibration.json", to_json(calib));
  write_text(dir / "time_steps.csv", format_time_step_csv(time_step_table(ccm, sp.test, calib, T, width)));
  json summary{{"num_steps", T}, {"step_width", width}, {"test_rows", sp.test.num_rows()}, {"seed", a.seed}};

  const Dataset& test = sp.test;
  if (a.mode != "consecutive") {
    ChronoPolicyOptions opt;
    opt.alpha = a.alpha;
    opt.n_draws = a.n_draws;
    opt.n_samples = a.n_samples;
    opt.max_steps = a.budget;
    std::vector<ChronoTrace> traces(test.num_rows());
    parallel_for(traces.size(), [&](std::size_t r) {
      traces[r] = run_chrono_episode(ccm, test.features(r), T, width, opt, a.seed + r);
      traces[r].row = r;
      traces[r].truth = test.labels[r];
    });
    // accuracy after k acquisitions, carrying the last prediction forward
    std::size_t max_k = 0;
    for (const auto& t : traces) max_k = std::max(max_k, t.steps.size());
    std::vector<CurvePoint> curve;
    const double prior_acc = [&] {
      const auto post = class_posterior(ccm, Eigen::VectorXd(), {});
      const auto lab = static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin());
      double h = 0;
      for (int y : test.labels) h += y == lab ? 1.0 : 0.0;
      return h / static_cast<double>(test.num_rows());
    }();
    const double n = static_cast<double>(test.num_rows());
    curve.push_back({0, prior_acc, std::sqrt(prior_acc * (1 - prior_acc) / n)});
    for (std::size_t k = 1; k <= max_k; ++k) {
      double hits = 0;
      for (const auto& t : traces) hits += t.steps[std::min(k, t.steps.size()) - 1].prediction.label == t.truth ? 1.0 : 0.0;
      const double acc = hits / n;
      curve.push_back({k, acc, std::sqrt(acc * (1 - acc) / n)});
    }
    write_text(dir / "curve_dirichlet.csv", format_curve_csv(curve));
    std::ostringstream jsonl;
    double first = 0.0;
    for (const auto& t : traces) {
      jsonl << chrono_json(t).dump() << '\n';
      first += static_cast<double>(t.steps.front().step);
    }
    write_text(dir / "traces_dirichlet.jsonl", jsonl.str());
    summary["dirichlet"] = {{"alpha", a.alpha}, {"mean_first_step", first / n}, {"final_accuracy", curve.back().metric_mean}};
    out << "dirichlet policy: mean first step " << fmt(first / n, 3) << ", accuracy by step";
    for (const auto& c : curve) out << ' ' << fmt(c.metric_mean, 3);
    out << "\n";
  }
  if (a.mode != "dirichlet") {
    std::vector<ChronoTrace> traces(test.num_rows());
    parallel_for(traces.size(), [&](std::size_t r) {
      traces[r] = run_consecutive(ccm, test.features(r), a.tau, calib, T, width);
      traces[r].row = r;
      traces[r].truth = test.labels[r];
    });
    double stop = 0, hits = 0;
    std::ostringstream jsonl;
    for (const auto& t : traces) {
      stop += static_cast<double>(t.stop_step());
      hits += t.final_prediction().label == t.truth ? 1.0 : 0.0;
      jsonl << chrono_json(t).dump() << '\n';
    }
    const double n = static_cast<double>(traces.size());
    write_text(dir / "traces_consecutive.jsonl", jsonl.str());
    summary["consecutive"] = {{"tau", a.tau}, {"mean_stop_step", stop / n}, {"accuracy", hits / n}};
    out << "consecutive (tau " << a.tau << "): mean stop step " << fmt(stop / n, 3) << ", accuracy " << fmt(hits / n, 3)
        << "\n";
  }
  write_json(dir / "summary.json", summary);
  return kOk;
}

// ---------------------------------------------------------------------------
// interactive

struct InteractiveArgs {
  std::string model;
  std::uint64_t seed = 0;
  std::size_t n_samples = kDefaultCmiSamples;
  bool normalized_input = false;
  std::string out;
};

std::string describe(const Prediction& p, const TaskKind& task) {
  std::ostringstream os;
  if (task.is_classification()) {
    os << "P(y) = [";
    for (std::size_t k = 0; k < p.posterior.size(); ++k) os << (k ? ", " : "") << fmt(p.posterior[k]);
    os << "], predicted class " << p.label;
  } else {
    os << "predicted y = " << fmt(p.value);
  }
  return os.str();
}

int cmd_interactive(const InteractiveArgs& a, std::istream& in, std::ostream& out) {
  const ModelDocument doc = load_model(a.model);
  const Engine& engine = doc.engine;
  const TaskKind task = engine.task();
  const Index d = engine.num_features();
  auto name_of = [&](Index f) {
    const Index col = feature_to_column(f, task);
    return col < doc.feature_names.size() ? doc.feature_names[col] : "x" + std::to_string(f);
  };

  EpisodeTrace trace;
  ObservedState state(d);
  trace.initial = predict(engine, state);
  out << "prior: " << describe(trace.initial, task) << "\n";
  for (std::size_t step = 0; !state.unobserved().empty(); ++step) {
    const Selection sel = next_feature_dynamic(engine, state, state.unobserved(), a.n_samples, derive_seed(a.seed, {step}));
    double cmi = 0.0;
    for (const auto& s : sel.scores)
      if (s.feature == sel.feature) cmi = s.cmi;
    out << "next feature: " << name_of(sel.feature) << " (CMI " << fmt(cmi) << " nats)\n";
    std::optional<double> value;
    bool stop = false;
    while (!value) {
      out << "value for " << name_of(sel.feature) << " (or 'stop')> " << std::flush;
      std::string line;
      if (!std::getline(in, line)) {
        stop = true;
        break;
      }
      const auto b = line.find_first_not_of(" \t\r");
      line = b == std::string::npos ? "" : line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
      if (line == "stop") {
        stop = true;
        break;
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(line, &used);
        if (used != line.size()) throw std::invalid_argument(line);
        value = v;
      } catch (const std::exception&) {
        out << "not a number, try again\n";
      }
    }
    if (stop) break;
    double v = *value;
    const Index col = feature_to_column(sel.feature, task);
    if (doc.normalization && !a.normalized_input) v = doc.normalization->apply_value(col, v);
    if (doc.normalization && (v < 0.0 || v > 1.0))
      out << "warning: value lies outside the training range; the model will extrapolate\n";
    StepRecord rec;
    rec.chosen = sel.feature;
    rec.value = v;
    rec.scores = sel.scores;
    state = state.acquire(sel.feature, v);
    rec.prediction = predict(engine, state);
    out << describe(rec.prediction, task) << "\n";
    trace.steps.push_back(std::move(rec));
  }
  out << "final: " << describe(trace.final_prediction(), task) << " after " << trace.steps_taken()
      << " acquisitions\n";
  if (!a.out.empty()) write_json(a.out, to_json(trace, task));
  return kOk;
}

int exit_code_for(const Error& e) {
  switch (category_of(e.code())) {
    case ErrorCategory::Config: return kConfigError;
    case ErrorCategory::Data: return kDataError;
    case ErrorCategory::Numeric: return kNumericError;
  }
  return kConfigError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic feature acquisition by conditional mutual information"};
  app.set_config("--config", "", "TOML file with one [section] per command");
  app.require_subcommand(1);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "generate a synthetic dataset plus sidecar JSON");
  c_gen->add_option("--kind", gen.kind, "hierarchical | bn | chain")->capture_default_str();
  c_gen->add_option("--out", gen.out, "output CSV path")->required();
  c_gen->add_option("--n", gen.n, "rows (default per generator)");
  c_gen->add_option("--seed", gen.seed)->capture_default_str();
  c_gen->add_option("--graph", gen.graph, "asia | sachs | toy | DAG file")->capture_default_str();
  c_gen->add_option("--target", gen.target, "target node name (default: last node)");
  c_gen->add_option("--task", gen.task, "classification | regression | none")->capture_default_str();
  c_gen->add_option("--steps", gen.steps, "time steps for the chain generator")->capture_default_str();
  c_gen->add_flag("--per-feature-weights", gen.per_feature_weights);
  c_gen->add_flag("--no-normalize", gen.no_normalize);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "fit a conditional density engine on the training split");
  fit.data.add(c_fit, true);
  c_fit->add_option("--engine", fit.engine, "gaussian | class_conditional(m) | mixture(m)")->capture_default_str();
  c_fit->add_option("--seed", fit.seed)->capture_default_str();
  c_fit->add_option("--out", fit.out, "model JSON path")->required();
  c_fit->add_flag("--no-normalize", fit.no_normalize);

  AcquireArgs acq;
  auto* c_acq = app.add_subcommand("acquire", "run acquisition episodes over the test split");
  c_acq->add_option("--model", acq.model)->required();
  acq.data.add(c_acq, false);
  c_acq->add_option("--policy", acq.policy, "dfa | sfa | both")->capture_default_str();
  c_acq->add_option("--budget", acq.budget, "max acquisitions (default: all features)");
  c_acq->add_option("--confidence", acq.confidence, "stop once max P(y|x_o) reaches this");
  c_acq->add_option("--prune-bn", acq.prune_bn, "DAG file, or 'learn'");
  c_acq->add_option("--epsilon", acq.oracle.epsilon, "CI threshold for --prune-bn learn");
  c_acq->add_option("--reference-rows", acq.oracle.reference_rows)->capture_default_str();
  c_acq->add_option("--n-samples", acq.n_samples)->capture_default_str();
  c_acq->add_option("--seed", acq.seed)->capture_default_str();
  c_acq->add_option("--out", acq.out, "output directory")->required();
  c_acq->add_option("--static-on", acq.static_on, "split used to build the static order: val | test")
      ->capture_default_str();
  c_acq->add_option("--limit", acq.limit, "only the first N test rows");

  LearnArgs learn;
  auto* c_learn = app.add_subcommand("learn-bn", "learn a Bayesian network from CI tests");
  learn.data.add(c_learn, false);
  c_learn->add_option("--model", learn.model, "use the fitted engine as the CI oracle");
  c_learn->add_option("--oracle", learn.oracle.oracle, "gaussian | permutation | engine");
  c_learn->add_option("--epsilon", learn.oracle.epsilon);
  c_learn->add_option("--permutations", learn.oracle.permutations)->capture_default_str();
  c_learn->add_option("--reference-rows", learn.oracle.reference_rows)->capture_default_str();
  c_learn->add_option("--n-samples", learn.oracle.n_samples)->capture_default_str();
  c_learn->add_option("--seed", learn.oracle.seed)->capture_default_str();
  c_learn->add_option("--out", learn.out, "DAG file to write");
  c_learn->add_option("--truth", learn.truth, "ground-truth DAG file or generator sidecar");

  std::string diff_truth, diff_learned;
  auto* c_diff = app.add_subcommand("dag-diff", "compare two DAG files as CPDAGs");
  c_diff->add_option("--truth", diff_truth)->required();
  c_diff->add_option("--learned", diff_learned)->required();

  TsArgs ts;
  auto* c_ts = app.add_subcommand("ts", "time-series acquisition with calibrated stopping");
  ts.data.add(c_ts, false);
  c_ts->add_option("--n", ts.n, "rows when generating the chain benchmark");
  c_ts->add_option("--seed", ts.seed)->capture_default_str();
  c_ts->add_option("--steps", ts.steps, "time steps T (default: features / step width)");
  c_ts->add_option("--step-width", ts.step_width)->capture_default_str();
  c_ts->add_option("--engine", ts.engine)->capture_default_str();
  c_ts->add_option("--mode", ts.mode, "dirichlet | consecutive | both")->capture_default_str();
  c_ts->add_option("--alpha", ts.alpha)->capture_default_str();
  c_ts->add_option("--tau", ts.tau, "calibrated confidence threshold")->capture_default_str();
  c_ts->add_option("--budget", ts.budget, "max steps for the Dirichlet policy (0: all)");
  c_ts->add_option("--n-draws", ts.n_draws, "posterior draws N (0: 5 per remaining step)");
  c_ts->add_option("--n-samples", ts.n_samples)->capture_default_str();
  c_ts->add_option("--out", ts.out, "output directory")->required();

  InteractiveArgs inter;
  auto* c_int = app.add_subcommand("interactive", "answer feature queries from the terminal");
  c_int->add_option("--model", inter.model)->required();
  c_int->add_option("--seed", inter.seed)->capture_default_str();
  c_int->add_option("--n-samples", inter.n_samples)->capture_default_str();
  c_int->add_flag("--normalized-input", inter.normalized_input, "values are already on the model's [0,1] scale");
  c_int->add_option("--out", inter.out, "write the session trace JSON here");

  try {
    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen, out);
    if (c_fit->parsed()) return cmd_fit(fit, out, err);
    if (c_acq->parsed()) return cmd_acquire(acq, out, err);
    if (c_learn->parsed()) return cmd_learn_bn(learn, out, err);
    if (c_diff->parsed()) return cmd_dag_diff(diff_truth, diff_learned, out);
    if (c_ts->parsed()) return cmd_ts(ts, out);
    if (c_int->parsed()) return cmd_interactive(inter, in, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    err << "error [ParseError]: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error [Io]: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace dfa::cli
