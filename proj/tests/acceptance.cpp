// Acceptance gate: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "dfa/acquisition.hpp"
#include "dfa/bn.hpp"
#include "dfa/cmi.hpp"
#include "dfa/condmodel.hpp"
#include "dfa/data.hpp"
#include "dfa/parallel.hpp"
#include "dfa/timeseries.hpp"

using namespace dfa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Eigen::Matrix2d cov;
  cov << 1, 0.5, 0.5, 1;
  const MixtureModel joint = MixtureModel::single({Eigen::Vector2d::Zero(), cov});
  const double exact = -0.5 * std::log(1 - 0.25);
  const auto est = cmi_regression(joint, 0, ObservedState(2), 1, 10000, 1);
  const double err = std::abs(est.value - exact);
  return {err <= 0.01, "estimate " + num(est.value) + " vs closed form " + num(exact) + ", |err| " + num(err, 5)};
}

Outcome criterion2() {
  ClassConditionalModel ccm;
  ccm.class_prior = {0.5, 0.5};
  Eigen::Matrix2d cov;
  cov << 1, 0.3, 0.3, 1;
  ccm.per_class.push_back(MixtureModel::single({Eigen::Vector2d(-1.0, -0.5), cov}));
  ccm.per_class.push_back(MixtureModel::single({Eigen::Vector2d(1.0, 0.5), cov}));
  const ObservedState state = ObservedState(2).acquire(1, 0.2);

  std::vector<double> small;
  for (std::uint64_t s = 1; s <= 1000; ++s) small.push_back(cmi_classification(ccm, 0, state, 10, s).value);
  const auto ref = cmi_classification(ccm, 0, state, 100000, 0xabcdefu);
  const double se_small = std::sqrt(var_of(small) / static_cast<double>(small.size()));
  const double combined = std::sqrt(se_small * se_small + ref.std_error * ref.std_error);
  const double gap = std::abs(mean_of(small) - ref.value);

  DiscreteJoint xor_table;
  xor_table.cardinalities = {2, 2, 2};  // (a, y, b) with y = a xor b
  xor_table.p.assign(8, 0.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) xor_table.p[a * 4 + (a ^ b) * 2 + b] = 0.25;
  const double xor_cmi = cmi_discrete_bruteforce(xor_table, 0, 1, {2}).value;
  const double xor_err = std::abs(xor_cmi - std::log(2.0));

  const bool pass = gap <= 2 * combined && xor_err < 1e-12;
  return {pass, "mean of 1000 10-sample estimates " + num(mean_of(small), 5) + " vs reference " + num(ref.value, 5) +
                    " (gap " + num(gap, 5) + ", 2 SE " + num(2 * combined, 5) + "); XOR I(a;y|b) - ln 2 = " +
                    num(xor_cmi - std::log(2.0), 15)};
}

Outcome criterion3() {
  LinearGaussianBnSpec spec;
  spec.dag = asia_dag();
  spec.n = 5000;
  spec.seed = 0;
  const BnData bd = gen_linear_gaussian_bn(spec);
  const Pdag truth = cpdag(bd.dag);

  const GaussianCiOracle exact(bd.population, 1e-8);
  const LearnedBn bn = learn_bn(exact, 0, bd.dag.names());
  const CpdagDiff d = diff_cpdag(truth, bn.pdag);
  const CpdagDiff dd = diff_cpdag(truth, cpdag(bn.dag));

  // informational: the same oracle on the sample covariance of the 5000 rows
  const SampleGaussianCiOracle sample(bd.data.rows, 1e-8);
  const CpdagDiff ds = diff_cpdag(truth, learn_bn(sample, 0, bd.dag.names()).pdag);

  const bool pass = d.skeleton_errors() == 0 && d.v_structure_errors() == 0 && dd.identical();
  return {pass, "population covariance: " + std::to_string(d.skeleton_errors()) + " skeleton / " +
                    std::to_string(d.v_structure_errors()) + " v-structure errors (" + std::to_string(exact.tests_run()) +
                    " CI tests); sample covariance at the same epsilon (info): " +
                    std::to_string(ds.skeleton_errors()) + " / " + std::to_string(ds.v_structure_errors())};
}

struct PruneCheck {
  std::size_t checked = 0;
  std::size_t unsound = 0;
};

// every unobserved feature pruned for some observed set has zero exact CMI
void exhaustive_soundness(const Dag& pruner, const GaussianParams& population, Index y_node, Index num_features,
                          PruneCheck& out) {
  const std::size_t subsets = std::size_t{1} << num_features;
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    IndexSet o, u;
    for (Index f = 0; f < num_features; ++f) ((mask >> f) & 1 ? o : u).push_back(f);
    if (u.empty()) continue;
    const IndexSet keep = prune_candidates(pruner, y_node, o, u);
    for (Index i : u) {
      if (std::binary_search(keep.begin(), keep.end(), i)) continue;
      ++out.checked;
      if (cmi_gaussian_exact(population, i, y_node, o).value > 1e-8) ++out.unsound;
    }
  }
}

void episode_soundness(const std::vector<EpisodeTrace>& traces, const GaussianParams& population, Index y_node,
                       PruneCheck& out) {
  for (const auto& t : traces) {
    IndexSet o;
    for (const auto& s : t.steps) {
      for (Index i : s.pruned) {
        ++out.checked;
        if (cmi_gaussian_exact(population, i, y_node, o).value > 1e-8) ++out.unsound;
      }
      o.insert(std::upper_bound(o.begin(), o.end(), s.chosen), s.chosen);
    }
  }
}

double mean_candidates(const std::vector<EpisodeTrace>& traces) {
  double cand = 0, steps = 0;
  for (const auto& t : traces)
    for (const auto& s : t.steps) {
      cand += static_cast<double>(s.scores.size());
      steps += 1;
    }
  return cand / steps;
}

Index node_named(const Dag& g, const std::string& name) {
  const auto& n = g.names();
  return static_cast<Index>(std::find(n.begin(), n.end(), name) - n.begin());
}

Outcome criterion4() {
  PruneCheck sound;
  double reduction = 0.0, base = 0.0, pruned_mean = 0.0;
  for (const std::string fixture : {"toy", "asia"}) {
    LinearGaussianBnSpec spec;
    spec.dag = fixture_dag(fixture);
    spec.n = 5000;
    spec.seed = 0;
    spec.target = LinearGaussianBnSpec::Target::Classification;
    spec.target_node = fixture == "toy" ? spec.dag.size() - 1 : node_named(spec.dag, "either");
    const BnData bd = gen_linear_gaussian_bn(spec);
    const Index y = bd.dag.size() - 1;
    const Index d = bd.data.num_features();

    const GaussianCiOracle ci(bd.population, 1e-8);
    const LearnedBn learned = learn_bn(ci, 0, bd.dag.names());

    exhaustive_soundness(bd.dag, bd.population, y, d, sound);
    exhaustive_soundness(learned.dag, bd.population, y, d, sound);

    const Split sp = split(bd.data, {}, 0);
    const Engine engine = fit_engine(sp.train, EngineSpec::parse("gaussian"), 0);
    IndexSet first(200);
    for (Index k = 0; k < 200; ++k) first[k] = k;
    const Dataset test = sp.test.subset(first);
    EpisodeOptions none, with;
    with.pruner = &learned.dag;
    const auto plain = run_episodes(engine, test, Policy::dynamic(), StoppingRule::budget(3), none, 0);
    const auto pruned = run_episodes(engine, test, Policy::dynamic(), StoppingRule::budget(3), with, 0);
    episode_soundness(pruned, bd.population, y, sound);
    if (fixture == "asia") {
      base = mean_candidates(plain);
      pruned_mean = mean_candidates(pruned);
      reduction = 1.0 - pruned_mean / base;
    }
  }
  const bool pass = sound.unsound == 0 && sound.checked > 0 && reduction >= 0.10;
  return {pass, std::to_string(sound.unsound) + " unsound of " + std::to_string(sound.checked) +
                    " pruned (feature, observed-set) pairs; asia mean candidates " + num(base, 3) + " -> " +
                    num(pruned_mean, 3) + " (" + num(100 * reduction, 1) + "% smaller)"};
}

// ---------------------------------------------------------------------------
// Hierarchical benchmark, shared by criteria 5 and 6

struct HierarchicalRun {
  std::vector<EpisodeTrace> dfa, sfa;
  Index d = 0;
  TaskKind task;
};

const HierarchicalRun& hierarchical_run() {
  static const HierarchicalRun run = [] {
    HierarchicalSpec spec;
    spec.n = 20000;
    spec.seed = 0;
    spec.normalize = false;
    Dataset ds = gen_hierarchical(spec).data;
    const SplitIndices idx = split_indices(ds.num_rows(), {}, 0);
    ds = MinMaxStats::fit(ds.subset(idx.train)).apply(ds);
    const Split sp = split(ds, {}, 0);
    const Engine engine = fit_engine(sp.train, EngineSpec::parse("class_conditional(9)"), 0);
    const IndexSet order = static_order(engine, sp.val, kDefaultCmiSamples, derive_seed(0, {0x5fau}));
    HierarchicalRun r;
    r.d = engine.num_features();
    r.task = engine.task();
    const StoppingRule all = StoppingRule::budget(r.d);
    r.dfa = run_episodes(engine, sp.test, Policy::dynamic(), all, {}, 0);
    r.sfa = run_episodes(engine, sp.test, Policy::fixed(order), all, {}, 0);
    return r;
  }();
  return run;
}

Outcome criterion5() {
  const HierarchicalRun& r = hierarchical_run();
  const auto dfa = metric_curve(r.dfa, r.task, r.d);
  const auto sfa = metric_curve(r.sfa, r.task, r.d);
  const double gap = dfa[2].metric_mean - sfa[2].metric_mean;
  std::size_t x0_first = 0;
  for (const auto& t : r.dfa) x0_first += !t.steps.empty() && t.steps.front().chosen == 0;
  const double frac = static_cast<double>(x0_first) / static_cast<double>(r.dfa.size());
  return {gap >= 0.05 && frac >= 0.95, "budget 2: DFA " + num(dfa[2].metric_mean) + " vs SFA " +
                                           num(sfa[2].metric_mean) + " (gap " + num(gap) + "); x0 first on " +
                                           num(100 * frac, 1) + "% of " + std::to_string(r.dfa.size()) + " test rows"};
}

double worst_drop(const std::vector<CurvePoint>& curve) {
  double best = -1e300, worst = 0;
  for (const auto& p : curve) {
    best = std::max(best, p.metric_mean);
    worst = std::max(worst, best - p.metric_mean);
  }
  return worst;
}

Outcome criterion6() {
  const HierarchicalRun& h = hierarchical_run();
  const double h_dfa = worst_drop(metric_curve(h.dfa, h.task, h.d));
  const double h_sfa = worst_drop(metric_curve(h.sfa, h.task, h.d));

  LinearGaussianBnSpec spec;
  spec.dag = asia_dag();
  spec.n = 5000;
  spec.seed = 0;
  spec.target = LinearGaussianBnSpec::Target::Classification;
  spec.target_node = node_named(spec.dag, "either");
  const BnData bd = gen_linear_gaussian_bn(spec);
  const Split sp = split(bd.data, {}, 0);
  const Engine engine = fit_engine(sp.train, EngineSpec::parse("gaussian"), 0);
  const Index d = engine.num_features();
  const IndexSet order = static_order(engine, sp.val, kDefaultCmiSamples, derive_seed(0, {0x5fau}));
  const auto a_dfa = run_episodes(engine, sp.test, Policy::dynamic(), StoppingRule::budget(d), {}, 0);
  const auto a_sfa = run_episodes(engine, sp.test, Policy::fixed(order), StoppingRule::budget(d), {}, 0);
  const double b_dfa = worst_drop(metric_curve(a_dfa, engine.task(), d));
  const double b_sfa = worst_drop(metric_curve(a_sfa, engine.task(), d));

  const double worst = std::max({h_dfa, h_sfa, b_dfa, b_sfa});
  return {worst <= 0.01, "largest drop below running max: hierarchical DFA " + num(h_dfa) + ", SFA " + num(h_sfa) +
                             "; asia DFA " + num(b_dfa) + ", SFA " + num(b_sfa)};
}

// ---------------------------------------------------------------------------
// Chain time-series benchmark, shared by criteria 7 and 8

struct ChainSetup {
  Split split;
  ClassConditionalModel ccm;
  Index T = 12;
};

const ChainSetup& chain_setup() {
  static const ChainSetup s = [] {
    ChainTimeSeriesSpec spec;
    spec.seed = 0;
    ChainSetup c;
    c.T = spec.num_steps;
    c.split = split(gen_chain_timeseries(spec), {}, 0);
    c.ccm = fit_engine(c.split.train, EngineSpec::parse("gaussian"), 0).classes();
    return c;
  }();
  return s;
}

Outcome criterion7() {
  std::size_t prior_cases = 0, prior_bad = 0;
  for (Index T = 1; T <= 12; ++T)
    for (long long o = -1; o <= static_cast<long long>(T) - 2; ++o) {
      const DirichletParams p = prior_params(T, o, 10.0);
      ++prior_cases;
      bool ok = p.support.size() == static_cast<std::size_t>(static_cast<long long>(T) - 1 - o);
      for (std::size_t k = 0; ok && k < p.support.size(); ++k)
        ok = p.support[k] == static_cast<Index>(o + 1) + k && p.concentrations[k] == 10.0 * static_cast<double>(T - p.support[k]);
      prior_bad += !ok;
    }

  std::size_t conj_bad = 0;
  Rng rng(3);
  std::uniform_int_distribution<int> cnt(0, 50);
  for (int trial = 0; trial < 200; ++trial) {
    const Index T = 2 + trial % 11;
    const DirichletParams prior = prior_params(T, trial % 2 ? -1 : 0, 10.0);
    std::vector<std::size_t> counts(prior.support.size());
    for (auto& c : counts) c = static_cast<std::size_t>(cnt(rng));
    const DirichletParams post = posterior_params(prior, counts);
    for (std::size_t k = 0; k < counts.size(); ++k)
      conj_bad += post.concentrations[k] != prior.concentrations[k] + static_cast<double>(counts[k]) ||
                  post.support[k] != prior.support[k];
  }

  const ChainSetup& c = chain_setup();
  const Dataset& test = c.split.test;
  std::size_t chrono_bad = 0;
  std::vector<double> first;
  std::vector<ChronoTrace> traces(test.num_rows());
  ChronoPolicyOptions opt;
  opt.alpha = 10.0;
  parallel_for(traces.size(), [&](std::size_t r) {
    traces[r] = run_chrono_episode(c.ccm, test.features(r), c.T, 1, opt, r);
  });
  for (const auto& t : traces) {
    for (std::size_t k = 1; k < t.steps.size(); ++k) chrono_bad += t.steps[k].step <= t.steps[k - 1].step;
    first.push_back(static_cast<double>(t.steps.front().step));
  }
  // uniform baseline: first step uniform over the T steps
  Rng urng(11);
  std::uniform_int_distribution<Index> pick(0, c.T - 1);
  std::vector<double> uniform;
  for (std::size_t r = 0; r < traces.size(); ++r) uniform.push_back(static_cast<double>(pick(urng)));

  const bool pass = prior_bad == 0 && conj_bad == 0 && chrono_bad == 0 && mean_of(first) < mean_of(uniform);
  return {pass, std::to_string(prior_cases - prior_bad) + "/" + std::to_string(prior_cases) +
                    " prior cases exact; conjugacy mismatches " + std::to_string(conj_bad) +
                    "; chronological violations " + std::to_string(chrono_bad) + " in " +
                    std::to_string(traces.size()) + " traces; mean first step " + num(mean_of(first), 3) +
                    " vs uniform " + num(mean_of(uniform), 3)};
}

Outcome criterion8() {
  const ChainSetup& c = chain_setup();
  const auto val_pairs = collect_confidence_pairs(c.ccm, c.split.val, c.T, 1);
  const CalibrationMap calib = fit_calibration(val_pairs, 10);
  double worst_bin = 0.0;
  std::size_t bins_checked = 0;
  for (Index t = 0; t < c.T; ++t) {
    std::vector<double> conf(10, 0.0), hits(10, 0.0), n(10, 0.0);
    for (const auto& p : val_pairs[t]) {
      const std::size_t b = std::min<std::size_t>(9, static_cast<std::size_t>(p.confidence * 10));
      conf[b] += calib.calibrate(t, p.confidence);
      hits[b] += p.correct;
      n[b] += 1;
    }
    for (int b = 0; b < 10; ++b)
      if (n[b] > 0) {
        ++bins_checked;
        worst_bin = std::max(worst_bin, std::abs(conf[b] / n[b] - hits[b] / n[b]));
      }
  }

  const Dataset& test = c.split.test;
  double stop = 0, hits = 0, stopped = 0, stopped_hits = 0;
  for (Index r = 0; r < test.num_rows(); ++r) {
    const ChronoTrace t = run_consecutive(c.ccm, test.features(r), 0.9, calib, c.T, 1);
    const bool ok = t.final_prediction().label == test.labels[r];
    stop += static_cast<double>(t.stop_step());
    hits += ok;
    if (t.steps.back().calibrated_confidence >= 0.9) {
      stopped += 1;
      stopped_hits += ok;
    }
  }
  const double n = static_cast<double>(test.num_rows());
  const double acc = hits / n, mean_stop = stop / n;
  const bool pass = worst_bin <= 0.1 && acc >= 0.85 && mean_stop < static_cast<double>(c.T - 1);
  return {pass, "worst per-bin |calibrated - accuracy| " + num(worst_bin) + " over " + std::to_string(bins_checked) +
                    " populated bins; tau 0.9: accuracy " + num(acc) + " (threshold-reached subset " +
                    num(stopped_hits / std::max(1.0, stopped)) + ", " + num(100 * stopped / n, 1) +
                    "% of rows), mean stop step " + num(mean_stop, 2)};
}

// ---------------------------------------------------------------------------
// CLI determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

Outcome criterion9() {
  const fs::path dir = fs::current_path() / "acceptance_cli";
  auto p = [&](const std::string& f) { return (dir / f).string(); };
  struct Cmd {
    std::vector<std::string> args;
    std::string input;
  };
  const std::vector<Cmd> cmds = {
      {{"gen-data", "--kind", "hierarchical", "--n", "3000", "--seed", "2", "--out", p("h.csv")}, ""},
      {{"gen-data", "--kind", "bn", "--graph", "asia", "--target", "either", "--n", "3000", "--out", p("asia.csv")}, ""},
      {{"gen-data", "--kind", "chain", "--n", "1500", "--out", p("chain.csv")}, ""},
      {{"fit", "--data", p("h.csv"), "--engine", "class_conditional(2)", "--seed", "1", "--out", p("h.model.json")}, ""},
      {{"fit", "--data", p("asia.csv"), "--engine", "gaussian", "--out", p("asia.model.json")}, ""},
      {{"acquire", "--model", p("h.model.json"), "--policy", "both", "--budget", "3", "--limit", "40", "--out", p("acq_h")}, ""},
      {{"acquire", "--model", p("asia.model.json"), "--policy", "dfa", "--prune-bn", "learn", "--reference-rows", "50",
        "--confidence", "0.9", "--limit", "40", "--out", p("acq_asia")},
       ""},
      {{"learn-bn", "--data", p("asia.csv"), "--oracle", "permutation", "--permutations", "20", "--out",
        p("asia_perm.dag")},
       ""},
      {{"learn-bn", "--model", p("asia.model.json"), "--reference-rows", "50", "--out", p("asia_engine.dag")}, ""},
      {{"dag-diff", "--truth", p("asia.dag"), "--learned", p("asia_perm.dag")}, ""},
      {{"ts", "--data", p("chain.csv"), "--mode", "both", "--out", p("ts")}, ""},
      {{"interactive", "--model", p("h.model.json"), "--out", p("session.json")}, "0.3\nx\n0.8\nstop\n"},
  };
  auto run_all = [&](std::vector<std::string>& outputs, std::string& failure) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& c : cmds) {
      std::vector<std::string> args{"dfa"};
      args.insert(args.end(), c.args.begin(), c.args.end());
      std::istringstream in(c.input);
      std::ostringstream out, err;
      const int code = cli::run(args, in, out, err);
      if (code != 0 && failure.empty()) failure = c.args[0] + " exited " + std::to_string(code) + ": " + err.str();
      outputs.push_back(std::to_string(code) + "\n" + out.str() + "\n" + err.str());
    }
    return snapshot(dir);
  };
  std::vector<std::string> out1, out2;
  std::string fail1, fail2;
  const auto files1 = run_all(out1, fail1);
  const auto files2 = run_all(out2, fail2);
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : files1) {
    const auto it = files2.find(name);
    if (it == files2.end() || it->second != bytes) {
      ++differing;
      if (first_diff.empty()) first_diff = name;
    }
  }
  differing += files2.size() != files1.size();
  std::size_t stream_diff = 0;
  for (std::size_t k = 0; k < out1.size(); ++k) stream_diff += out1[k] != out2[k];
  const bool pass = fail1.empty() && differing == 0 && stream_diff == 0;
  std::string detail = std::to_string(cmds.size()) + " commands, " + std::to_string(files1.size()) + " output files; " +
                       std::to_string(differing) + " files and " + std::to_string(stream_diff) +
                       " console transcripts differ";
  if (!first_diff.empty()) detail += " (first: " + first_diff + ")";
  if (!fail1.empty()) detail += "; " + fail1;
  return {pass, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime bound
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all = {
      {1, "regression CMI estimator", 1.0, criterion1},
      {2, "classification CMI estimator", 10.0, criterion2},
      {3, "structure recovery", 30.0, criterion3},
      {4, "pruning soundness and payoff", 60.0, criterion4},
      {5, "dynamic vs static separation", 120.0, criterion5},
      {6, "monotone curves", 0.0, criterion6},
      {7, "time-series policy", 30.0, criterion7},
      {8, "calibrated stopping", 60.0, criterion8},
      {9, "CLI determinism", 0.0, criterion9},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s == 0.0 || secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %d [%s]: %s  %s; %.2f s%s\n", c.id, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                in_time ? "" : " (over the runtime bound)");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
