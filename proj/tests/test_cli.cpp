#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "cli.hpp"
#include "dfa/bn.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args, const std::string& input = "") {
  args.insert(args.begin(), "dfa");
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.code = dfa::cli::run(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::current_path() / "cli_test_tmp";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string p(const std::string& name) { return (workdir() / name).string(); }

// small hierarchical dataset plus a fitted gaussian model, shared by the cases
void ensure_model() {
  static bool done = false;
  if (done) return;
  REQUIRE(run({"gen-data", "--kind", "hierarchical", "--n", "1500", "--seed", "1", "--out", p("h.csv")}).code == 0);
  REQUIRE(run({"fit", "--data", p("h.csv"), "--engine", "gaussian", "--seed", "0", "--out", p("h.model.json")}).code == 0);
  done = true;
}

}  // namespace

TEST_CASE("missing input file exits nonzero and names the path") {
  const Run r = run({"fit", "--data", p("nope.csv"), "--out", p("m.json")});
  CHECK(r.code == 3);
  CHECK(r.err.find("nope.csv") != std::string::npos);
}

TEST_CASE("bad arguments are configuration errors") {
  CHECK(run({"fit"}).code == 2);
  CHECK(run({"no-such-command"}).code == 2);
  ensure_model();
  CHECK(run({"fit", "--data", p("h.csv"), "--engine", "flow", "--out", p("x.json")}).code == 2);
}

TEST_CASE("help exits cleanly") { CHECK(run({"--help"}).code == 0); }

TEST_CASE("gen-data writes csv and sidecar") {
  ensure_model();
  CHECK(fs::exists(p("h.csv")));
  const auto side = nlohmann::json::parse(slurp(p("h.json")));
  CHECK(side["generator"] == "hierarchical");
  CHECK(side["seed"] == 1);
}

TEST_CASE("refitting is byte identical") {
  ensure_model();
  REQUIRE(run({"fit", "--data", p("h.csv"), "--engine", "gaussian", "--seed", "0", "--out", p("h2.model.json")}).code == 0);
  CHECK(slurp(p("h.model.json")) == slurp(p("h2.model.json")));
  const auto m = nlohmann::json::parse(slurp(p("h.model.json")));
  CHECK(m["metadata"]["split_seed"] == 0);
}

TEST_CASE("acquire writes both policies") {
  ensure_model();
  const Run r = run({"acquire", "--model", p("h.model.json"), "--policy", "both", "--budget", "3", "--limit", "40",
                     "--n-samples", "5", "--out", p("acq")});
  REQUIRE(r.code == 0);
  for (const char* f : {"curve_dfa.csv", "curve_sfa.csv", "traces_dfa.jsonl", "traces_sfa.jsonl", "summary.json", "curves.svg"})
    CHECK(fs::exists(workdir() / "acq" / f));
  std::istringstream lines(slurp(workdir() / "acq" / "traces_dfa.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto t = nlohmann::json::parse(line);
    REQUIRE(t["steps_taken"] == 3);
    ++n;
  }
  CHECK(n == 40);
  const std::string curve = slurp(workdir() / "acq" / "curve_dfa.csv");
  CHECK(curve.rfind("step,metric_mean,metric_stderr\n", 0) == 0);
}

TEST_CASE("acquire is reproducible") {
  ensure_model();
  for (const char* dir : {"rep1", "rep2"})
    REQUIRE(run({"acquire", "--model", p("h.model.json"), "--policy", "dfa", "--budget", "2", "--limit", "20",
                 "--n-samples", "5", "--out", p(dir)})
                .code == 0);
  CHECK(slurp(workdir() / "rep1" / "traces_dfa.jsonl") == slurp(workdir() / "rep2" / "traces_dfa.jsonl"));
}

TEST_CASE("learn-bn with a huge threshold learns no edges") {
  REQUIRE(run({"gen-data", "--kind", "bn", "--graph", "asia", "--task", "none", "--n", "2000", "--out", p("asia.csv")}).code == 0);
  const Run r = run({"learn-bn", "--data", p("asia.csv"), "--regression", "--oracle", "gaussian", "--epsilon", "1e9",
                     "--out", p("asia_learned.dag")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("learned 0 edges") != std::string::npos);
  const Run d = run({"dag-diff", "--truth", p("asia.dag"), "--learned", p("asia_learned.dag")});
  CHECK(d.code == 0);
  CHECK(d.out.find("skeleton errors: 8") != std::string::npos);
}

TEST_CASE("time-series command with tau near zero stops at the first step") {
  const Run r = run({"ts", "--n", "800", "--steps", "4", "--mode", "consecutive", "--tau", "0.000001", "--out", p("ts")});
  REQUIRE(r.code == 0);
  const auto s = nlohmann::json::parse(slurp(workdir() / "ts" / "summary.json"));
  CHECK(s["consecutive"]["mean_stop_step"] == 0.0);
  CHECK(fs::exists(workdir() / "ts" / "calibration.json"));
  CHECK(slurp(workdir() / "ts" / "time_steps.csv").rfind("time_step,accuracy,mean_calibrated_confidence\n", 0) == 0);
}

TEST_CASE("interactive session stops on request and rejects junk") {
  ensure_model();
  const Run r = run({"interactive", "--model", p("h.model.json"), "--out", p("session.json")}, "abc\n0.5\nstop\n");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("not a number") != std::string::npos);
  CHECK(r.out.find("after 1 acquisitions") != std::string::npos);
  const auto t = nlohmann::json::parse(slurp(p("session.json")));
  CHECK(t["steps_taken"] == 1);
}

TEST_CASE("interactive replay of a batch trace gives the same result") {
  ensure_model();
  REQUIRE(run({"acquire", "--model", p("h.model.json"), "--policy", "dfa", "--limit", "3", "--n-samples", "5", "--seed",
               "7", "--out", p("replay")})
              .code == 0);
  std::istringstream lines(slurp(workdir() / "replay" / "traces_dfa.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    const auto t = nlohmann::json::parse(line);
    std::ostringstream answers;
    answers.precision(17);
    for (const auto& s : t["steps"]) answers << s["value"].get<double>() << "\n";
    const std::uint64_t seed = 7 + t["row"].get<std::uint64_t>();
    const Run r = run({"interactive", "--model", p("h.model.json"), "--normalized-input", "--n-samples", "5", "--seed",
                       std::to_string(seed), "--out", p("replayed.json")},
                      answers.str());
    REQUIRE(r.code == 0);
    const auto back = nlohmann::json::parse(slurp(p("replayed.json")));
    REQUIRE(back["steps"].size() == t["steps"].size());
    for (std::size_t k = 0; k < t["steps"].size(); ++k) REQUIRE(back["steps"][k]["feature"] == t["steps"][k]["feature"]);
    CHECK(back["final"] == t["final"]);
  }
}

TEST_CASE("interactive stop right away reports the prior") {
  ensure_model();
  const Run r = run({"interactive", "--model", p("h.model.json"), "--out", p("stop0.json")}, "stop\n");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("after 0 acquisitions") != std::string::npos);
  const auto t = nlohmann::json::parse(slurp(p("stop0.json")));
  CHECK(t["steps_taken"] == 0);
  CHECK(t["final"] == t["initial"]);
}

TEST_CASE("interactive prompts never repeat a feature") {
  ensure_model();
  std::string answers;
  for (int k = 0; k < 10; ++k) answers += "0.5\n";
  const Run r = run({"interactive", "--model", p("h.model.json"), "--n-samples", "3"}, answers);
  REQUIRE(r.code == 0);
  std::set<std::string> seen;
  const std::string tag = "value for ";
  std::size_t n = 0;
  for (auto pos = r.out.find(tag); pos != std::string::npos; pos = r.out.find(tag, pos + 1)) {
    const auto start = pos + tag.size();
    const std::string name = r.out.substr(start, r.out.find(' ', start) - start);
    REQUIRE(seen.insert(name).second);
    ++n;
  }
  CHECK(n == 10);
  CHECK(r.out.find("after 10 acquisitions") != std::string::npos);
}

TEST_CASE("budget of every feature reaches the full-information accuracy") {
  ensure_model();
  const Run f = run({"fit", "--data", p("h.csv"), "--engine", "gaussian", "--seed", "0", "--out", p("h3.model.json")});
  REQUIRE(f.code == 0);
  const std::string tag = "full-information test accuracy: ";
  const auto pos = f.out.find(tag);
  REQUIRE(pos != std::string::npos);
  const double full = std::stod(f.out.substr(pos + tag.size()));
  REQUIRE(run({"acquire", "--model", p("h3.model.json"), "--policy", "both", "--budget", "10", "--n-samples", "3",
               "--out", p("full")})
              .code == 0);
  const auto s = nlohmann::json::parse(slurp(workdir() / "full" / "summary.json"));
  CHECK(std::abs(s["dfa"]["final_accuracy"].get<double>() - full) < 5.1e-5);
  CHECK(std::abs(s["sfa"]["final_accuracy"].get<double>() - full) < 5.1e-5);
}

TEST_CASE("learn-bn picks up the sidecar truth and writes a reloadable graph") {
  REQUIRE(run({"gen-data", "--kind", "bn", "--graph", "asia", "--n", "3000", "--seed", "2", "--out", p("asia_c.csv")}).code == 0);
  const Run r = run({"learn-bn", "--data", p("asia_c.csv"), "--out", p("asia_c_learned.dag")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("skeleton errors: ") != std::string::npos);
  const dfa::Dag g = dfa::read_dag(p("asia_c_learned.dag"));
  CHECK(g.size() == 8);
  CHECK(g.topological_order().size() == 8);
}

TEST_CASE("huge alpha makes the earliest step come first") {
  const Run r = run({"ts", "--n", "800", "--steps", "5", "--mode", "dirichlet", "--alpha", "1e6", "--n-samples", "3",
                     "--out", p("ts_alpha")});
  REQUIRE(r.code == 0);
  std::istringstream lines(slurp(workdir() / "ts_alpha" / "traces_dirichlet.jsonl"));
  std::string line;
  int first0 = 0, total = 0;
  while (std::getline(lines, line)) {
    const auto t = nlohmann::json::parse(line);
    REQUIRE(!t["steps"].empty());
    first0 += t["steps"][0]["step"] == 0;
    ++total;
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(first0) / total >= 0.95);
}

TEST_CASE("config file sets command options") {
  {
    std::ofstream cfg(p("ts.toml"));
    cfg << "[ts]\nmode = \"consecutive\"\ntau = 0\nn = 400\nsteps = 4\n";
  }
  const Run r = run({"--config", p("ts.toml"), "ts", "--out", p("ts_cfg")});
  REQUIRE(r.code == 0);
  const auto s = nlohmann::json::parse(slurp(workdir() / "ts_cfg" / "summary.json"));
  CHECK(!s.contains("dirichlet"));
  CHECK(s["consecutive"]["tau"] == 0.0);
  CHECK(s["consecutive"]["mean_stop_step"] == 0.0);
}
