#include "dfa/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace dfa {

// ---------------------------------------------------------------------------
// Gated synthetic

void HierarchicalSpec::validate() const {
  if (d < 2) throw Error(ErrorCode::InvalidArgument, "hierarchical data needs x0 and at least one gated feature");
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
  if (num_classes < 2) throw Error(ErrorCode::InvalidArgument, "at least two classes");
  if (n == 0) throw Error(ErrorCode::TooFewRows, "n must be positive");
}

Index hierarchical_gate(double x0, Index d) {
  const Index ranges = d - 1;
  const auto r = static_cast<Index>(std::clamp(x0, 0.0, 1.0) * static_cast<double>(ranges));
  return std::min(r, ranges - 1) + 1;
}

HierarchicalData gen_hierarchical(const HierarchicalSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x41e7u}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, spec.num_classes - 1);

  HierarchicalData out;
  const std::size_t n_weights = spec.per_feature_weights ? spec.d - 1 : 1;
  for (std::size_t k = 0; k < n_weights; ++k) {
    out.w1.push_back(unif(rng));
    out.w2.push_back(unif(rng));
  }
  const double sd = std::sqrt(spec.noise_var);
  Dataset& ds = out.data;
  ds.task = TaskKind::classification(spec.num_classes);
  ds.rows.resize(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.d));
  ds.labels.resize(spec.n);
  for (Index c = 0; c < spec.d; ++c) ds.feature_names.push_back("x" + std::to_string(c));
  for (Index r = 0; r < spec.n; ++r) {
    int y = label(rng);
    if (spec.flip_labels) y = spec.num_classes - 1 - y;
    const double x0 = unif(rng);
    const Index gate = hierarchical_gate(x0, spec.d);
    const auto row = static_cast<Eigen::Index>(r);
    ds.rows(row, 0) = x0;
    for (Index j = 1; j < spec.d; ++j) {
      const double z = normal(rng);
      if (j == gate) {
        const std::size_t w = spec.per_feature_weights ? j - 1 : 0;
        ds.rows(row, static_cast<Eigen::Index>(j)) = out.w1[w] * y + out.w2[w] * x0 + sd * z;
      } else {
        ds.rows(row, static_cast<Eigen::Index>(j)) = z;
      }
    }
    ds.labels[r] = y;
  }
  if (spec.normalize) ds = normalize(ds);
  return out;
}

// ---------------------------------------------------------------------------
// Linear-Gaussian networks

void LinearGaussianBnSpec::validate() const {
  if (dag.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty graph");
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
  if (weight_high < weight_low) throw Error(ErrorCode::InvalidArgument, "weight range is inverted");
  if (target != Target::None && target_node >= dag.size()) throw Error(ErrorCode::InvalidNode, "target node");
  if (n == 0) throw Error(ErrorCode::TooFewRows, "n must be positive");
}

GaussianParams linear_gaussian_population(const Dag& dag, const Eigen::MatrixXd& weights, double noise_var) {
  const auto n = static_cast<Eigen::Index>(dag.size());
  const Eigen::MatrixXd a = (Eigen::MatrixXd::Identity(n, n) - weights.transpose()).inverse();
  GaussianParams g;
  g.mean = Eigen::VectorXd::Zero(n);
  g.cov = noise_var * a * a.transpose();
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

BnData gen_linear_gaussian_bn(const LinearGaussianBnSpec& spec) {
  spec.validate();
  const Dag& dag = spec.dag;
  const Index nn = dag.size();
  const auto ne = static_cast<Eigen::Index>(nn);
  Rng rng(derive_seed(spec.seed, {0xb7u}));
  std::uniform_real_distribution<double> wdist(spec.weight_low, spec.weight_high);
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.noise_var));

  BnData out;
  out.weights = Eigen::MatrixXd::Zero(ne, ne);
  for (const Edge& e : dag.edges())
    out.weights(static_cast<Eigen::Index>(e.from), static_cast<Eigen::Index>(e.to)) = wdist(rng);

  const IndexSet topo = dag.topological_order();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.n), ne);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Index v : topo) {
      double val = noise(rng);
      for (Index p : dag.parents(v))
        val += out.weights(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(v)) * x(r, static_cast<Eigen::Index>(p));
      x(r, static_cast<Eigen::Index>(v)) = val;
    }
  }
  const GaussianParams pop = linear_gaussian_population(dag, out.weights, spec.noise_var);
  std::vector<std::string> names;
  for (Index v = 0; v < nn; ++v) names.push_back(dag.name(v));

  if (spec.target != LinearGaussianBnSpec::Target::Classification) {
    out.data.rows = std::move(x);
    out.data.feature_names = names;
    // no target: every node is a column, the last one stands in as y
    out.data.task = TaskKind::regression(spec.target == LinearGaussianBnSpec::Target::Regression ? spec.target_node
                                                                                               : nn - 1);
    out.dag = Dag(nn, dag.edges(), names);
    out.population = pop;
    return out;
  }

  // classification: move the target to the last node and split it at the median
  IndexSet order;
  for (Index v = 0; v < nn; ++v)
    if (v != spec.target_node) order.push_back(v);
  order.push_back(spec.target_node);
  std::vector<Index> new_of(nn);
  for (Index k = 0; k < nn; ++k) new_of[order[k]] = k;

  std::vector<double> t(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) t[static_cast<std::size_t>(r)] = x(r, static_cast<Eigen::Index>(spec.target_node));
  std::vector<double> sorted = t;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  out.threshold = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

  Dataset& ds = out.data;
  ds.task = TaskKind::classification(2);
  ds.rows.resize(x.rows(), ne - 1);
  for (Index k = 0; k + 1 < nn; ++k) {
    ds.rows.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(order[k]));
    ds.feature_names.push_back(names[order[k]]);
  }
  for (double v : t) ds.labels.push_back(v > out.threshold ? 1 : 0);

  std::vector<Edge> edges;
  for (const Edge& e : dag.edges()) edges.push_back({new_of[e.from], new_of[e.to]});
  std::vector<std::string> new_names;
  for (Index k = 0; k < nn; ++k) new_names.push_back(names[order[k]]);
  out.dag = Dag(nn, edges, new_names);

  const IndexSet idx(order.begin(), order.end());
  out.population.mean = Eigen::VectorXd::Zero(ne);
  out.population.cov = pop.cov(idx, idx);
  return out;
}

namespace {

Dag named_dag(const std::vector<std::string>& names, const std::vector<std::pair<std::string, std::string>>& edges) {
  auto id = [&](const std::string& n) {
    return static_cast<Index>(std::find(names.begin(), names.end(), n) - names.begin());
  };
  std::vector<Edge> es;
  for (const auto& [a, b] : edges) es.push_back({id(a), id(b)});
  return Dag(names.size(), es, names);
}

}  // namespace

Dag asia_dag() {
  return named_dag({"asia", "tub", "smoke", "lung", "bronc", "either", "xray", "dysp"},
                   {{"asia", "tub"},
                    {"tub", "either"},
                    {"smoke", "lung"},
                    {"smoke", "bronc"},
                    {"lung", "either"},
                    {"either", "xray"},
                    {"either", "dysp"},
                    {"bronc", "dysp"}});
}

Dag sachs_dag() {
  return named_dag({"Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk"},
                   {{"Raf", "Mek"},
                    {"Mek", "Erk"},
                    {"Erk", "Akt"},
                    {"Plcg", "PIP2"},
                    {"Plcg", "PIP3"},
                    {"PIP3", "PIP2"},
                    {"PKA", "Akt"},
                    {"PKA", "Erk"},
                    {"PKA", "Jnk"},
                    {"PKA", "Mek"},
                    {"PKA", "P38"},
                    {"PKA", "Raf"},
                    {"PKC", "Jnk"},
                    {"PKC", "Mek"},
                    {"PKC", "P38"},
                    {"PKC", "PKA"},
                    {"PKC", "Raf"}});
}

Dag toy_pruning_dag() {
  return named_dag({"x0", "x1", "x2", "x3", "y"}, {{"x2", "x0"}, {"y", "x0"}, {"y", "x1"}, {"x1", "x3"}});
}

Dag fixture_dag(const std::string& name) {
  if (name == "asia") return asia_dag();
  if (name == "sachs") return sachs_dag();
  if (name == "toy") return toy_pruning_dag();
  throw Error(ErrorCode::InvalidArgument, "unknown graph fixture '" + name + "'");
}

// ---------------------------------------------------------------------------
// Time-series chain

void ChainTimeSeriesSpec::validate() const {
  if (num_steps < 2) throw Error(ErrorCode::InvalidArgument, "chain needs at least two steps");
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
  if (n == 0) throw Error(ErrorCode::TooFewRows, "n must be positive");
}

Dataset gen_chain_timeseries(const ChainTimeSeriesSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x75u}));
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.noise_var));
  std::bernoulli_distribution coin(0.5);
  Dataset ds;
  ds.task = TaskKind::classification(2);
  ds.rows.resize(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.num_steps));
  for (Index t = 0; t < spec.num_steps; ++t) ds.feature_names.push_back("t" + std::to_string(t));
  const double steps = static_cast<double>(spec.num_steps);
  for (Eigen::Index r = 0; r < ds.rows.rows(); ++r) {
    const int y = coin(rng) ? 1 : 0;
    const double s = 2.0 * y - 1.0;
    double prev = 0.0;
    for (Index t = 0; t < spec.num_steps; ++t) {
      prev = spec.phi * prev + s * spec.drift * static_cast<double>(t + 1) / steps + noise(rng);
      ds.rows(r, static_cast<Eigen::Index>(t)) = prev;
    }
    ds.labels.push_back(y);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw Error(ErrorCode::ParseError,
                "row " + std::to_string(row) + ", column " + std::to_string(col) + ": not a number: '" + s + "'");
  return v;
}

}  // namespace

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> cells;
  std::size_t line_no = 0, width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto parts = split_line(line);
    if (first) {
      width = parts.size();
      first = false;
      if (options.header) {
        header = std::move(parts);
        continue;
      }
    }
    if (parts.size() != width)
      throw Error(ErrorCode::RaggedRows, "line " + std::to_string(line_no) + " has " + std::to_string(parts.size()) +
                                             " cells, expected " + std::to_string(width));
    std::vector<double> row;
    for (std::size_t c = 0; c < parts.size(); ++c) row.push_back(parse_cell(parts[c], line_no, c));
    cells.push_back(std::move(row));
  }
  if (width == 0) throw Error(ErrorCode::ParseError, "empty CSV");
  if (header.empty())
    for (std::size_t c = 0; c < width; ++c) header.push_back("c" + std::to_string(c));

  std::size_t label = width - 1;
  if (!options.label_column.empty()) {
    auto it = std::find(header.begin(), header.end(), options.label_column);
    if (it != header.end()) {
      label = static_cast<std::size_t>(it - header.begin());
    } else {
      std::size_t idx = 0;
      const auto& s = options.label_column;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), idx);
      if (ec != std::errc() || ptr != s.data() + s.size() || idx >= width)
        throw Error(ErrorCode::ParseError, "label column '" + s + "' not found");
      label = idx;
    }
  }

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(cells.size());
  if (options.regression) {
    ds.task = TaskKind::regression(label);
    ds.rows.resize(n, static_cast<Eigen::Index>(width));
    for (Eigen::Index r = 0; r < n; ++r)
      for (std::size_t c = 0; c < width; ++c) ds.rows(r, static_cast<Eigen::Index>(c)) = cells[static_cast<std::size_t>(r)][c];
    ds.feature_names = header;
  } else {
    ds.rows.resize(n, static_cast<Eigen::Index>(width - 1));
    int max_label = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = cells[static_cast<std::size_t>(r)];
      Eigen::Index k = 0;
      for (std::size_t c = 0; c < width; ++c)
        if (c != label) ds.rows(r, k++) = row[c];
      const double y = row[label];
      if (y < 0 || y != std::floor(y))
        throw Error(ErrorCode::ParseError, "row " + std::to_string(r + 1) + ", column " + std::to_string(label) +
                                               ": class label must be a non-negative integer");
      ds.labels.push_back(static_cast<int>(y));
      max_label = std::max(max_label, static_cast<int>(y));
    }
    ds.task = TaskKind::classification(std::max(2, max_label + 1));
    for (std::size_t c = 0; c < width; ++c)
      if (c != label) ds.feature_names.push_back(header[c]);
  }
  ds.validate();
  if (options.normalize) ds = normalize(ds);
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open data file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), options);
}

std::string format_csv(const Dataset& ds) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index c = 0; c < ds.num_columns(); ++c) {
    if (c) os << ',';
    os << (c < ds.feature_names.size() ? ds.feature_names[c] : "c" + std::to_string(c));
  }
  if (ds.task.is_classification()) os << ",y";
  os << '\n';
  for (Eigen::Index r = 0; r < ds.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.rows.cols(); ++c) {
      if (c) os << ',';
      os << ds.rows(r, c);
    }
    if (ds.task.is_classification()) os << ',' << ds.labels[static_cast<std::size_t>(r)];
    os << '\n';
  }
  return os.str();
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << format_csv(ds);
}

nlohmann::json dag_to_json(const Dag& dag) {
  nlohmann::json names = nlohmann::json::array();
  for (Index v = 0; v < dag.size(); ++v) names.push_back(dag.name(v));
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : dag.edges()) edges.push_back({dag.name(e.from), dag.name(e.to)});
  return {{"nodes", names}, {"edges", edges}};
}

Dag dag_from_json(const nlohmann::json& j) {
  const auto names = j.at("nodes").get<std::vector<std::string>>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    const auto a = std::find(names.begin(), names.end(), e.at(0).get<std::string>());
    const auto b = std::find(names.begin(), names.end(), e.at(1).get<std::string>());
    if (a == names.end() || b == names.end()) throw Error(ErrorCode::InvalidNode, "edge names an unknown node");
    edges.push_back({static_cast<Index>(a - names.begin()), static_cast<Index>(b - names.begin())});
  }
  return Dag(names.size(), edges, names);
}

}  // namespace dfa
