#include "dfa/cmi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace dfa {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct RunningMean {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double std_error() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

IndexSet sorted_copy(IndexSet s) {
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

std::string_view to_string(CmiEstimator e) {
  switch (e) {
    case CmiEstimator::ClassificationMc: return "classification_mc";
    case CmiEstimator::RegressionMc: return "regression_mc";
    case CmiEstimator::GaussianExact: return "gaussian_exact";
    case CmiEstimator::DiscreteBruteforce: return "discrete_bruteforce";
  }
  return "unknown";
}

double kl_discrete(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::SupportMismatch, "distributions have different lengths");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    if (q[k] <= 0.0) throw Error(ErrorCode::SupportMismatch, "q vanishes where p is positive (entry " + std::to_string(k) + ")");
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl;
}

// ---------------------------------------------------------------------------
// Classification

CmiEstimate cmi_classification(const ClassMixtureConditional& over_block, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be positive");
  const std::size_t n_comp = over_block.components.size();
  const auto n_classes = static_cast<std::size_t>(over_block.num_classes);
  const std::vector<double> log_prior_post = over_block.log_class_posterior();  // log P(y | x_o)

  // p(x_B | x_o): components weighted by their normalized evidence
  std::vector<double> mix_w = over_block.log_weight;
  softmax_inplace(mix_w);
  MixtureModel sampler;
  sampler.weights = mix_w;
  sampler.components = over_block.components;
  PreparedMixture prepared(sampler);

  Rng rng(seed);
  RunningMean acc;
  std::vector<double> terms(n_comp);
  std::vector<std::vector<double>> by_class(n_classes);
  std::vector<double> log_post(n_classes);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Eigen::VectorXd x = prepared.draw(rng);
    for (auto& v : by_class) v.clear();
    for (std::size_t c = 0; c < n_comp; ++c) {
      terms[c] = over_block.log_weight[c] == kNegInf ? kNegInf
                                                     : over_block.log_weight[c] + prepared.component(c).log_pdf(x);
      by_class[static_cast<std::size_t>(over_block.class_of[c])].push_back(terms[c]);
    }
    const double total = log_sum_exp(terms);
    double kl = 0.0;
    for (std::size_t y = 0; y < n_classes; ++y) {
      log_post[y] = log_sum_exp(by_class[y]) - total;
      if (log_post[y] == kNegInf) continue;
      kl += std::exp(log_post[y]) * (log_post[y] - log_prior_post[y]);
    }
    acc.add(kl);
  }
  return {acc.mean(), n_samples, CmiEstimator::ClassificationMc, acc.std_error()};
}

CmiEstimate cmi_classification_block(const ClassConditionalModel& ccm, const IndexSet& block,
                                     const ObservedState& state, std::size_t n_samples, std::uint64_t seed) {
  for (Index i : block)
    if (state.contains(i)) throw Error(ErrorCode::AlreadyObserved, "feature " + std::to_string(i) + " is already observed");
  if (block.empty()) throw Error(ErrorCode::EmptyTarget, "empty feature block");
  const auto cond = condition_classes(ccm, state.values_vector(), state.observed(), block);
  return cmi_classification(cond, n_samples, seed);
}

CmiEstimate cmi_classification(const ClassConditionalModel& ccm, Index i, const ObservedState& state,
                               std::size_t n_samples, std::uint64_t seed) {
  return cmi_classification_block(ccm, IndexSet{i}, state, n_samples, seed);
}

// ---------------------------------------------------------------------------
// Regression

CmiEstimate cmi_regression(const ConditionalDistribution& over_pair, Index i, Index y_slot, std::size_t n_samples,
                           std::uint64_t seed) {
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be positive");
  const ConditionalDistribution pair = over_pair.marginal(IndexSet{i, y_slot});
  const ConditionalDistribution y_only = pair.marginal(IndexSet{y_slot});
  const PreparedMixture joint(pair.mixture);
  const PreparedMixture y_marginal(y_only.mixture);

  Rng rng(seed);
  RunningMean acc;
  Eigen::VectorXd xi(1), yv(1);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Eigen::VectorXd draw = joint.draw(rng);
    xi(0) = draw(0);
    yv(0) = draw(1);
    // p(y | x_i, x_o) is evaluated at the sampled x_i
    const ConditionalDistribution y_given_i = condition(pair, xi, IndexSet{i}, IndexSet{y_slot});
    const double lhs = PreparedMixture(y_given_i.mixture).log_pdf(yv);
    acc.add(lhs - y_marginal.log_pdf(yv));
  }
  return {acc.mean(), n_samples, CmiEstimator::RegressionMc, acc.std_error()};
}

CmiEstimate cmi_regression(const MixtureModel& joint, Index i, const ObservedState& state, Index y_slot,
                           std::size_t n_samples, std::uint64_t seed) {
  if (state.contains(i)) throw Error(ErrorCode::AlreadyObserved, "feature " + std::to_string(i) + " is already observed");
  if (state.contains(y_slot)) throw Error(ErrorCode::TargetObserved, "the regression target is observed");
  if (i == y_slot) throw Error(ErrorCode::InvalidArgument, "candidate equals the target slot");
  const ConditionalDistribution pair = condition(joint, state.values_vector(), state.observed(), IndexSet{i, y_slot});
  return cmi_regression(pair, i, y_slot, n_samples, seed);
}

// ---------------------------------------------------------------------------
// Exact oracles

CmiEstimate cmi_gaussian_exact(const GaussianParams& g, Index i, Index j, const IndexSet& cond) {
  if (i == j) throw Error(ErrorCode::InvalidArgument, "i and j must differ");
  if (std::find(cond.begin(), cond.end(), i) != cond.end() || std::find(cond.begin(), cond.end(), j) != cond.end())
    throw Error(ErrorCode::OverlappingSets, "i or j inside the conditioning set");
  const IndexSet pair{i, j};
  Eigen::MatrixXd c = g.cov(pair, pair);
  if (!cond.empty()) {
    const Eigen::MatrixXd s_cc = g.cov(cond, cond);
    Eigen::LLT<Eigen::MatrixXd> llt(s_cc);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "conditioning block");
    const Eigen::MatrixXd s_cp = g.cov(cond, pair);
    c -= s_cp.transpose() * llt.solve(s_cp);
  }
  if (!(c(0, 0) > 0.0) || !(c(1, 1) > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "conditional variance <= 0");
  const double cross = 0.5 * (c(0, 1) + c(1, 0));
  if (cross == 0.0) return {0.0, 1, CmiEstimator::GaussianExact, 0.0};
  const double rho2 = cross * cross / (c(0, 0) * c(1, 1));
  if (!(rho2 < 1.0)) throw Error(ErrorCode::NotPositiveDefinite, "partial correlation of magnitude 1");
  return {-0.5 * std::log1p(-rho2), 1, CmiEstimator::GaussianExact, 0.0};
}

CmiEstimate cmi_discrete_bruteforce(const DiscreteJoint& joint, Index i, Index j, const IndexSet& cond) {
  const std::size_t nv = joint.num_variables();
  std::size_t cells = 1;
  for (int c : joint.cardinalities) {
    if (c < 1) throw Error(ErrorCode::InvalidArgument, "cardinality must be positive");
    cells *= static_cast<std::size_t>(c);
  }
  if (joint.p.size() != cells) throw Error(ErrorCode::DimensionMismatch, "table size differs from product of cardinalities");
  if (i >= nv || j >= nv) throw Error(ErrorCode::IndexOutOfRange, "variable index");
  if (i == j) throw Error(ErrorCode::InvalidArgument, "i and j must differ");
  for (Index c : cond) {
    if (c >= nv) throw Error(ErrorCode::IndexOutOfRange, "conditioning variable");
    if (c == i || c == j) throw Error(ErrorCode::OverlappingSets, "i or j inside the conditioning set");
  }
  double total = 0.0;
  for (double v : joint.p) {
    if (v < 0.0) throw Error(ErrorCode::NotNormalized, "negative probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::NotNormalized, "table sums to " + std::to_string(total));

  const IndexSet c_vars = sorted_copy(cond);
  using Key = std::vector<int>;
  std::map<Key, double> p_abc, p_ac, p_bc, p_c;
  std::vector<int> outcome(nv, 0);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::size_t rem = cell;
    for (std::size_t v = nv; v-- > 0;) {
      outcome[v] = static_cast<int>(rem % static_cast<std::size_t>(joint.cardinalities[v]));
      rem /= static_cast<std::size_t>(joint.cardinalities[v]);
    }
    const double p = joint.p[cell];
    Key kc;
    for (Index c : c_vars) kc.push_back(outcome[c]);
    Key kac = kc, kbc = kc, kabc = kc;
    kac.push_back(outcome[i]);
    kbc.push_back(outcome[j]);
    kabc.push_back(outcome[i]);
    kabc.push_back(outcome[j]);
    p_abc[kabc] += p;
    p_ac[kac] += p;
    p_bc[kbc] += p;
    p_c[kc] += p;
  }
  double cmi = 0.0;
  for (const auto& [key, p] : p_abc) {
    if (p <= 0.0) continue;
    Key kc(key.begin(), key.end() - 2);
    Key kac = kc, kbc = kc;
    kac.push_back(key[key.size() - 2]);
    kbc.push_back(key.back());
    cmi += p * std::log(p * p_c[kc] / (p_ac[kac] * p_bc[kbc]));
  }
  return {std::max(0.0, cmi), 1, CmiEstimator::DiscreteBruteforce, 0.0};
}

}  // namespace dfa
