#include "dfa/condmodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace dfa {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2 pi)
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd take(const Eigen::MatrixXd& m, const IndexSet& rows, const IndexSet& cols) { return m(rows, cols); }

Eigen::VectorXd take(const Eigen::VectorXd& v, const IndexSet& idx) { return v(idx); }

void check_indices(Index dim, const IndexSet& o, const IndexSet& u) {
  std::vector<char> seen(dim, 0);
  for (Index i : o) {
    if (i >= dim) throw Error(ErrorCode::IndexOutOfRange, "observed index " + std::to_string(i));
    if (seen[i]) throw Error(ErrorCode::OverlappingSets, "index " + std::to_string(i) + " listed twice");
    seen[i] = 1;
  }
  for (Index i : u) {
    if (i >= dim) throw Error(ErrorCode::IndexOutOfRange, "target index " + std::to_string(i));
    if (seen[i]) throw Error(ErrorCode::OverlappingSets, "index " + std::to_string(i) + " is both observed and target");
    seen[i] = 1;
  }
}

struct ConditionedGaussian {
  GaussianParams params;
  double log_evidence = 0.0;  // log N(x_o; mu_o, S_oo)
};

ConditionedGaussian condition_one(const GaussianParams& g, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u) {
  ConditionedGaussian out;
  if (o.empty()) {
    out.params.mean = take(g.mean, u);
    out.params.cov = take(g.cov, u, u);
    return out;
  }
  const Eigen::MatrixXd s_oo = take(g.cov, o, o);
  Eigen::LLT<Eigen::MatrixXd> llt(s_oo);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "observed block of covariance");
  const Eigen::VectorXd diff = x_o - take(g.mean, o);
  const Eigen::MatrixXd& lower = llt.matrixL();
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  const Eigen::VectorXd z = llt.matrixL().solve(diff);
  out.log_evidence = -0.5 * (static_cast<double>(o.size()) * kLog2Pi + log_det + z.squaredNorm());

  if (!u.empty()) {
    const Eigen::MatrixXd s_ou = take(g.cov, o, u);
    const Eigen::MatrixXd gain_t = llt.solve(s_ou);  // S_oo^-1 S_ou
    out.params.mean = take(g.mean, u) + gain_t.transpose() * diff;
    Eigen::MatrixXd cov = take(g.cov, u, u) - s_ou.transpose() * gain_t;
    out.params.cov = 0.5 * (cov + cov.transpose());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation

void GaussianParams::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw Error(ErrorCode::DimensionMismatch, "covariance shape does not match mean");
  if (cov.size() > 0 && (cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw Error(ErrorCode::NotPositiveDefinite, "covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "covariance Cholesky failed");
}

MixtureModel MixtureModel::single(GaussianParams g) {
  MixtureModel m;
  m.weights = {1.0};
  m.components.push_back(std::move(g));
  return m;
}

void MixtureModel::validate() const {
  if (components.empty() || weights.size() != components.size())
    throw Error(ErrorCode::DimensionMismatch, "mixture needs one weight per component");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::NotNormalized, "negative mixture weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::NotNormalized, "mixture weights do not sum to 1");
  for (const auto& c : components) {
    if (c.dim() != dim()) throw Error(ErrorCode::DimensionMismatch, "mixture components differ in dimension");
    c.validate();
  }
}

void ClassConditionalModel::validate() const {
  if (class_prior.size() != per_class.size() || class_prior.empty())
    throw Error(ErrorCode::DimensionMismatch, "one class model per prior entry required");
  double total = 0.0;
  for (double p : class_prior) {
    if (!(p >= 0.0)) throw Error(ErrorCode::NotNormalized, "negative class prior");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::NotNormalized, "class prior does not sum to 1");
  for (const auto& m : per_class) {
    m.validate();
    if (m.dim() != dim()) throw Error(ErrorCode::DimensionMismatch, "class models differ in dimension");
  }
}

// ---------------------------------------------------------------------------
// Numerics

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  const double hi = *std::max_element(v.begin(), v.end());
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

double softmax_inplace(std::vector<double>& v) {
  const double lse = log_sum_exp(v);
  for (double& x : v) x = std::exp(x - lse);
  return lse;
}

double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  if (x.size() != mean.size()) throw Error(ErrorCode::DimensionMismatch, "point and mean differ in dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "covariance");
  const Eigen::MatrixXd& lower = llt.matrixL();
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det + z.squaredNorm());
}

double gaussian_entropy(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "entropy of a non-PD covariance");
  const Eigen::MatrixXd& lower = llt.matrixL();
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  return 0.5 * (static_cast<double>(cov.rows()) * (kLog2Pi + 1.0) + log_det);
}

PreparedGaussian::PreparedGaussian(const GaussianParams& g) : mean_(g.mean) {
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "covariance");
  lower_ = llt.matrixL();
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

double PreparedGaussian::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd z = lower_.triangularView<Eigen::Lower>().solve(x - mean_);
  return -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det_ + z.squaredNorm());
}

Eigen::VectorXd PreparedGaussian::draw(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return mean_ + lower_.triangularView<Eigen::Lower>() * z;
}

PreparedMixture::PreparedMixture(const MixtureModel& m) {
  log_weights_.reserve(m.size());
  components_.reserve(m.size());
  double running = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    log_weights_.push_back(m.weights[k] > 0.0 ? std::log(m.weights[k]) : kNegInf);
    components_.emplace_back(m.components[k]);
    running += m.weights[k];
    cumulative_.push_back(running);
  }
}

void PreparedMixture::component_log_terms(const Eigen::Ref<const Eigen::VectorXd>& x, std::vector<double>& out) const {
  out.resize(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k)
    out[k] = log_weights_[k] == kNegInf ? kNegInf : log_weights_[k] + components_[k].log_pdf(x);
}

double PreparedMixture::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (components_.size() == 1) return components_.front().log_pdf(x);
  std::vector<double> terms;
  component_log_terms(x, terms);
  return log_sum_exp(terms);
}

std::size_t PreparedMixture::draw_component(Rng& rng) const {
  if (components_.size() == 1) return 0;
  std::uniform_real_distribution<double> unit(0.0, cumulative_.back());
  const double u = unit(rng);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  std::size_t k = static_cast<std::size_t>(it - cumulative_.begin());
  if (k >= components_.size()) k = components_.size() - 1;
  // never land on a zero-weight component
  while (log_weights_[k] == kNegInf && k > 0) --k;
  return k;
}

Eigen::VectorXd PreparedMixture::draw(Rng& rng) const { return components_[draw_component(rng)].draw(rng); }

// ---------------------------------------------------------------------------
// Fitting

GaussianParams fit_gaussian(const Eigen::MatrixXd& rows, double lambda) {
  const auto n = rows.rows();
  const auto d = rows.cols();
  if (n <= d)
    throw Error(ErrorCode::TooFewRows,
                "Gaussian fit needs n > d (n=" + std::to_string(n) + ", d=" + std::to_string(d) + ")");
  GaussianParams g;
  g.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  g.cov.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "regularized covariance failed Cholesky");
  return g;
}

GaussianParams fit_gaussian(const Dataset& train, double lambda) { return fit_gaussian(train.rows, lambda); }

double mean_log_likelihood(const MixtureModel& model, const Eigen::MatrixXd& rows) {
  PreparedMixture pm(model);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) total += pm.log_pdf(rows.row(r).transpose());
  return total / static_cast<double>(rows.rows());
}

namespace {

// log N(x_r; component) for every row, vectorized over rows.
Eigen::VectorXd row_log_pdfs(const Eigen::MatrixXd& rows, const GaussianParams& g, bool& ok) {
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  ok = llt.info() == Eigen::Success;
  if (!ok) return {};
  const Eigen::MatrixXd& lower = llt.matrixL();
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  Eigen::MatrixXd diff_t = (rows.rowwise() - g.mean.transpose()).transpose();
  llt.matrixL().solveInPlace(diff_t);
  const Eigen::VectorXd maha = diff_t.colwise().squaredNorm().transpose();
  return (-0.5 * (static_cast<double>(rows.cols()) * kLog2Pi + log_det + maha.array())).matrix();
}

IndexSet farthest_point_seeds(const Eigen::MatrixXd& rows, int m, std::uint64_t seed) {
  const Index n = static_cast<Index>(rows.rows());
  Rng rng(derive_seed(seed, {0xE11u}));
  std::uniform_int_distribution<Index> pick(0, n - 1);
  IndexSet chosen{pick(rng)};
  Eigen::VectorXd min_dist = (rows.rowwise() - rows.row(static_cast<Eigen::Index>(chosen[0]))).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < m) {
    Eigen::Index best = 0;
    min_dist.maxCoeff(&best);
    chosen.push_back(static_cast<Index>(best));
    min_dist = min_dist.cwiseMin((rows.rowwise() - rows.row(best)).rowwise().squaredNorm());
  }
  return chosen;
}

}  // namespace

MixtureFit fit_mixture_em(const Eigen::MatrixXd& rows, const EmOptions& opt) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = rows.cols();
  const int m = opt.components;
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "mixture needs at least one component");
  if (n < 10 * m)
    throw Error(ErrorCode::TooFewRows, "EM needs n >= 10 m (n=" + std::to_string(n) + ", m=" + std::to_string(m) + ")");

  const GaussianParams global = fit_gaussian(rows, opt.lambda);
  MixtureFit fit;
  MixtureModel& model = fit.model;
  for (Index s : farthest_point_seeds(rows, m, opt.seed)) {
    GaussianParams g;
    g.mean = rows.row(static_cast<Eigen::Index>(s)).transpose();
    g.cov = global.cov;
    model.components.push_back(std::move(g));
    model.weights.push_back(1.0 / m);
  }

  Eigen::MatrixXd log_resp(n, m);
  Eigen::VectorXd row_ll(n);
  MixtureModel best = model;
  double best_ll = kNegInf;
  double prev_ll = kNegInf;
  const double min_mass = std::max(1e-8 * static_cast<double>(n), static_cast<double>(d) + 1.0);

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    // E-step, log domain
    for (int k = 0; k < m; ++k) {
      bool ok = true;
      Eigen::VectorXd lp = row_log_pdfs(rows, model.components[static_cast<std::size_t>(k)], ok);
      if (!ok) throw Error(ErrorCode::SingularCovariance, "component covariance lost definiteness");
      const double lw = model.weights[static_cast<std::size_t>(k)] > 0 ? std::log(model.weights[static_cast<std::size_t>(k)]) : kNegInf;
      log_resp.col(k) = lp.array() + lw;
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      const double hi = log_resp.row(r).maxCoeff();
      row_ll(r) = hi + std::log((log_resp.row(r).array() - hi).exp().sum());
    }
    const double ll = row_ll.mean();
    fit.log_likelihood_trace.push_back(ll);
    fit.iterations = iter + 1;
    if (ll > best_ll) {
      best_ll = ll;
      best = model;
    }
    if (iter > 0 && std::abs(ll - prev_ll) < opt.tol) {
      fit.converged = true;
      break;
    }
    prev_ll = ll;

    // M-step
    const Eigen::MatrixXd resp = (log_resp.colwise() - row_ll).array().exp().matrix();
    for (int k = 0; k < m; ++k) {
      auto& comp = model.components[static_cast<std::size_t>(k)];
      const Eigen::VectorXd r = resp.col(k);
      const double mass = r.sum();
      bool reset = mass < min_mass;
      if (!reset) {
        comp.mean = (rows.transpose() * r) / mass;
        const Eigen::MatrixXd centered = rows.rowwise() - comp.mean.transpose();
        Eigen::MatrixXd cov = (centered.array().colwise() * r.array()).matrix().transpose() * centered / mass;
        cov = 0.5 * (cov + cov.transpose());
        cov.diagonal().array() += opt.lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) {
          comp.cov = std::move(cov);
          model.weights[static_cast<std::size_t>(k)] = mass / static_cast<double>(n);
        } else {
          reset = true;
        }
      }
      if (reset) {
        // re-seed on the worst explained row with the global covariance
        Eigen::Index worst = 0;
        row_ll.minCoeff(&worst);
        comp.mean = rows.row(worst).transpose();
        comp.cov = global.cov;
        model.weights[static_cast<std::size_t>(k)] = 1.0 / m;
        ++fit.component_resets;
      }
    }
    const double total = std::accumulate(model.weights.begin(), model.weights.end(), 0.0);
    for (double& w : model.weights) w /= total;
  }

  if (!fit.converged) model = best;
  return fit;
}

// ---------------------------------------------------------------------------
// Conditioning

Eigen::VectorXd ConditionalDistribution::mean() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t k = 0; k < mixture.size(); ++k) out += mixture.weights[k] * mixture.components[k].mean;
  return out;
}

ConditionalDistribution ConditionalDistribution::marginal(std::span<const Index> keep) const {
  IndexSet local;
  for (Index g : keep) {
    auto it = std::find(targets.begin(), targets.end(), g);
    if (it == targets.end()) throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(g) + " not a target");
    local.push_back(static_cast<Index>(it - targets.begin()));
  }
  ConditionalDistribution out;
  out.targets.assign(keep.begin(), keep.end());
  out.mixture.weights = mixture.weights;
  for (const auto& c : mixture.components) out.mixture.components.push_back({take(c.mean, local), take(c.cov, local, local)});
  return out;
}

ConditionalDistribution condition(const GaussianParams& g, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u) {
  return condition(MixtureModel::single(g), x_o, o, u);
}

ConditionalDistribution condition(const MixtureModel& m, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u) {
  if (u.empty()) throw Error(ErrorCode::EmptyTarget, "conditional over an empty target set");
  if (static_cast<Index>(x_o.size()) != o.size()) throw Error(ErrorCode::DimensionMismatch, "x_o length differs from |o|");
  check_indices(m.dim(), o, u);

  ConditionalDistribution out;
  out.targets = u;
  std::vector<double> log_w(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    ConditionedGaussian cg = condition_one(m.components[k], x_o, o, u);
    log_w[k] = m.weights[k] > 0.0 ? std::log(m.weights[k]) + cg.log_evidence : kNegInf;
    out.mixture.components.push_back(std::move(cg.params));
  }
  if (m.size() == 1) {
    out.mixture.weights = {1.0};
  } else {
    if (log_sum_exp(log_w) == kNegInf) throw Error(ErrorCode::NotNormalized, "every component has zero weight");
    softmax_inplace(log_w);
    out.mixture.weights = std::move(log_w);
  }
  return out;
}

ConditionalDistribution condition(const ConditionalDistribution& cd, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u) {
  auto local_of = [&](Index g) {
    auto it = std::find(cd.targets.begin(), cd.targets.end(), g);
    if (it == cd.targets.end()) throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(g) + " not a target");
    return static_cast<Index>(it - cd.targets.begin());
  };
  IndexSet lo, lu;
  for (Index g : o) lo.push_back(local_of(g));
  for (Index g : u) lu.push_back(local_of(g));
  ConditionalDistribution out = condition(cd.mixture, x_o, lo, lu);
  out.targets = u;
  return out;
}

double log_marginal(const MixtureModel& m, const Eigen::VectorXd& x_o, const IndexSet& o) {
  if (o.empty()) return 0.0;
  check_indices(m.dim(), o, {});
  std::vector<double> terms(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    terms[k] = m.weights[k] > 0.0 ? std::log(m.weights[k]) + condition_one(m.components[k], x_o, o, {}).log_evidence
                                  : kNegInf;
  }
  return log_sum_exp(terms);
}

Eigen::MatrixXd sample(const ConditionalDistribution& cd, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  PreparedMixture pm(cd.mixture);
  Rng rng(seed);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cd.dim()));
  for (std::size_t s = 0; s < n; ++s) out.row(static_cast<Eigen::Index>(s)) = pm.draw(rng).transpose();
  return out;
}

double log_density(const ConditionalDistribution& cd, const Eigen::VectorXd& x_u) {
  if (static_cast<Index>(x_u.size()) != cd.dim())
    throw Error(ErrorCode::DimensionMismatch, "point has " + std::to_string(x_u.size()) + " coordinates, expected " +
                                                  std::to_string(cd.dim()));
  return PreparedMixture(cd.mixture).log_pdf(x_u);
}

// ---------------------------------------------------------------------------
// Class-conditional queries

std::vector<double> ClassMixtureConditional::log_class_posterior() const {
  std::vector<std::vector<double>> per_class(static_cast<std::size_t>(num_classes));
  for (std::size_t c = 0; c < class_of.size(); ++c) per_class[static_cast<std::size_t>(class_of[c])].push_back(log_weight[c]);
  std::vector<double> out(static_cast<std::size_t>(num_classes));
  for (std::size_t y = 0; y < out.size(); ++y) out[y] = log_sum_exp(per_class[y]);
  const double lse = log_sum_exp(out);
  for (double& v : out) v -= lse;
  return out;
}

ConditionalDistribution ClassMixtureConditional::marginal_over_classes() const {
  ConditionalDistribution out;
  out.targets = targets;
  std::vector<double> w = log_weight;
  softmax_inplace(w);
  out.mixture.weights = std::move(w);
  out.mixture.components = components;
  return out;
}

ClassMixtureConditional ClassMixtureConditional::restrict(std::span<const Index> keep) const {
  IndexSet local;
  for (Index g : keep) {
    auto it = std::find(targets.begin(), targets.end(), g);
    if (it == targets.end()) throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(g) + " not a target");
    local.push_back(static_cast<Index>(it - targets.begin()));
  }
  ClassMixtureConditional out;
  out.targets.assign(keep.begin(), keep.end());
  out.class_of = class_of;
  out.log_weight = log_weight;
  out.num_classes = num_classes;
  out.components.reserve(components.size());
  for (const auto& c : components) out.components.push_back({take(c.mean, local), take(c.cov, local, local)});
  return out;
}

ClassMixtureConditional condition_classes(const ClassConditionalModel& ccm, const Eigen::VectorXd& x_o,
                                          const IndexSet& o, const IndexSet& u) {
  if (static_cast<Index>(x_o.size()) != o.size()) throw Error(ErrorCode::DimensionMismatch, "x_o length differs from |o|");
  check_indices(ccm.dim(), o, u);
  ClassMixtureConditional out;
  out.targets = u;
  out.num_classes = ccm.num_classes();
  for (int y = 0; y < ccm.num_classes(); ++y) {
    const double log_prior = ccm.class_prior[static_cast<std::size_t>(y)] > 0.0
                                 ? std::log(ccm.class_prior[static_cast<std::size_t>(y)])
                                 : kNegInf;
    const MixtureModel& m = ccm.per_class[static_cast<std::size_t>(y)];
    for (std::size_t k = 0; k < m.size(); ++k) {
      ConditionedGaussian cg = condition_one(m.components[k], x_o, o, u);
      out.class_of.push_back(y);
      out.log_weight.push_back(m.weights[k] > 0.0 ? log_prior + std::log(m.weights[k]) + cg.log_evidence : kNegInf);
      out.components.push_back(std::move(cg.params));
    }
  }
  return out;
}

std::vector<double> log_class_posterior(const ClassConditionalModel& ccm, const Eigen::VectorXd& x_o,
                                        const IndexSet& o) {
  if (o.empty()) {
    std::vector<double> out;
    for (double p : ccm.class_prior) out.push_back(p > 0.0 ? std::log(p) : kNegInf);
    return out;
  }
  return condition_classes(ccm, x_o, o, {}).log_class_posterior();
}

std::vector<double> class_posterior(const ClassConditionalModel& ccm, const Eigen::VectorXd& x_o, const IndexSet& o) {
  if (o.empty()) return ccm.class_prior;
  std::vector<double> lp = log_class_posterior(ccm, x_o, o);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

ConditionalDistribution features_given_obs(const ClassConditionalModel& ccm, const IndexSet& block,
                                           const Eigen::VectorXd& x_o, const IndexSet& o) {
  for (Index i : block)
    if (std::find(o.begin(), o.end(), i) != o.end())
      throw Error(ErrorCode::AlreadyObserved, "feature " + std::to_string(i) + " is already observed");
  if (block.empty()) throw Error(ErrorCode::EmptyTarget, "empty feature block");
  return condition_classes(ccm, x_o, o, block).marginal_over_classes();
}

ConditionalDistribution feature_marginal_given_obs(const ClassConditionalModel& ccm, Index i,
                                                   const Eigen::VectorXd& x_o, const IndexSet& o) {
  return features_given_obs(ccm, IndexSet{i}, x_o, o);
}

// ---------------------------------------------------------------------------
// Engine

EngineSpec EngineSpec::parse(const std::string& text) {
  std::string name = text;
  int components = 1;
  const auto open = text.find('(');
  if (open != std::string::npos) {
    const auto close = text.find(')', open);
    if (close == std::string::npos) throw Error(ErrorCode::InvalidArgument, "unbalanced engine spec '" + text + "'");
    name = text.substr(0, open);
    try {
      components = std::stoi(text.substr(open + 1, close - open - 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad component count in '" + text + "'");
    }
  }
  if (components < 1) throw Error(ErrorCode::InvalidArgument, "component count must be >= 1");
  EngineSpec spec;
  spec.components = components;
  if (name == "gaussian") {
    spec.kind = EngineKind::Gaussian;
    spec.components = 1;
  } else if (name == "class_conditional") {
    spec.kind = EngineKind::ClassConditional;
  } else if (name == "mixture") {
    spec.kind = EngineKind::Mixture;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown engine '" + text + "'");
  }
  return spec;
}

std::string EngineSpec::to_string() const {
  switch (kind) {
    case EngineKind::Gaussian: return "gaussian";
    case EngineKind::ClassConditional: return "class_conditional(" + std::to_string(components) + ")";
    case EngineKind::Mixture: return "mixture(" + std::to_string(components) + ")";
  }
  return "gaussian";
}

Engine::Engine(ClassConditionalModel ccm, EngineSpec spec) : model_(std::move(ccm)), spec_(spec) {}
Engine::Engine(JointModel joint, EngineSpec spec) : model_(std::move(joint)), spec_(spec) {}

TaskKind Engine::task() const {
  if (is_classification()) return TaskKind::classification(classes().num_classes());
  return TaskKind::regression(joint().target_slot);
}

Index Engine::num_features() const {
  if (is_classification()) return classes().dim();
  return joint().density.dim() - 1;
}

Index Engine::density_index(Index feature) const {
  if (feature >= num_features()) throw Error(ErrorCode::IndexOutOfRange, "feature " + std::to_string(feature));
  return feature_to_column(feature, task());
}

IndexSet Engine::density_indices(const IndexSet& features) const {
  IndexSet out;
  out.reserve(features.size());
  for (Index f : features) out.push_back(density_index(f));
  return out;
}

namespace {

MixtureModel fit_family(const Eigen::MatrixXd& rows, int components, std::uint64_t seed, EngineFitReport* report) {
  if (components == 1) return MixtureModel::single(fit_gaussian(rows));
  EmOptions opt;
  opt.components = components;
  opt.seed = seed;
  MixtureFit fit = fit_mixture_em(rows, opt);
  if (report) {
    report->converged = report->converged && fit.converged;
    report->component_resets += fit.component_resets;
    if (!fit.converged)
      report->warnings.push_back("EM did not converge in " + std::to_string(fit.iterations) +
                                 " iterations; using best-so-far parameters");
  }
  return std::move(fit.model);
}

}  // namespace

Engine fit_engine(const Dataset& train, EngineSpec spec, std::uint64_t seed, EngineFitReport* report) {
  train.validate();
  if (train.task.is_classification()) {
    const int k = train.task.num_classes;
    ClassConditionalModel ccm;
    std::vector<IndexSet> members(static_cast<std::size_t>(k));
    for (Index r = 0; r < train.num_rows(); ++r) members[static_cast<std::size_t>(train.labels[r])].push_back(r);
    for (int y = 0; y < k; ++y) {
      const auto& idx = members[static_cast<std::size_t>(y)];
      if (idx.empty()) throw Error(ErrorCode::TooFewRows, "class " + std::to_string(y) + " has no training rows");
      ccm.class_prior.push_back(static_cast<double>(idx.size()) / static_cast<double>(train.num_rows()));
      const Eigen::MatrixXd rows = train.rows(idx, Eigen::all);
      ccm.per_class.push_back(fit_family(rows, spec.components, derive_seed(seed, {static_cast<std::uint64_t>(y)}), report));
    }
    return Engine(std::move(ccm), spec);
  }
  if (spec.kind == EngineKind::ClassConditional)
    throw Error(ErrorCode::InvalidArgument, "class_conditional engine requires a classification task");
  JointModel joint;
  joint.target_slot = train.task.target_index;
  joint.density = fit_family(train.rows, spec.components, seed, report);
  return Engine(std::move(joint), spec);
}

}  // namespace dfa
