#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dfa/core.hpp"
#include "dfa/rng.hpp"

namespace dfa {

/// Diagonal loading added to every fitted covariance.
inline constexpr double kCovRegularization = 1e-6;

struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Index dim() const noexcept { return static_cast<Index>(mean.size()); }
  /// Throws NotPositiveDefinite / DimensionMismatch when the invariants fail.
  void validate() const;
};

struct MixtureModel {
  std::vector<double> weights;
  std::vector<GaussianParams> components;

  static MixtureModel single(GaussianParams g);

  Index dim() const noexcept { return components.empty() ? 0 : components.front().dim(); }
  std::size_t size() const noexcept { return components.size(); }
  void validate() const;
};

/// P(y) together with one mixture p(x | y) per class.
struct ClassConditionalModel {
  std::vector<double> class_prior;
  std::vector<MixtureModel> per_class;

  int num_classes() const noexcept { return static_cast<int>(class_prior.size()); }
  Index dim() const noexcept { return per_class.empty() ? 0 : per_class.front().dim(); }
  void validate() const;
};

/// p(x_u | x_o): a mixture of Gaussians over the coordinates `targets`
/// (global feature indices, in the order the caller requested them).
/// Single-Gaussian conditionals are one-component mixtures.
struct ConditionalDistribution {
  IndexSet targets;
  MixtureModel mixture;

  Index dim() const noexcept { return targets.size(); }
  bool is_gaussian() const noexcept { return mixture.size() == 1; }
  const GaussianParams& gaussian() const { return mixture.components.front(); }

  Eigen::VectorXd mean() const;
  /// Marginal over a subset of `targets`, given as global indices.
  ConditionalDistribution marginal(std::span<const Index> keep) const;
};

/// Gaussian with a cached Cholesky factor for repeated evaluation and
/// sampling in the estimator inner loops.
class PreparedGaussian {
 public:
  explicit PreparedGaussian(const GaussianParams& g);

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd draw(Rng& rng) const;
  Index dim() const noexcept { return static_cast<Index>(mean_.size()); }
  double log_det() const noexcept { return log_det_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd lower_;
  double log_det_ = 0.0;
};

class PreparedMixture {
 public:
  explicit PreparedMixture(const MixtureModel& m);

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Per-component log w_k + log N_k(x).
  void component_log_terms(const Eigen::Ref<const Eigen::VectorXd>& x, std::vector<double>& out) const;
  Eigen::VectorXd draw(Rng& rng) const;
  std::size_t draw_component(Rng& rng) const;
  const PreparedGaussian& component(std::size_t k) const { return components_[k]; }
  std::size_t size() const noexcept { return components_.size(); }

 private:
  std::vector<double> log_weights_;
  std::vector<PreparedGaussian> components_;
  std::vector<double> cumulative_;
};

// ---------------------------------------------------------------------------
// Numerics

double log_sum_exp(std::span<const double> v);
/// In-place softmax; returns the log normalizer.
double softmax_inplace(std::vector<double>& v);

/// Log N(x; mean, cov) evaluated with a Cholesky factorization.
double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

/// 1/2 ln((2 pi e)^k det cov), via the Cholesky log-determinant.
double gaussian_entropy(const Eigen::MatrixXd& cov);

// ---------------------------------------------------------------------------
// Fitting

GaussianParams fit_gaussian(const Eigen::MatrixXd& rows, double lambda = kCovRegularization);
/// Joint Gaussian over every column of the dataset (y included for regression).
GaussianParams fit_gaussian(const Dataset& train, double lambda = kCovRegularization);

struct EmOptions {
  int components = 1;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  int max_iter = 500;
  double lambda = kCovRegularization;
};

struct MixtureFit {
  MixtureModel model;
  bool converged = false;  // false: best-so-far parameters after max_iter
  int iterations = 0;
  int component_resets = 0;
  /// Mean per-row training log-likelihood, one entry per E-step.
  std::vector<double> log_likelihood_trace;
};

MixtureFit fit_mixture_em(const Eigen::MatrixXd& rows, const EmOptions& options);

/// Mean per-row log-likelihood of `rows` under the mixture.
double mean_log_likelihood(const MixtureModel& model, const Eigen::MatrixXd& rows);

// ---------------------------------------------------------------------------
// Conditioning

/// p(x_u | x_o) for a Gaussian. mean_{u|o} = mu_u + S_uo S_oo^-1 (x_o - mu_o),
/// cov_{u|o} = S_uu - S_uo S_oo^-1 S_ou.
ConditionalDistribution condition(const GaussianParams& g, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u);

/// Mixture case: each component is conditioned and the weights are
/// reweighted in proportion to w_k N(x_o; mu_k,o, S_k,oo).
ConditionalDistribution condition(const MixtureModel& m, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u);

/// Further conditions an existing conditional; `o` and `u` are global
/// indices drawn from cd.targets.
ConditionalDistribution condition(const ConditionalDistribution& cd, const Eigen::VectorXd& x_o, const IndexSet& o,
                                  const IndexSet& u);

/// log p(x_o) under the mixture marginal; 0 when o is empty.
double log_marginal(const MixtureModel& m, const Eigen::VectorXd& x_o, const IndexSet& o);

Eigen::MatrixXd sample(const ConditionalDistribution& cd, std::size_t n, std::uint64_t seed);

double log_density(const ConditionalDistribution& cd, const Eigen::VectorXd& x_u);

// ---------------------------------------------------------------------------
// Class-conditional queries

/// Every (class, component) pair conditioned on x_o, with
/// log_weight = log P(y) + log w_{y,k} + log N(x_o; mu_{y,k,o}, S_{y,k,oo}).
struct ClassMixtureConditional {
  IndexSet targets;
  std::vector<int> class_of;
  std::vector<double> log_weight;
  std::vector<GaussianParams> components;  // over targets

  int num_classes = 0;

  /// log P(y | x_o) for every class.
  std::vector<double> log_class_posterior() const;
  /// p(x_u | x_o) with y marginalized out.
  ConditionalDistribution marginal_over_classes() const;
  /// Same evidence weights, components marginalized onto `keep` (global indices).
  ClassMixtureConditional restrict(std::span<const Index> keep) const;
};

ClassMixtureConditional condition_classes(const ClassConditionalModel& ccm, const Eigen::VectorXd& x_o,
                                          const IndexSet& o, const IndexSet& u);

std::vector<double> log_class_posterior(const ClassConditionalModel& ccm, const Eigen::VectorXd& x_o,
                                        const IndexSet& o);
/// P(y | x_o) = softmax_y(log p(x_o | y) + log P(y)); o empty returns the prior.
std::vector<double> class_posterior(const ClassConditionalModel& ccm, const Eigen::VectorXd& x_o, const IndexSet& o);

/// p(x_i | x_o) = sum_y p(x_i, x_o | y) P(y) / sum_y p(x_o | y) P(y).
ConditionalDistribution feature_marginal_given_obs(const ClassConditionalModel& ccm, Index i,
                                                   const Eigen::VectorXd& x_o, const IndexSet& o);
/// Block version over several unobserved features.
ConditionalDistribution features_given_obs(const ClassConditionalModel& ccm, const IndexSet& block,
                                           const Eigen::VectorXd& x_o, const IndexSet& o);

// ---------------------------------------------------------------------------
// Engine: the fitted model an acquisition run talks to.

enum class EngineKind { Gaussian, ClassConditional, Mixture };

struct EngineSpec {
  EngineKind kind = EngineKind::Gaussian;
  int components = 1;

  /// "gaussian", "class_conditional(3)", "mixture(4)".
  static EngineSpec parse(const std::string& text);
  std::string to_string() const;
};

/// Regression engine: one joint density over [x; y] with y at target_slot.
struct JointModel {
  MixtureModel density;
  Index target_slot = 0;
};

class Engine {
 public:
  Engine() = default;
  Engine(ClassConditionalModel ccm, EngineSpec spec);
  Engine(JointModel joint, EngineSpec spec);

  bool is_classification() const noexcept { return std::holds_alternative<ClassConditionalModel>(model_); }
  const ClassConditionalModel& classes() const { return std::get<ClassConditionalModel>(model_); }
  const JointModel& joint() const { return std::get<JointModel>(model_); }
  const EngineSpec& spec() const noexcept { return spec_; }

  TaskKind task() const;
  /// Number of acquirable features.
  Index num_features() const;
  /// Feature index -> coordinate in the underlying density.
  Index density_index(Index feature) const;
  IndexSet density_indices(const IndexSet& features) const;

 private:
  std::variant<ClassConditionalModel, JointModel> model_;
  EngineSpec spec_;
};

struct EngineFitReport {
  bool converged = true;
  int component_resets = 0;
  std::vector<std::string> warnings;
};

/// Classification fits per-class mixtures plus the empirical prior;
/// regression fits one joint mixture over all columns.
Engine fit_engine(const Dataset& train, EngineSpec spec, std::uint64_t seed, EngineFitReport* report = nullptr);

}  // namespace dfa
