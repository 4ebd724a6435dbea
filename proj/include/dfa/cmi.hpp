#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dfa/condmodel.hpp"
#include "dfa/core.hpp"

namespace dfa {

enum class CmiEstimator { ClassificationMc, RegressionMc, GaussianExact, DiscreteBruteforce };

std::string_view to_string(CmiEstimator e);

/// An estimate of I(x_i ; y | x_o) in nats. Monte Carlo estimates may dip
/// slightly below zero; exact oracles never do.
struct CmiEstimate {
  double value = 0.0;
  std::size_t n_samples = 1;
  CmiEstimator estimator = CmiEstimator::GaussianExact;
  double std_error = 0.0;
};

inline constexpr std::size_t kDefaultCmiSamples = 10;

/// sum_k p_k ln(p_k / q_k), with 0 ln(0/q) = 0.
double kl_discrete(std::span<const double> p, std::span<const double> q);

/// Classification reward: E_{x_i ~ p(x_i|x_o)} KL[P(y | x_i, x_o) || P(y | x_o)].
/// x_i is sampled; the expectation over y is analytic.
CmiEstimate cmi_classification(const ClassConditionalModel& ccm, Index i, const ObservedState& state,
                               std::size_t n_samples = kDefaultCmiSamples, std::uint64_t seed = 0);

/// Same estimator with x_i replaced by a block of features scored jointly.
CmiEstimate cmi_classification_block(const ClassConditionalModel& ccm, const IndexSet& block,
                                     const ObservedState& state, std::size_t n_samples = kDefaultCmiSamples,
                                     std::uint64_t seed = 0);

/// Estimator core on a precomputed conditional over the block.
CmiEstimate cmi_classification(const ClassMixtureConditional& over_block, std::size_t n_samples, std::uint64_t seed);

/// Regression reward: E_{p(x_i, y | x_o)}[log p(y | x_i, x_o) - log p(y | x_o)],
/// using one joint sample set for both terms. `state` indexes the joint
/// density; y_slot is the coordinate holding y.
CmiEstimate cmi_regression(const MixtureModel& joint, Index i, const ObservedState& state, Index y_slot,
                           std::size_t n_samples = kDefaultCmiSamples, std::uint64_t seed = 0);

/// Estimator core on a precomputed conditional p(x_i, y | x_o) whose
/// targets contain both i and y_slot.
CmiEstimate cmi_regression(const ConditionalDistribution& over_pair, Index i, Index y_slot, std::size_t n_samples,
                           std::uint64_t seed);

/// -1/2 ln(1 - rho^2), rho the partial correlation of i and j given `cond`.
CmiEstimate cmi_gaussian_exact(const GaussianParams& g, Index i, Index j, const IndexSet& cond);

/// Full joint probability table over small discrete variables; entries are
/// row-major with variable 0 varying slowest.
struct DiscreteJoint {
  std::vector<int> cardinalities;
  std::vector<double> p;

  std::size_t num_variables() const noexcept { return cardinalities.size(); }
};

CmiEstimate cmi_discrete_bruteforce(const DiscreteJoint& joint, Index i, Index j, const IndexSet& cond);

}  // namespace dfa
