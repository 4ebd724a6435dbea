#include <cmath>
#include <random>

#include "doctest.h"
#include "dfa/condmodel.hpp"
#include "dfa/model_io.hpp"

using namespace dfa;

namespace {

constexpr double kPi = 3.14159265358979323846;

GaussianParams gauss2(double rho) {
  GaussianParams g;
  g.mean = Eigen::Vector2d(0, 0);
  g.cov.resize(2, 2);
  g.cov << 1, rho, rho, 1;
  return g;
}

GaussianParams random_gaussian(Index d, Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd a(d, d);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < d; ++c) a(r, c) = n(rng);
  GaussianParams g;
  g.mean = Eigen::VectorXd::NullaryExpr(d, [&] { return n(rng); });
  g.cov = a * a.transpose() + Eigen::MatrixXd::Identity(d, d);
  return g;
}

Eigen::MatrixXd normal_rows(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0, 1);
  return Eigen::MatrixXd::NullaryExpr(n, d, [&] { return z(rng); });
}

// trapezoid over [lo, hi]
double integrate(auto&& f, double lo, double hi, int steps = 20000) {
  const double h = (hi - lo) / steps;
  double s = 0.5 * (f(lo) + f(hi));
  for (int k = 1; k < steps; ++k) s += f(lo + k * h);
  return s * h;
}

}  // namespace

TEST_CASE("fit_gaussian on constant columns gives lambda I") {
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(20, 2, 0.3);
  const GaussianParams g = fit_gaussian(rows);
  CHECK(g.mean(0) == doctest::Approx(0.3));
  CHECK(g.mean(1) == doctest::Approx(0.3));
  CHECK((g.cov - kCovRegularization * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fit_gaussian on standard normal samples") {
  const GaussianParams g = fit_gaussian(normal_rows(10000, 3, 1));
  CHECK(g.mean.cwiseAbs().maxCoeff() < 0.05);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(g.cov(k, k) - 1.0) < 0.1);
}

TEST_CASE("fit_gaussian needs n > d") {
  CHECK_THROWS_AS(fit_gaussian(normal_rows(3, 5, 0)), Error);
}

TEST_CASE("one-component EM equals the Gaussian MLE") {
  const Eigen::MatrixXd rows = normal_rows(500, 3, 2);
  const GaussianParams g = fit_gaussian(rows);
  const MixtureFit fit = fit_mixture_em(rows, {1, 0});
  CHECK((fit.model.components[0].mean - g.mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((fit.model.components[0].cov - g.cov).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("EM recovers well separated means") {
  Rng rng(5);
  std::normal_distribution<double> z(0, 1);
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd rows(4000, 2);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double m = coin(rng) ? 3.0 : -3.0;
    rows(r, 0) = m + z(rng);
    rows(r, 1) = m + z(rng);
  }
  const MixtureFit fit = fit_mixture_em(rows, {2, 11});
  std::vector<double> means{fit.model.components[0].mean(0), fit.model.components[1].mean(0)};
  std::sort(means.begin(), means.end());
  CHECK(std::abs(means[0] + 3.0) < 0.1);
  CHECK(std::abs(means[1] - 3.0) < 0.1);
  CHECK(fit.converged);
}

TEST_CASE("EM log-likelihood is non-decreasing") {
  Rng rng(9);
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd rows(1500, 3);
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    for (int c = 0; c < 3; ++c) rows(r, c) = (r % 3) * 1.5 + z(rng) * (1 + c * 0.3);
  for (int m : {2, 3, 5}) {
    const MixtureFit fit = fit_mixture_em(rows, {m, static_cast<std::uint64_t>(m)});
    for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k)
      REQUIRE(fit.log_likelihood_trace[k] >= fit.log_likelihood_trace[k - 1] - 1e-8);
  }
}

TEST_CASE("EM is deterministic given the seed") {
  const Eigen::MatrixXd rows = normal_rows(600, 2, 4);
  const MixtureFit a = fit_mixture_em(rows, {3, 1});
  const MixtureFit b = fit_mixture_em(rows, {3, 1});
  CHECK(a.model.weights == b.model.weights);
  CHECK(a.model.components[2].cov == b.model.components[2].cov);
}

TEST_CASE("EM needs ten rows per component") { CHECK_THROWS_AS(fit_mixture_em(normal_rows(30, 2, 0), {4, 0}), Error); }

TEST_CASE("conditioning on nothing is the marginal") {
  Rng rng(1);
  const GaussianParams g = random_gaussian(4, rng);
  const auto cd = condition(g, Eigen::VectorXd(), {}, {1, 3});
  CHECK(cd.gaussian().mean(0) == g.mean(1));
  CHECK(cd.gaussian().cov(1, 0) == g.cov(3, 1));
}

TEST_CASE("Schur complement example") {
  const auto cd = condition(gauss2(0.5), Eigen::VectorXd::Constant(1, 1.0), {1}, {0});
  CHECK(cd.gaussian().mean(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cd.gaussian().cov(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("conditioning matches the explicit matrix-inverse formula") {
  Rng rng(3);
  const GaussianParams g = random_gaussian(5, rng);
  const IndexSet o{0, 3}, u{1, 2, 4};
  const Eigen::Vector2d xo(0.4, -1.2);
  const Eigen::MatrixXd soo_inv = g.cov(o, o).inverse();
  const Eigen::VectorXd mean = g.mean(u) + g.cov(u, o) * soo_inv * (xo - g.mean(o));
  const Eigen::MatrixXd cov = g.cov(u, u) - g.cov(u, o) * soo_inv * g.cov(o, u);
  const auto cd = condition(g, xo, o, u);
  CHECK((cd.gaussian().mean - mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((cd.gaussian().cov - cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("diagonal covariance: conditional equals marginal") {
  GaussianParams g;
  g.mean = Eigen::Vector3d(1, 2, 3);
  g.cov = Eigen::Vector3d(1, 2, 3).asDiagonal();
  const auto cd = condition(g, Eigen::VectorXd::Constant(1, 10.0), {2}, {0, 1});
  CHECK(cd.gaussian().mean(1) == 2.0);
  CHECK(cd.gaussian().cov(1, 1) == 2.0);
}

TEST_CASE("conditioning errors") {
  const GaussianParams g = gauss2(0.1);
  CHECK_THROWS_AS(condition(g, Eigen::VectorXd::Zero(1), {0}, {0}), Error);
  CHECK_THROWS_AS(condition(g, Eigen::VectorXd::Zero(1), {0}, {}), Error);
}

TEST_CASE("chain rule of Gaussian conditioning") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianParams g = random_gaussian(6, rng);
    const Eigen::Vector2d xa(0.3, -0.7);
    const Eigen::VectorXd xb = Eigen::VectorXd::Constant(1, 1.1);
    const auto step1 = condition(g, xa, {0, 2}, {1, 3, 4, 5});
    const auto step2 = condition(step1, xb, {4}, {1, 3, 5});
    const auto joint = condition(g, Eigen::Vector3d(0.3, -0.7, 1.1), {0, 2, 4}, {1, 3, 5});
    REQUIRE((step2.gaussian().mean - joint.gaussian().mean).cwiseAbs().maxCoeff() < 1e-8);
    REQUIRE((step2.gaussian().cov - joint.gaussian().cov).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("log p(x_u, x_o) = log p(x_u | x_o) + log p(x_o)") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianParams g = random_gaussian(4, rng);
    const MixtureModel m = MixtureModel::single(g);
    const Eigen::Vector4d x(0.1, -0.5, 0.9, 0.2);
    const IndexSet o{1, 3}, u{0, 2};
    const double joint = gaussian_log_pdf(x, g.mean, g.cov);
    const double cond = log_density(condition(g, x(o), o, u), x(u));
    REQUIRE(std::abs(joint - (cond + log_marginal(m, x(o), o))) < 1e-8);
  }
}

TEST_CASE("mixture conditioning reweights by evidence") {
  MixtureModel m;
  m.weights = {0.5, 0.5};
  GaussianParams a = gauss2(0.0), b = gauss2(0.0);
  b.mean = Eigen::Vector2d(2, 2);
  m.components = {a, b};
  const auto cd = condition(m, Eigen::VectorXd::Constant(1, 2.0), {1}, {0});
  // oracle: w_k proportional to N(2; mu_k, 1)
  const double la = -0.5 * 4.0, lb = 0.0;
  const double wa = std::exp(la) / (std::exp(la) + std::exp(lb));
  CHECK(cd.mixture.weights[0] == doctest::Approx(wa).epsilon(1e-12));
}

TEST_CASE("sampling: point mass, moments, determinism") {
  GaussianParams tiny;
  tiny.mean = Eigen::VectorXd::Constant(1, 0.7);
  tiny.cov = Eigen::MatrixXd::Constant(1, 1, kCovRegularization);
  ConditionalDistribution cd{{0}, MixtureModel::single(tiny)};
  const Eigen::MatrixXd s = sample(cd, 100, 1);
  CHECK((s.array() - 0.7).abs().maxCoeff() < 1e-2);

  const auto c2 = condition(gauss2(0.5), Eigen::VectorXd::Constant(1, 1.0), {1}, {0});
  const Eigen::MatrixXd draws = sample(c2, 50000, 3);
  const double mean = draws.mean();
  const double var = (draws.array() - mean).square().sum() / (draws.rows() - 1);
  CHECK(std::abs(mean - 0.5) < 0.02);
  CHECK(std::abs(var - 0.75) < 0.02);
  CHECK(sample(c2, 10, 9) == sample(c2, 10, 9));
}

TEST_CASE("log density closed forms") {
  GaussianParams std1;
  std1.mean = Eigen::VectorXd::Zero(1);
  std1.cov = Eigen::MatrixXd::Identity(1, 1);
  ConditionalDistribution cd{{0}, MixtureModel::single(std1)};
  CHECK(log_density(cd, Eigen::VectorXd::Zero(1)) == doctest::Approx(-0.5 * std::log(2 * kPi)).epsilon(1e-14));
  CHECK_THROWS_AS(log_density(cd, Eigen::VectorXd::Zero(2)), Error);

  MixtureModel m;
  m.weights = {1.0, 0.0};
  GaussianParams other = std1;
  other.mean(0) = 5;
  m.components = {std1, other};
  ConditionalDistribution mix{{0}, m};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.3);
  CHECK(log_density(mix, x) == log_density(cd, x));
}

TEST_CASE("conditional density integrates to one") {
  MixtureModel m;
  m.weights = {0.3, 0.7};
  m.components = {gauss2(0.6), gauss2(-0.4)};
  m.components[1].mean = Eigen::Vector2d(1.0, -1.0);
  const auto cd = condition(m, Eigen::VectorXd::Constant(1, 0.5), {1}, {0});
  const double total = integrate([&](double x) { return std::exp(log_density(cd, Eigen::VectorXd::Constant(1, x))); }, -12, 12);
  CHECK(std::abs(total - 1.0) < 1e-3);
}

TEST_CASE("gaussian entropy") {
  CHECK(gaussian_entropy(Eigen::MatrixXd::Identity(1, 1)) == doctest::Approx(0.5 * std::log(2 * kPi * std::exp(1.0))));
  CHECK(gaussian_entropy(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(4.2568).epsilon(1e-4));
  Rng rng(2);
  const GaussianParams g = random_gaussian(3, rng);
  CHECK(gaussian_entropy(2.5 * g.cov) - gaussian_entropy(g.cov) == doctest::Approx(1.5 * std::log(2.5)));
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(gaussian_entropy(bad), Error);
}

namespace {

ClassConditionalModel two_class(double m0, double m1, std::vector<double> prior) {
  ClassConditionalModel ccm;
  ccm.class_prior = std::move(prior);
  for (double m : {m0, m1}) {
    GaussianParams g;
    g.mean = Eigen::Vector2d(m, 0);
    g.cov = Eigen::Matrix2d::Identity();
    ccm.per_class.push_back(MixtureModel::single(g));
  }
  return ccm;
}

}  // namespace

TEST_CASE("class posterior basics") {
  const auto same = two_class(0, 0, {0.5, 0.5});
  auto p = class_posterior(same, Eigen::Vector2d(1, 2), {0, 1});
  CHECK(p[0] == doctest::Approx(0.5));
  const auto skew = two_class(0, 0, {0.9, 0.1});
  p = class_posterior(skew, Eigen::Vector2d(1, 2), {0, 1});
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(class_posterior(skew, Eigen::VectorXd(), {}) == skew.class_prior);
}

TEST_CASE("class posterior is a simplex and matches Bayes rule") {
  const auto ccm = two_class(0, 2, {0.3, 0.7});
  Rng rng(4);
  std::normal_distribution<double> z(0, 3);
  for (int t = 0; t < 100; ++t) {
    const double x = z(rng);
    const auto p = class_posterior(ccm, Eigen::VectorXd::Constant(1, x), {0});
    REQUIRE(std::abs(p[0] + p[1] - 1.0) < 1e-12);
    REQUIRE(p[0] >= 0.0);
    const double l0 = 0.3 * std::exp(-0.5 * x * x), l1 = 0.7 * std::exp(-0.5 * (x - 2) * (x - 2));
    REQUIRE(std::abs(p[1] - l1 / (l0 + l1)) < 1e-12);
  }
}

TEST_CASE("feature marginal given observations") {
  const auto ccm = two_class(0, 2, {0.5, 0.5});
  const auto cd = feature_marginal_given_obs(ccm, 0, Eigen::VectorXd(), {});
  CHECK(cd.mixture.size() == 2);
  CHECK(cd.mixture.weights[0] == doctest::Approx(0.5));
  const double dens = std::exp(log_density(cd, Eigen::VectorXd::Constant(1, 1.0)));
  CHECK(dens == doctest::Approx(std::exp(-0.5) / std::sqrt(2 * kPi)).epsilon(1e-10));
  CHECK(dens == doctest::Approx(0.2420).epsilon(1e-3));
  CHECK_THROWS_AS(feature_marginal_given_obs(ccm, 0, Eigen::VectorXd::Zero(1), {0}), Error);
}

TEST_CASE("feature marginal: identical classes ignore the prior; integrates to one") {
  auto a = two_class(1, 1, {0.9, 0.1});
  auto b = two_class(1, 1, {0.2, 0.8});
  a.per_class[0].components[0].cov(0, 1) = a.per_class[0].components[0].cov(1, 0) = 0.4;
  a.per_class[1] = a.per_class[0];
  b.per_class = a.per_class;
  const Eigen::VectorXd xo = Eigen::VectorXd::Constant(1, 0.3);
  const auto ca = feature_marginal_given_obs(a, 0, xo, {1});
  const auto cb = feature_marginal_given_obs(b, 0, xo, {1});
  for (double x : {-1.0, 0.0, 2.0})
    CHECK(log_density(ca, Eigen::VectorXd::Constant(1, x)) ==
          doctest::Approx(log_density(cb, Eigen::VectorXd::Constant(1, x))).epsilon(1e-12));
  const auto skew = two_class(-1, 3, {0.2, 0.8});
  const auto cs = feature_marginal_given_obs(skew, 0, xo, {1});
  const double total =
      integrate([&](double x) { return std::exp(log_density(cs, Eigen::VectorXd::Constant(1, x))); }, -15, 15);
  CHECK(std::abs(total - 1.0) < 1e-3);
}

TEST_CASE("feature marginal with one class equals plain conditioning") {
  ClassConditionalModel one;
  one.class_prior = {1.0};
  GaussianParams g = gauss2(0.5);
  one.per_class = {MixtureModel::single(g)};
  const Eigen::VectorXd xo = Eigen::VectorXd::Constant(1, 1.0);
  const auto a = feature_marginal_given_obs(one, 0, xo, {1});
  const auto b = condition(g, xo, {1}, {0});
  CHECK(a.gaussian().mean(0) == doctest::Approx(b.gaussian().mean(0)).epsilon(1e-12));
  CHECK(a.gaussian().cov(0, 0) == doctest::Approx(b.gaussian().cov(0, 0)).epsilon(1e-12));
}

TEST_CASE("engine specs parse") {
  CHECK(EngineSpec::parse("gaussian").kind == EngineKind::Gaussian);
  CHECK(EngineSpec::parse("class_conditional(3)").components == 3);
  CHECK(EngineSpec::parse("mixture(4)").to_string() == "mixture(4)");
  CHECK_THROWS_AS(EngineSpec::parse("flow"), Error);
  CHECK_THROWS_AS(EngineSpec::parse("mixture(0)"), Error);
}

TEST_CASE("model JSON round trip keeps densities") {
  Rng rng(21);
  Dataset ds;
  ds.task = TaskKind::classification(2);
  ds.rows = normal_rows(400, 3, 6);
  for (Index r = 0; r < 400; ++r) ds.labels.push_back(static_cast<int>(r % 2));
  for (Index r = 0; r < 400; ++r) ds.rows(r, 0) += static_cast<double>(r % 2);
  ModelDocument doc;
  doc.engine = fit_engine(ds, EngineSpec::parse("class_conditional(2)"), 3);
  doc.normalization = MinMaxStats::fit(ds);
  const ModelDocument back = model_from_json(nlohmann::json::parse(to_json(doc).dump()));
  std::normal_distribution<double> z(0, 1);
  for (int probe = 0; probe < 100; ++probe) {
    const Eigen::Vector3d x(z(rng), z(rng), z(rng));
    for (int y = 0; y < 2; ++y) {
      const double a = PreparedMixture(doc.engine.classes().per_class[y]).log_pdf(x);
      const double b = PreparedMixture(back.engine.classes().per_class[y]).log_pdf(x);
      REQUIRE(std::abs(a - b) < 1e-12);
    }
  }
  CHECK(back.normalization->max == doc.normalization->max);
}

TEST_CASE("regression engines fit the joint and reject class-conditional specs") {
  Dataset ds;
  ds.task = TaskKind::regression(1);
  ds.rows = normal_rows(200, 3, 2);
  const Engine e = fit_engine(ds, EngineSpec::parse("gaussian"), 0);
  CHECK_FALSE(e.is_classification());
  CHECK(e.num_features() == 2);
  CHECK(e.density_index(1) == 2);
  CHECK_THROWS_AS(fit_engine(ds, EngineSpec::parse("class_conditional(2)"), 0), Error);
}
