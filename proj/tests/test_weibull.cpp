#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "json.hpp"
#include "tmapath/error.hpp"
#include "tmapath/weibull.hpp"

using namespace tmapath;

namespace {

WeibullRegressionModel model(double alpha, double lambda, Eigen::VectorXd beta = {}, double sigma = 0) {
  WeibullRegressionModel m;
  m.alpha = alpha;
  m.lambda = lambda;
  m.beta = std::move(beta);
  m.sigma = sigma;
  return m;
}

SurvivalRecord rec(double t, int e, Eigen::VectorXd x = {}) {
  SurvivalRecord r;
  r.time = t;
  r.event = e;
  r.covariates = std::move(x);
  return r;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const Eigen::VectorXd kNone = Eigen::VectorXd();

}  // namespace

TEST_CASE("survival function examples") {
  CHECK(survival_function(model(1.5, 2), 0.0, kNone) == 1.0);
  CHECK(survival_function(model(1, 2), 2.0, kNone) == doctest::Approx(std::exp(-1.0)));
  const auto m = model(1, 1, vec({std::log(2.0)}));
  CHECK(survival_function(m, 1.0, vec({1.0})) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("hazard examples and proportionality") {
  CHECK(hazard(model(1, 4), 0.3, kNone) == doctest::Approx(0.25));
  CHECK(hazard(model(1, 4), 30.0, kNone) == doctest::Approx(0.25));
  CHECK(hazard(model(2, 1), 3.0, kNone) == doctest::Approx(6.0));
  CHECK_THROWS_AS(hazard(model(2, 1), 0.0, kNone), std::invalid_argument);
  const auto m = model(1.7, 2.5, vec({1.0}));
  for (double t : {0.1, 1.0, 4.0})
    CHECK(hazard(m, t, vec({std::log(2.0)})) == doctest::Approx(2.0 * hazard(m, t, vec({0.0}))));
}

TEST_CASE("hazard is minus the log-survival derivative") {
  const auto m = model(1.3, 1.8, vec({0.4, -0.7}));
  const auto x = vec({0.3, 1.1});
  for (double t = 0.2; t < 6; t += 0.37) {
    const double h = 1e-5 * t;
    const double fd = -(std::log(survival_function(m, t + h, x)) - std::log(survival_function(m, t - h, x))) / (2 * h);
    const double an = hazard(m, t, x);
    CHECK(std::abs(fd - an) <= 1e-6 * an);
  }
}

TEST_CASE("log-likelihood examples") {
  CHECK(log_likelihood(model(1, 1), {rec(1, 1)}) == doctest::Approx(-1.0));
  // Censored records keep only the exponent term.
  const auto m = model(1.4, 2.2, vec({0.5}));
  const auto x = vec({0.8});
  CHECK(log_likelihood(m, {rec(3, 0, x)}) == doctest::Approx(-(std::pow(3.0, 1.4) / 2.2) * std::exp(0.4)));
  // An event far in the tail is less likely.
  double prev = log_likelihood(m, {rec(2, 1, x)});
  for (double t : {4.0, 8.0, 16.0}) {
    const double ll = log_likelihood(m, {rec(t, 1, x)});
    CHECK(ll < prev);
    prev = ll;
  }
}

TEST_CASE("random intercept reduces to the fixed model as sigma shrinks") {
  Rng rng(3);
  const auto data = fixtures::simulate_weibull(50, 1.5, 2, vec({0.5}), 0.2, rng);
  const double fixed = log_likelihood(model(1.5, 2, vec({0.5})), data);
  CHECK(log_likelihood(model(1.5, 2, vec({0.5}), 1e-6), data) == doctest::Approx(fixed).epsilon(1e-9));
}

TEST_CASE("gauss-hermite integrates polynomials") {
  const auto gh = gauss_hermite(20);
  REQUIRE(gh.nodes.size() == 20);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  CHECK(gh.weights.sum() == doctest::Approx(sqrt_pi).epsilon(1e-12));
  CHECK(gh.weights.dot(gh.nodes.array().square().matrix()) == doctest::Approx(sqrt_pi / 2).epsilon(1e-12));
  CHECK(gh.weights.dot(gh.nodes.array().pow(4).matrix()) == doctest::Approx(3 * sqrt_pi / 4).epsilon(1e-12));
  CHECK(std::abs(gh.weights.dot(gh.nodes)) < 1e-12);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(77);
  const auto data = fixtures::simulate_weibull(60, 1.5, 2, vec({0.5, -0.5}), 0.2, rng);
  for (int trial = 0; trial < 40; ++trial) {
    const double sigma = trial % 2 ? 0.2 + uniform_unit(rng) : 0.0;
    const auto m = model(0.6 + 2 * uniform_unit(rng), 0.5 + 3 * uniform_unit(rng),
                         vec({uniform_unit(rng) * 2 - 1, uniform_unit(rng) * 2 - 1}), sigma);
    const auto g = log_likelihood_gradient(m, data);
    REQUIRE(g.size() == (sigma > 0 ? 5 : 4));
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      auto shifted = [&](double h) {
        auto q = m;
        if (j == 0) q.alpha *= std::exp(h);
        if (j == 1) q.lambda *= std::exp(h);
        if (j == 2 || j == 3) q.beta(j - 2) += h;
        if (j == 4) q.sigma *= std::exp(h);
        return log_likelihood(q, data);
      };
      const double h = 1e-5;
      const double fd = (shifted(h) - shifted(-h)) / (2 * h);
      CAPTURE(trial);
      CAPTURE(j);
      CHECK(std::abs(fd - g(j)) <= 1e-5 * std::max(1.0, std::abs(g(j))));
    }
  }
}

TEST_CASE("interaction expansion") {
  Eigen::MatrixXd x(2, 3);
  x << 1, 2, 3, -1, 0.5, 4;
  const auto e3 = expand_interactions(x, {"x1", "x2", "x3"}, 3);
  CHECK(e3.names == std::vector<std::string>{"x1", "x2", "x3", "x1:x2", "x1:x3", "x2:x3", "x1:x2:x3"});
  CHECK(e3.matrix.cols() == 7);
  CHECK(e3.matrix(0, 6) == 6.0);
  CHECK(e3.matrix(1, 4) == -4.0);
  const auto e2 = expand_interactions(x, {"x1", "x2", "x3"}, 2);
  CHECK(e2.names.size() == 6);
  const auto e1 = expand_interactions(x, {"x1", "x2", "x3"}, 1);
  CHECK(e1.matrix == x);
  CHECK_THROWS_AS(expand_interactions(x, {"x1", "x2", "x3"}, 4), std::invalid_argument);
  CHECK_THROWS_AS(expand_interactions(x, {"x1", "x2", "x3"}, 0), std::invalid_argument);

  // Column count is sum_j C(p, j).
  Rng rng(1);
  for (int p = 1; p <= 6; ++p) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(4, p);
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) names.push_back("v" + std::to_string(j));
    for (int k = 1; k <= p; ++k) {
      long expected = 0, c = 1;
      for (int j = 1; j <= k; ++j) {
        c = c * (p - j + 1) / j;
        expected += c;
      }
      CHECK(expand_interactions(m, names, k).matrix.cols() == expected);
    }
  }
}

TEST_CASE("univariate fit recovers the generator") {
  Rng rng(11);
  const auto data = fixtures::simulate_weibull(1000, 1.5, 2.0, kNone, 0.2, rng);
  int censored = 0;
  for (const auto& r : data) censored += r.event == 0;
  CHECK(censored == doctest::Approx(200).epsilon(0.2));
  const auto fit = fit_weibull_ph(data, {});
  CHECK(fit.converged());
  CHECK(fit.model.beta.size() == 0);
  CHECK(std::abs(fit.model.alpha - 1.5) < 0.1);
  CHECK(std::abs(fit.model.lambda - 2.0) < 0.25);
  CHECK(fit.log_likelihood >= log_likelihood(model(1.5, 2.0), data) - 1e-6);
  CHECK(fit.standard_errors.size() == 2);
  CHECK(fit.standard_errors(0) > 0);
}

TEST_CASE("covariate fit recovers coefficients and is optimal") {
  Rng rng(12);
  const auto data = fixtures::simulate_weibull(1000, 1.5, 2.0, vec({0.5, -0.5}), 0.2, rng);
  const auto fit = fit_weibull_ph(data, {});
  REQUIRE(fit.converged());
  CHECK(std::abs(fit.model.alpha - 1.5) < 0.1);
  CHECK(std::abs(fit.model.lambda - 2.0) < 0.25);
  CHECK(std::abs(fit.model.beta(0) - 0.5) < 0.1);
  CHECK(std::abs(fit.model.beta(1) + 0.5) < 0.1);
  CHECK(fit.log_likelihood == doctest::Approx(log_likelihood(fit.model, data)).epsilon(1e-9));
  CHECK(fit.log_likelihood >= log_likelihood(model(1.5, 2.0, vec({0.5, -0.5})), data) - 1e-6);
  CHECK(log_likelihood_gradient(fit.model, data).norm() < 1e-3);

  const auto j = nlohmann::json::parse(weibull_fit_json(fit, {"a", "b"}));
  CHECK(j["diagnostics"]["status"] == "converged");
  CHECK(j["beta"]["a"] == fit.model.beta(0));
  CHECK(j["beta"].size() == 2);
}

TEST_CASE("duplicated data gives the same estimate") {
  Rng rng(13);
  const auto data = fixtures::simulate_weibull(200, 1.2, 3.0, vec({0.3}), 0.2, rng);
  auto twice = data;
  twice.insert(twice.end(), data.begin(), data.end());
  const auto a = fit_weibull_ph(data, {}), b = fit_weibull_ph(twice, {});
  CHECK(a.model.alpha == doctest::Approx(b.model.alpha).epsilon(1e-6));
  CHECK(a.model.lambda == doctest::Approx(b.model.lambda).epsilon(1e-6));
  CHECK(a.model.beta(0) == doctest::Approx(b.model.beta(0)).epsilon(1e-5));
  CHECK(b.log_likelihood == doctest::Approx(2 * a.log_likelihood).epsilon(1e-9));
}

TEST_CASE("explicit design replaces record covariates") {
  Rng rng(14);
  const auto data = fixtures::simulate_weibull(300, 1.5, 2.0, vec({0.5, -0.5}), 0.2, rng);
  const auto design = expand_interactions(covariate_matrix(data), {"x1", "x2"}, 2);
  const auto fit = fit_weibull_ph(data, design);
  CHECK(fit.model.beta.size() == 3);
  CHECK(std::abs(fit.model.beta(2)) < 0.3);

  ExpandedDesign none{{}, Eigen::MatrixXd(static_cast<Eigen::Index>(data.size()), 0)};
  CHECK(fit_weibull_ph(data, none).model.beta.size() == 0);
}

TEST_CASE("fit errors") {
  CHECK_THROWS_AS(fit_weibull_ph({rec(1, 1), rec(2, 0)}, {}), DataError);
  std::vector<SurvivalRecord> data;
  for (int i = 0; i < 10; ++i) data.push_back(rec(1 + i, 1, vec({1.0})));
  CHECK_THROWS_WITH_AS(fit_weibull_ph(data, {}), doctest::Contains("rank-deficient"), DataError);
  for (int i = 0; i < 10; ++i) data[static_cast<std::size_t>(i)].covariates = vec({double(i), 2.0 * i});
  CHECK_THROWS_WITH_AS(fit_weibull_ph(data, {}), doctest::Contains("rank-deficient"), DataError);
}

TEST_CASE("random intercept fit runs and never lowers the likelihood") {
  Rng rng(15);
  const auto data = fixtures::simulate_weibull(150, 1.5, 2.0, vec({0.5}), 0.2, rng);
  WeibullFitOptions opt;
  const auto plain = fit_weibull_ph(data, {}, opt);
  opt.random_intercept = true;
  const auto mixed = fit_weibull_ph(data, {}, opt);
  CHECK(mixed.model.sigma >= 0.0);
  CHECK(mixed.log_likelihood >= plain.log_likelihood - 1e-9);
}
