#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmapath/survival_data.hpp"

namespace tmapath {

/// Weibull proportional-hazards model
///   S(t | x) = exp(-(t^alpha / lambda) * exp(x' beta + eps)),  eps ~ N(0, sigma^2).
/// sigma = 0 disables the random intercept.
template <typename Scalar>
struct WeibullModel {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar alpha = Scalar(1);
  Scalar lambda = Scalar(1);
  Vector beta;
  Scalar sigma = Scalar(0);

  template <typename Other>
  WeibullModel<Other> cast() const {
    return {Other(alpha), Other(lambda), beta.template cast<Other>(), Other(sigma)};
  }
};

using WeibullRegressionModel = WeibullModel<double>;

template <typename Scalar, typename Derived>
Scalar linear_predictor(const WeibullModel<Scalar>& m, const Eigen::MatrixBase<Derived>& x) {
  if (m.beta.size() == 0) return Scalar(0);
  return x.template cast<Scalar>().dot(m.beta);
}

/// Conditional survival S(t | x) at eps = 0.
template <typename Scalar, typename Derived>
Scalar survival_function(const WeibullModel<Scalar>& m, Scalar t, const Eigen::MatrixBase<Derived>& x) {
  using std::exp;
  using std::pow;
  if (t <= Scalar(0)) return Scalar(1);
  return exp(-(pow(t, m.alpha) / m.lambda) * exp(linear_predictor(m, x)));
}

/// h(t | x) = (alpha / lambda) t^(alpha - 1) exp(x' beta). Throws for t <= 0.
template <typename Scalar, typename Derived>
Scalar hazard(const WeibullModel<Scalar>& m, Scalar t, const Eigen::MatrixBase<Derived>& x) {
  using std::exp;
  using std::pow;
  if (!(t > Scalar(0))) throw std::invalid_argument("hazard needs t > 0");
  return (m.alpha / m.lambda) * pow(t, m.alpha - Scalar(1)) * exp(linear_predictor(m, x));
}

/// Right-censored log-likelihood. For sigma > 0 the random intercept is
/// integrated out with 20-point Gauss-Hermite quadrature.
double log_likelihood(const WeibullRegressionModel& m, const std::vector<SurvivalRecord>& records);

/// Gradient of log_likelihood with respect to
/// (log alpha, log lambda, beta_1..beta_p, [log sigma if sigma > 0]).
Eigen::VectorXd log_likelihood_gradient(const WeibullRegressionModel& m,
                                        const std::vector<SurvivalRecord>& records);

/// Gauss-Hermite nodes and weights for integral exp(-z^2) f(z) dz
/// (Golub-Welsch on the Jacobi matrix).
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussHermite gauss_hermite(int n);

struct ExpandedDesign {
  std::vector<std::string> names;
  Eigen::MatrixXd matrix;
};

/// All products of 1..order distinct covariates, grouped by order and in
/// lexicographic index order within a group; names joined with ":".
/// Throws std::invalid_argument for order < 1 or order > number of covariates.
ExpandedDesign expand_interactions(const Eigen::MatrixXd& covariates,
                                   const std::vector<std::string>& names, int order);

struct WeibullFitOptions {
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
  /// Estimate the random-intercept sigma by maximizing the profile likelihood.
  bool random_intercept = false;
  double sigma_max = 3.0;
};

enum class FitStatus { converged, max_iterations, line_search_failed };

struct WeibullFit {
  WeibullRegressionModel model;
  FitStatus status = FitStatus::converged;
  int iterations = 0;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  /// Standard errors of (alpha, lambda, beta...) from the observed information.
  Eigen::VectorXd standard_errors;

  bool converged() const { return status == FitStatus::converged; }
};

/// Maximum-likelihood fit by BFGS ascent on (log alpha, log lambda, beta) with
/// backtracking line search. Covariates are standardized for the fit and
/// coefficients reported in original units. Throws DataError for fewer than
/// two events or a rank-deficient design. The design matrix replaces the
/// record covariates when it has rows (an n x 0 design fits no covariates).
WeibullFit fit_weibull_ph(const std::vector<SurvivalRecord>& records, const ExpandedDesign& design,
                          const WeibullFitOptions& options = {});

std::string to_string(FitStatus s);
std::string weibull_fit_json(const WeibullFit& fit, const std::vector<std::string>& covariate_names);

}  // namespace tmapath
