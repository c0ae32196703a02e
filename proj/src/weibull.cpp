#include "tmapath/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include "tmapath/error.hpp"

namespace tmapath {

namespace {

constexpr int kQuadraturePoints = 20;

struct Problem {
  Eigen::VectorXd time;
  Eigen::VectorXd log_time;
  Eigen::VectorXd event;
  Eigen::MatrixXd x;  // n x p
};

Problem make_problem(const std::vector<SurvivalRecord>& records, const Eigen::MatrixXd& x) {
  Problem pr;
  const auto n = static_cast<Eigen::Index>(records.size());
  pr.time.resize(n);
  pr.event.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    validate(r);
    pr.time(i) = r.time;
    pr.event(i) = r.event;
  }
  pr.log_time = pr.time.array().log();
  pr.x = x;
  return pr;
}

const GaussHermite& quadrature() {
  static const GaussHermite gh = gauss_hermite(kQuadraturePoints);
  return gh;
}

/// Log-likelihood and gradient over theta = (log alpha, log lambda, beta) at a
/// fixed sigma; when want_log_sigma, the gradient gains a trailing d/d log sigma.
double evaluate(const Problem& pr, const Eigen::VectorXd& theta, double sigma, Eigen::VectorXd* grad,
                bool want_log_sigma = false) {
  const Eigen::Index p = pr.x.cols();
  const double log_alpha = theta(0), log_lambda = theta(1);
  const double alpha = std::exp(log_alpha);
  const Eigen::VectorXd eta = p > 0 ? Eigen::VectorXd(pr.x * theta.tail(p)) : Eigen::VectorXd::Zero(pr.time.size());
  if (grad) grad->setZero(theta.size() + (want_log_sigma ? 1 : 0));

  double total = 0.0;
  for (Eigen::Index i = 0; i < pr.time.size(); ++i) {
    const double delta = pr.event(i), lt = pr.log_time(i);
    auto term = [&](double eta_i, double& d_la, double& d_ll, double& d_eta) {
      const double h = std::exp(alpha * lt - log_lambda + eta_i);  // cumulative hazard
      d_la = delta * (1.0 + alpha * lt) - alpha * lt * h;
      d_ll = -delta + h;
      d_eta = delta - h;
      return delta * (log_alpha - log_lambda + (alpha - 1.0) * lt + eta_i) - h;
    };
    if (sigma <= 0.0) {
      double d_la, d_ll, d_eta;
      total += term(eta(i), d_la, d_ll, d_eta);
      if (grad) {
        (*grad)(0) += d_la;
        (*grad)(1) += d_ll;
        if (p > 0) grad->segment(2, p) += d_eta * pr.x.row(i).transpose();
      }
      continue;
    }
    const auto& gh = quadrature();
    std::array<double, kQuadraturePoints> logs{}, la{}, ll{}, le{}, eps{};
    double top = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kQuadraturePoints; ++k) {
      eps[k] = std::numbers::sqrt2 * sigma * gh.nodes(k);
      logs[k] = std::log(gh.weights(k) / std::sqrt(std::numbers::pi)) + term(eta(i) + eps[k], la[k], ll[k], le[k]);
      top = std::max(top, logs[k]);
    }
    double z = 0.0;
    for (int k = 0; k < kQuadraturePoints; ++k) z += std::exp(logs[k] - top);
    total += top + std::log(z);
    if (grad) {
      for (int k = 0; k < kQuadraturePoints; ++k) {
        const double w = std::exp(logs[k] - top) / z;
        (*grad)(0) += w * la[k];
        (*grad)(1) += w * ll[k];
        if (p > 0) grad->segment(2, p) += w * le[k] * pr.x.row(i).transpose();
        if (want_log_sigma) (*grad)(theta.size()) += w * le[k] * eps[k];
      }
    }
  }
  return total;
}

Eigen::VectorXd theta_of(const WeibullRegressionModel& m) {
  Eigen::VectorXd theta(2 + m.beta.size());
  theta << std::log(m.alpha), std::log(m.lambda), m.beta;
  return theta;
}

Eigen::MatrixXd records_design(const std::vector<SurvivalRecord>& records, Eigen::Index p) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), p);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].covariates.size() != p) throw DataError("covariate dimension differs from beta");
    if (p > 0) x.row(static_cast<Eigen::Index>(i)) = records[i].covariates.transpose();
  }
  return x;
}

struct InnerFit {
  Eigen::VectorXd theta;
  double loglik;
  double grad_norm;
  int iterations;
  FitStatus status;
};

/// BFGS minimization of -loglik / n at fixed sigma.
InnerFit bfgs(const Problem& pr, Eigen::VectorXd theta, double sigma, const WeibullFitOptions& opt) {
  const double n = static_cast<double>(pr.time.size());
  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
    const double v = -evaluate(pr, th, sigma, g) / n;
    if (g) *g = -*g / n;
    return v;
  };
  const Eigen::Index dim = theta.size();
  Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd g(dim);
  double f = objective(theta, &g);
  InnerFit out{theta, -f * n, g.norm(), 0, FitStatus::max_iterations};
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it;
    if (g.norm() < opt.gradient_tolerance) {
      out.status = FitStatus::converged;
      break;
    }
    Eigen::VectorXd dir = -inv_h * g;
    if (g.dot(dir) >= 0.0) {
      inv_h.setIdentity();
      dir = -g;
    }
    double step = 1.0;
    Eigen::VectorXd next, g_next(dim);
    double f_next = 0.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      next = theta + step * dir;
      f_next = objective(next, &g_next);
      if (std::isfinite(f_next) && f_next <= f + 1e-4 * step * g.dot(dir)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.status = FitStatus::line_search_failed;
      break;
    }
    const Eigen::VectorXd s = next - theta, y = g_next - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(dim, dim);
      inv_h = (ident - rho * s * y.transpose()) * inv_h * (ident - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    theta = next;
    g = g_next;
    f = f_next;
    out.iterations = it + 1;
  }
  if (out.status != FitStatus::converged && g.norm() < opt.gradient_tolerance)
    out.status = FitStatus::converged;
  out.theta = theta;
  out.loglik = -f * n;
  out.grad_norm = g.norm();
  return out;
}

}  // namespace

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
  return gh;
}

double log_likelihood(const WeibullRegressionModel& m, const std::vector<SurvivalRecord>& records) {
  const Problem pr = make_problem(records, records_design(records, m.beta.size()));
  return evaluate(pr, theta_of(m), m.sigma, nullptr);
}

Eigen::VectorXd log_likelihood_gradient(const WeibullRegressionModel& m,
                                        const std::vector<SurvivalRecord>& records) {
  const Problem pr = make_problem(records, records_design(records, m.beta.size()));
  Eigen::VectorXd g;
  evaluate(pr, theta_of(m), m.sigma, &g, m.sigma > 0.0);
  return g;
}

ExpandedDesign expand_interactions(const Eigen::MatrixXd& covariates,
                                   const std::vector<std::string>& names, int order) {
  const auto p = static_cast<int>(covariates.cols());
  if (static_cast<int>(names.size()) != p) throw std::invalid_argument("one name per covariate");
  if (order < 1 || order > p) throw std::invalid_argument("interaction order must be in [1, p]");
  ExpandedDesign out;
  std::vector<Eigen::VectorXd> columns;
  for (int k = 1; k <= order; ++k) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
    for (;;) {
      std::string name = names[static_cast<std::size_t>(idx[0])];
      Eigen::VectorXd col = covariates.col(idx[0]);
      for (int j = 1; j < k; ++j) {
        name += ":" + names[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        col = col.cwiseProduct(covariates.col(idx[static_cast<std::size_t>(j)]));
      }
      out.names.push_back(std::move(name));
      columns.push_back(std::move(col));
      int j = k - 1;  // advance to the next k-combination
      while (j >= 0 && idx[static_cast<std::size_t>(j)] == p - k + j) --j;
      if (j < 0) break;
      ++idx[static_cast<std::size_t>(j)];
      for (int m = j + 1; m < k; ++m) idx[static_cast<std::size_t>(m)] = idx[static_cast<std::size_t>(m - 1)] + 1;
    }
  }
  out.matrix.resize(covariates.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) out.matrix.col(static_cast<Eigen::Index>(c)) = columns[c];
  return out;
}

WeibullFit fit_weibull_ph(const std::vector<SurvivalRecord>& records, const ExpandedDesign& design,
                          const WeibullFitOptions& options) {
  if (records.empty()) throw DataError("no survival records");
  const Eigen::MatrixXd x_raw = design.matrix.rows() > 0
                                    ? design.matrix
                                    : records_design(records, records.front().covariates.size());
  if (x_raw.rows() != static_cast<Eigen::Index>(records.size()))
    throw DataError("design rows differ from record count");
  Problem pr = make_problem(records, x_raw);
  if (pr.event.sum() < 2.0) throw DataError("Weibull fit needs at least two events");

  const Eigen::Index p = x_raw.cols();
  const Eigen::VectorXd mean = p > 0 ? Eigen::VectorXd(x_raw.colwise().mean().transpose()) : Eigen::VectorXd();
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var = (x_raw.col(j).array() - mean(j)).square().sum() /
                       std::max<double>(1.0, static_cast<double>(x_raw.rows() - 1));
    scale(j) = std::sqrt(var);
    if (!(scale(j) > 0.0)) throw DataError("rank-deficient design: constant column");
  }
  if (p > 0) {
    pr.x = (x_raw.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pr.x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw DataError("rank-deficient design");
  }

  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(2 + p);
  theta0(1) = std::log(pr.time.sum() / pr.event.sum());

  InnerFit best = bfgs(pr, theta0, 0.0, options);
  double sigma = 0.0;
  if (options.random_intercept) {
    auto profile = [&](double s) { return bfgs(pr, best.theta, s, options); };
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = options.sigma_max;
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    InnerFit fc = profile(c), fd = profile(d);
    for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
      if (fc.loglik > fd.loglik) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - phi * (hi - lo);
        fc = profile(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + phi * (hi - lo);
        fd = profile(d);
      }
    }
    const InnerFit& inner = fc.loglik > fd.loglik ? fc : fd;
    if (inner.loglik > best.loglik) {
      best = inner;
      sigma = fc.loglik > fd.loglik ? c : d;
    }
  }

  WeibullFit fit;
  fit.status = best.status;
  fit.iterations = best.iterations;
  fit.gradient_norm = best.grad_norm;
  fit.log_likelihood = best.loglik;

  // Back to original covariate units: eta_std = x' (beta / scale) - sum(beta * mean / scale).
  Eigen::VectorXd beta = p > 0 ? Eigen::VectorXd(best.theta.tail(p).cwiseQuotient(scale)) : Eigen::VectorXd();
  const double shift = p > 0 ? -beta.dot(mean) : 0.0;
  fit.model.alpha = std::exp(best.theta(0));
  fit.model.lambda = std::exp(best.theta(1) - shift);
  fit.model.beta = beta;
  fit.model.sigma = sigma;

  // Observed information by central differences of the analytic gradient.
  const Problem raw = make_problem(records, x_raw);
  const Eigen::VectorXd theta_hat = theta_of(fit.model);
  const Eigen::Index dim = theta_hat.size();
  Eigen::MatrixXd info(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta_hat(j)));
    Eigen::VectorXd up = theta_hat, dn = theta_hat, gu, gd;
    up(j) += h;
    dn(j) -= h;
    evaluate(raw, up, sigma, &gu);
    evaluate(raw, dn, sigma, &gd);
    info.col(j) = -(gu - gd) / (2.0 * h);
  }
  info = 0.5 * (info + info.transpose()).eval();
  const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
  fit.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.standard_errors(0) *= fit.model.alpha;
  fit.standard_errors(1) *= fit.model.lambda;
  return fit;
}

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

std::string weibull_fit_json(const WeibullFit& fit, const std::vector<std::string>& covariate_names) {
  nlohmann::json doc;
  doc["alpha"] = fit.model.alpha;
  doc["lambda"] = fit.model.lambda;
  doc["sigma"] = fit.model.sigma;
  doc["beta"] = nlohmann::json::object();
  for (Eigen::Index j = 0; j < fit.model.beta.size(); ++j) {
    const std::string name = static_cast<std::size_t>(j) < covariate_names.size()
                                 ? covariate_names[static_cast<std::size_t>(j)]
                                 : "x" + std::to_string(j + 1);
    doc["beta"][name] = fit.model.beta(j);
  }
  doc["standard_errors"] = std::vector<double>(fit.standard_errors.data(),
                                               fit.standard_errors.data() + fit.standard_errors.size());
  doc["diagnostics"] = {{"status", to_string(fit.status)},
                        {"iterations", fit.iterations},
                        {"gradient_norm", fit.gradient_norm},
                        {"log_likelihood", fit.log_likelihood}};
  return doc.dump(2);
}

}  // namespace tmapath
