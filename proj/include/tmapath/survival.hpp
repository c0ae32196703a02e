#pragma once

#include <string>
#include <vector>

#include "tmapath/survival_data.hpp"

namespace tmapath {

/// Product-limit estimate evaluated at the distinct event times.
struct KaplanMeierCurve {
  std::vector<double> times;     // strictly increasing event times
  std::vector<double> survival;  // S(t_j)
  std::vector<int> at_risk;      // r_j
  std::vector<int> deaths;       // d_j

  /// Right-continuous step function; 1 before the first event time.
  double operator()(double t) const;
};

/// Censorings tied with an event time are counted at risk for that event.
/// Throws DataError for an empty input or a non-positive time.
KaplanMeierCurve kaplan_meier(const std::vector<SurvivalRecord>& records);

std::string kaplan_meier_csv(const KaplanMeierCurve& curve);

struct LogRankTerm {
  double time;
  int deaths_group1;     // d_1i
  int deaths_total;      // d_i
  int at_risk_group1;    // r_1i
  int at_risk_total;     // r_i
  double expected;       // e_1i = r_1i d_i / r_i
  double variance;       // hypergeometric v_1i
};

struct LogRankResult {
  double chi_square = 0.0;
  double p_value = 1.0;
  std::vector<LogRankTerm> terms;
};

/// Two-group log-rank test with one degree of freedom. Throws DataError
/// "test undefined" when there are no events or the variance is zero while
/// observed and expected deaths differ.
LogRankResult log_rank(const std::vector<SurvivalRecord>& group1,
                       const std::vector<SurvivalRecord>& group2);

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)
/// (series for x < a + 1, Lentz continued fraction otherwise).
double regularized_gamma_q(double a, double x);

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
double chi_square_sf(double x, double df = 1.0);

enum class SplitRule { median, threshold };

struct SplitSpec {
  SplitRule rule = SplitRule::median;
  double threshold = 0.0;  // used by SplitRule::threshold; high group is value > threshold
};

struct SplitResult {
  std::vector<std::size_t> low;
  std::vector<std::size_t> high;
};

/// Median rule: order by value (stable), the first ceil(n/2) form the low
/// group. Throws DataError "degenerate split" for fewer than two values or,
/// under the median rule, when all values are identical.
SplitResult split_by_threshold(const std::vector<double>& values, const SplitSpec& spec);

}  // namespace tmapath
