#include "tmapath/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tmapath/error.hpp"

namespace tmapath {

double KaplanMeierCurve::operator()(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin() - 1)];
}

KaplanMeierCurve kaplan_meier(const std::vector<SurvivalRecord>& records) {
  if (records.empty()) throw DataError("Kaplan-Meier needs at least one record");
  for (const auto& r : records) validate(r);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

  KaplanMeierCurve curve;
  int at_risk = static_cast<int>(records.size());
  double s = 1.0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = records[order[k]].time;
    int deaths = 0, leaving = 0;
    for (; k < order.size() && records[order[k]].time == t; ++k, ++leaving)
      deaths += records[order[k]].event;
    if (deaths > 0) {
      s *= 1.0 - static_cast<double>(deaths) / at_risk;
      curve.times.push_back(t);
      curve.survival.push_back(s);
      curve.at_risk.push_back(at_risk);
      curve.deaths.push_back(deaths);
    }
    at_risk -= leaving;
  }
  return curve;
}

std::string kaplan_meier_csv(const KaplanMeierCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "time,survival,at_risk,deaths\n";
  for (std::size_t j = 0; j < curve.times.size(); ++j)
    out << curve.times[j] << ',' << curve.survival[j] << ',' << curve.at_risk[j] << ','
        << curve.deaths[j] << '\n';
  return out.str();
}

LogRankResult log_rank(const std::vector<SurvivalRecord>& group1,
                       const std::vector<SurvivalRecord>& group2) {
  if (group1.empty() || group2.empty()) throw DataError("log-rank test needs two nonempty groups");
  struct Obs {
    double time;
    int event;
    bool first;
  };
  std::vector<Obs> all;
  for (const auto& r : group1) {
    validate(r);
    all.push_back({r.time, r.event, true});
  }
  for (const auto& r : group2) {
    validate(r);
    all.push_back({r.time, r.event, false});
  }
  std::stable_sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });

  LogRankResult result;
  int r1 = static_cast<int>(group1.size()), r = static_cast<int>(all.size());
  double observed_minus_expected = 0.0, variance = 0.0;
  for (std::size_t k = 0; k < all.size();) {
    const double t = all[k].time;
    int d = 0, d1 = 0, leave = 0, leave1 = 0;
    for (; k < all.size() && all[k].time == t; ++k) {
      d += all[k].event;
      if (all[k].first) {
        d1 += all[k].event;
        ++leave1;
      }
      ++leave;
    }
    if (d > 0) {
      LogRankTerm term{t, d1, d, r1, r, 0.0, 0.0};
      term.expected = static_cast<double>(r1) * d / r;
      if (r > 1)
        term.variance = static_cast<double>(r1) * (r - r1) * d * (r - d) /
                        (static_cast<double>(r) * r * (r - 1));
      observed_minus_expected += d1 - term.expected;
      variance += term.variance;
      result.terms.push_back(term);
    }
    r -= leave;
    r1 -= leave1;
  }
  if (result.terms.empty()) throw DataError("test undefined: no events");
  if (variance > 0.0) {
    result.chi_square = observed_minus_expected * observed_minus_expected / variance;
  } else if (std::abs(observed_minus_expected) < 1e-12) {
    result.chi_square = 0.0;
  } else {
    throw DataError("test undefined: zero variance");
  }
  result.p_value = chi_square_sf(result.chi_square, 1.0);
  return result;
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("incomplete gamma needs a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    double ap = a, term = 1.0 / a, sum = term;
    for (int n = 0; n < 10000; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::max(0.0, 1.0 - sum * std::exp(log_prefix));
  }
  constexpr double tiny = std::numeric_limits<double>::min() / eps;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_prefix) * h;
}

double chi_square_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(df / 2.0, x / 2.0);
}

SplitResult split_by_threshold(const std::vector<double>& values, const SplitSpec& spec) {
  if (values.size() < 2) throw DataError("degenerate split: need at least two patients");
  SplitResult out;
  if (spec.rule == SplitRule::threshold) {
    for (std::size_t i = 0; i < values.size(); ++i)
      (values[i] > spec.threshold ? out.high : out.low).push_back(i);
    return out;
  }
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
    throw DataError("degenerate split: all values identical");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const std::size_t n_low = (values.size() + 1) / 2;
  out.low.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_low));
  out.high.assign(order.begin() + static_cast<std::ptrdiff_t>(n_low), order.end());
  std::sort(out.low.begin(), out.low.end());
  std::sort(out.high.begin(), out.high.end());
  return out;
}

}  // namespace tmapath
