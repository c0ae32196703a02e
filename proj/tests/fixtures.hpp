#pragma once

#include <cmath>
#include <vector>

#include <algorithm>

#include "tmapath/detection.hpp"
#include "tmapath/expert_panel.hpp"
#include "tmapath/survival_data.hpp"
#include "tmapath/synthetic.hpp"

namespace fixtures {

/// Sum of a few Gaussian bumps, zeroed below a cutoff so that the support is
/// sparse. Values lie in [0, 1].
inline tmapath::ProbabilityMap bump_map(int w, int h, tmapath::Rng& rng, int n_bumps) {
  tmapath::ProbabilityMap m{tmapath::Raster<double>::Zero(h, w)};
  for (int b = 0; b < n_bumps; ++b) {
    const double cx = tmapath::uniform_unit(rng) * (w - 1), cy = tmapath::uniform_unit(rng) * (h - 1);
    const double sigma = 1.5 + 3.0 * tmapath::uniform_unit(rng);
    const double amp = 0.4 + 0.6 * tmapath::uniform_unit(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        m.values(y, x) += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
  }
  m.values = m.values.cwiseMin(1.0);
  m.values = (m.values.array() < 0.05).select(0.0, m.values);
  return m;
}

inline std::vector<tmapath::Point2d> disc_centers(const tmapath::SyntheticSpot& s) {
  std::vector<tmapath::Point2d> out;
  for (const auto& d : s.discs) out.push_back(d.center);
  return out;
}

/// Forest trained on `n_spots` generated spots with Voronoi negatives.
inline tmapath::DetectionForest train_disc_detector(const tmapath::SyntheticSpotParams& sp,
                                                    const tmapath::ForestConfig& fc, int n_spots,
                                                    std::uint64_t seed) {
  tmapath::Rng rng(seed);
  tmapath::TrainingSet data;
  for (int i = 0; i < n_spots; ++i) {
    const auto spot = tmapath::generate_synthetic_spot(sp, rng);
    tmapath::append_training_samples(data, tmapath::to_gray(spot.image), disc_centers(spot), fc.window,
                                     sp.radius_min);
  }
  return tmapath::train_forest(data, fc);
}

/// Weibull PH sample with standard normal covariates and independent
/// exponential censoring. The censoring rate is found by bisection on a pilot
/// sample so that about `censor_fraction` of the records are censored.
inline std::vector<tmapath::SurvivalRecord> simulate_weibull(int n, double alpha, double lambda,
                                                             const Eigen::VectorXd& beta, double censor_fraction,
                                                             tmapath::Rng& rng) {
  auto event_time = [&](const Eigen::VectorXd& x, tmapath::Rng& g) {
    double u = tmapath::uniform_unit(g);
    while (u <= 0.0) u = tmapath::uniform_unit(g);
    const double eta = beta.size() ? x.dot(beta) : 0.0;
    return std::pow(-lambda * std::log(u) * std::exp(-eta), 1.0 / alpha);
  };
  auto draw_x = [&](tmapath::Rng& g) {
    Eigen::VectorXd x(beta.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = tmapath::standard_normal(g);
    return x;
  };
  auto exp_draw = [](double rate, tmapath::Rng& g) {
    double u = tmapath::uniform_unit(g);
    while (u <= 0.0) u = tmapath::uniform_unit(g);
    return -std::log(u) / rate;
  };

  double rate = 0.0;
  if (censor_fraction > 0.0) {
    tmapath::Rng pilot(12345);
    std::vector<double> times;
    for (int i = 0; i < 20000; ++i) times.push_back(event_time(draw_x(pilot), pilot));
    // P(C < T) = E[1 - exp(-rate T)], increasing in rate.
    double lo = 0.0, hi = 100.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      double frac = 0.0;
      for (double t : times) frac += 1.0 - std::exp(-mid * t);
      (frac / times.size() < censor_fraction ? lo : hi) = mid;
    }
    rate = 0.5 * (lo + hi);
  }

  std::vector<tmapath::SurvivalRecord> out;
  for (int i = 0; i < n; ++i) {
    tmapath::SurvivalRecord r;
    r.patient_id = "S" + std::to_string(i);
    r.covariates = draw_x(rng);
    const double t = event_time(r.covariates, rng);
    const double c = rate > 0.0 ? exp_draw(rate, rng) : INFINITY;
    r.time = std::min(t, c);
    r.event = t <= c ? 1 : 0;
    out.push_back(std::move(r));
  }
  return out;
}

/// 180 nuclei x 5 experts: 24 unanimous benign, 81 unanimous cancerous and 75
/// mixed rows, shuffled. Confidences are random.
inline tmapath::LabelMatrix five_expert_panel(tmapath::Rng& rng) {
  std::vector<std::string> objects, experts;
  for (int i = 0; i < 180; ++i) objects.push_back("N" + std::to_string(i));
  for (int e = 0; e < 5; ++e) experts.push_back("E" + std::to_string(e));
  std::vector<int> kind(180, 2);
  std::fill(kind.begin(), kind.begin() + 24, 0);
  std::fill(kind.begin() + 24, kind.begin() + 105, 1);
  std::shuffle(kind.begin(), kind.end(), rng);
  tmapath::LabelMatrix m(objects, experts);
  for (Eigen::Index i = 0; i < 180; ++i) {
    std::array<int, 5> row{};
    const int k = kind[static_cast<std::size_t>(i)];
    if (k < 2) {
      row.fill(k);
    } else {
      // At least one vote for each class.
      const int n_cancerous = 1 + static_cast<int>(tmapath::uniform_index(rng, 4));
      for (int e = 0; e < 5; ++e) row[static_cast<std::size_t>(e)] = e < n_cancerous ? 1 : 0;
      std::shuffle(row.begin(), row.end(), rng);
    }
    for (Eigen::Index e = 0; e < 5; ++e)
      m.set(i, e, row[static_cast<std::size_t>(e)] ? tmapath::NucleusClass::cancerous : tmapath::NucleusClass::benign,
            static_cast<tmapath::Confidence>(tmapath::uniform_index(rng, 3)));
  }
  return m;
}

/// Random expert marks: true nuclei seen by a random subset of experts with
/// positional jitter, plus occasional spurious marks.
inline std::vector<std::vector<tmapath::Point2d>> random_mark_panel(tmapath::Rng& rng, int n_experts, int n_nuclei) {
  std::vector<std::vector<tmapath::Point2d>> out(static_cast<std::size_t>(n_experts));
  for (int k = 0; k < n_nuclei; ++k) {
    const tmapath::Point2d c(tmapath::uniform_unit(rng) * 200, tmapath::uniform_unit(rng) * 200);
    for (auto& marks : out)
      if (tmapath::uniform_unit(rng) < 0.7)
        marks.push_back(c + tmapath::Point2d(tmapath::standard_normal(rng), tmapath::standard_normal(rng)));
  }
  for (auto& marks : out)
    if (tmapath::uniform_unit(rng) < 0.5)
      marks.emplace_back(tmapath::uniform_unit(rng) * 200, tmapath::uniform_unit(rng) * 200);
  return out;
}

}  // namespace fixtures
