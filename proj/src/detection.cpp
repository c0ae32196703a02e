#include "tmapath/detection.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace tmapath {

MeanShiftConfig MeanShiftConfig::for_radius(double r) {
  MeanShiftConfig cfg;
  cfg.radius = r;
  cfg.merge_dist = r / 2.0;
  cfg.min_mass = 0.3 * std::numbers::pi * r * r;
  return cfg;
}

void validate(const MeanShiftConfig& cfg) {
  if (!(cfg.radius > 0.0)) throw std::invalid_argument("mean-shift radius must be positive");
  if (cfg.merge_dist > cfg.radius) throw std::invalid_argument("merge_dist must not exceed radius");
  if (!(cfg.seed_threshold >= 0.0)) throw std::invalid_argument("seed_threshold must be >= 0");
  if (!(cfg.convergence_eps > 0.0) || cfg.max_iters < 1)
    throw std::invalid_argument("convergence settings must be positive");
}

// Probability map -------------------------------------------------------------

namespace {

double positive_probability(const DetectionForest& forest, const Patch& p, int positive_class) {
  double acc = 0.0, total = 0.0;
  const auto k = static_cast<double>(forest.n_classes);
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& counts = forest.trees[t]->leaf(p).counts;
    double n = 0.0;
    for (auto c : counts) n += c;
    acc += forest.weights[t] * (counts[static_cast<std::size_t>(positive_class)] + 1.0) / (n + k);
    total += forest.weights[t];
  }
  return acc / total;
}

int nearest_grid(int v, int stride, int limit) {
  const int g = ((v + stride / 2) / stride) * stride;
  const int last = ((limit - 1) / stride) * stride;
  return std::min(g, last);
}

}  // namespace

ProbabilityMap probability_map(const DetectionForest& forest, const GrayImage& img, int stride,
                               int positive_class) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (positive_class < 0 || positive_class >= forest.n_classes)
    throw std::invalid_argument("positive class out of range");
  const PaddedSource src = make_padded_source(img, forest.window);
  const int w = img.width(), h = img.height();
  const int gw = (w - 1) / stride + 1, gh = (h - 1) / stride + 1;
  Raster<double> grid(gh, gw);

  auto band = [&](int row_begin, int row_end) {
    for (int gy = row_begin; gy < row_end; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const Patch p = extract_patch(src, {gx * stride, gy * stride}, forest.window);
        grid(gy, gx) = positive_probability(forest, p, positive_class);
      }
  };
  const int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (workers == 1) {
    band(0, gh);
  } else {
    std::vector<std::future<void>> jobs;
    const int rows = (gh + workers - 1) / workers;
    for (int b = 0; b * rows < gh; ++b)
      jobs.push_back(std::async(std::launch::async, band, b * rows, std::min(gh, (b + 1) * rows)));
    for (auto& j : jobs) j.get();
  }

  ProbabilityMap map{Raster<double>(h, w)};
  for (int y = 0; y < h; ++y) {
    const int gy = nearest_grid(y, stride, h) / stride;
    for (int x = 0; x < w; ++x) map.values(y, x) = grid(gy, nearest_grid(x, stride, w) / stride);
  }
  return map;
}

// Mean shift ------------------------------------------------------------------
//
// Positions are tracked as an integer anchor plus a real offset so that the
// arithmetic is identical for translated maps.

namespace {

struct KernelSums {
  double mass = 0.0;
  Eigen::Vector2d moment{0.0, 0.0};  // relative to anchor
};

KernelSums kernel_sums(const ProbabilityMap& map, const Eigen::Vector2i& anchor,
                       const Eigen::Vector2d& offset, double r) {
  KernelSums s;
  const double r2 = r * r;
  const int x0 = std::max(0, anchor.x() + static_cast<int>(std::ceil(offset.x() - r)));
  const int x1 = std::min(map.width() - 1, anchor.x() + static_cast<int>(std::floor(offset.x() + r)));
  const int y0 = std::max(0, anchor.y() + static_cast<int>(std::ceil(offset.y() - r)));
  const int y1 = std::min(map.height() - 1, anchor.y() + static_cast<int>(std::floor(offset.y() + r)));
  for (int y = y0; y <= y1; ++y) {
    const double dy = (y - anchor.y()) - offset.y();
    const double half = std::sqrt(std::max(0.0, r2 - dy * dy));
    // Span padded by one pixel; the exact membership test below decides.
    const int xa = std::max(x0, anchor.x() + static_cast<int>(std::ceil(offset.x() - half)) - 1);
    const int xb = std::min(x1, anchor.x() + static_cast<int>(std::floor(offset.x() + half)) + 1);
    for (int x = xa; x <= xb; ++x) {
      const double dx = (x - anchor.x()) - offset.x();
      if (dx * dx + dy * dy > r2) continue;
      const double wgt = map.values(y, x);
      s.mass += wgt;
      s.moment.x() += wgt * (x - anchor.x());
      s.moment.y() += wgt * (y - anchor.y());
    }
  }
  return s;
}

struct Converged {
  Eigen::Vector2i anchor;
  Eigen::Vector2d offset;
  double mass;
  Point2d position() const { return anchor.cast<double>() + offset; }
};

Converged iterate(const ProbabilityMap& map, Eigen::Vector2i anchor, Eigen::Vector2d offset,
                  const MeanShiftConfig& cfg) {
  for (int it = 0; it < cfg.max_iters; ++it) {
    const KernelSums s = kernel_sums(map, anchor, offset, cfg.radius);
    if (!(s.mass > 0.0)) break;
    const Eigen::Vector2d next = s.moment / s.mass;
    const double step = (next - offset).norm();
    offset = next;
    if (step < cfg.convergence_eps) break;
  }
  return {anchor, offset, kernel_sums(map, anchor, offset, cfg.radius).mass};
}

}  // namespace

double kernel_mass(const ProbabilityMap& map, const Point2d& center, double radius) {
  const Eigen::Vector2i anchor(static_cast<int>(std::floor(center.x())),
                               static_cast<int>(std::floor(center.y())));
  return kernel_sums(map, anchor, center - anchor.cast<double>(), radius).mass;
}

Point2d mean_shift_from(const ProbabilityMap& map, const Point2d& start, const MeanShiftConfig& cfg) {
  validate(cfg);
  const Eigen::Vector2i anchor(static_cast<int>(std::floor(start.x())),
                               static_cast<int>(std::floor(start.y())));
  return iterate(map, anchor, start - anchor.cast<double>(), cfg).position();
}

std::vector<Detection> mean_shift_modes(const ProbabilityMap& map, const MeanShiftConfig& cfg) {
  validate(cfg);
  // Every pixel above the threshold seeds a trajectory. Row bands run concurrently and are
  // concatenated in raster order, so the result is schedule independent.
  const int h = map.height();
  auto band = [&](int row_begin, int row_end) {
    std::vector<Converged> out;
    for (int y = row_begin; y < row_end; ++y)
      for (int x = 0; x < map.width(); ++x)
        if (map.values(y, x) > cfg.seed_threshold) out.push_back(iterate(map, {x, y}, Eigen::Vector2d::Zero(), cfg));
    return out;
  };
  std::vector<Converged> points;
  const int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (workers == 1 || h < 2 * workers) {
    points = band(0, h);
  } else {
    std::vector<std::future<std::vector<Converged>>> jobs;
    const int rows = (h + workers - 1) / workers;
    for (int b = 0; b * rows < h; ++b)
      jobs.push_back(std::async(std::launch::async, band, b * rows, std::min(h, (b + 1) * rows)));
    for (auto& j : jobs) {
      auto part = j.get();
      points.insert(points.end(), part.begin(), part.end());
    }
  }

  // Decreasing mass; equal masses keep raster seed order.
  std::stable_sort(points.begin(), points.end(),
                   [](const Converged& a, const Converged& b) { return a.mass > b.mass; });
  std::vector<Detection> modes;
  const double md2 = cfg.merge_dist * cfg.merge_dist;
  for (const auto& c : points) {
    if (c.mass < cfg.min_mass) continue;
    const Point2d pos = c.position();
    const bool merged = std::any_of(modes.begin(), modes.end(), [&](const Detection& d) {
      return (d.center - pos).squaredNorm() <= md2;
    });
    if (!merged) modes.push_back({pos, c.mass});
  }
  return modes;
}

std::vector<Detection> detect_nuclei(const DetectionForest& forest, const GrayImage& img,
                                     const DetectConfig& cfg) {
  return mean_shift_modes(probability_map(forest, img, cfg.stride), cfg.mean_shift);
}

// Matching --------------------------------------------------------------------

MatchResult match_detections(const std::vector<Point2d>& predicted, const std::vector<Point2d>& truth,
                             double match_radius) {
  if (!(match_radius > 0.0)) throw std::invalid_argument("match_radius must be positive");
  struct Candidate {
    double dist;
    std::size_t p, t;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double d = (predicted[i] - truth[j]).norm();
      if (d <= match_radius) cands.push_back({d, i, j});
    }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.p, a.t) < std::tie(b.dist, b.p, b.t);
  });
  std::vector<char> used_p(predicted.size(), 0), used_t(truth.size(), 0);
  MatchResult r;
  for (const auto& c : cands) {
    if (used_p[c.p] || used_t[c.t]) continue;
    used_p[c.p] = used_t[c.t] = 1;
    r.pairs.emplace_back(c.p, c.t);
    r.distances.push_back(c.dist);
  }
  const auto tp = static_cast<double>(r.pairs.size());
  r.precision = predicted.empty() ? 1.0 : tp / predicted.size();
  r.recall = truth.empty() ? 1.0 : tp / truth.size();
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::vector<Point2d> centers(const std::vector<Detection>& detections) {
  std::vector<Point2d> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back(d.center);
  return out;
}

std::string detections_csv(const std::string& spot_id, const std::vector<Detection>& detections) {
  std::ostringstream out;
  out.precision(10);
  out << "spot_id,x,y,score\n";
  for (const auto& d : detections)
    out << spot_id << ',' << d.center.x() << ',' << d.center.y() << ',' << d.score << '\n';
  return out.str();
}

std::string detections_json(const std::string& spot_id, const std::vector<Detection>& detections) {
  nlohmann::json doc{{"spot_id", spot_id}, {"detections", nlohmann::json::array()}};
  for (const auto& d : detections)
    doc["detections"].push_back({{"x", d.center.x()}, {"y", d.center.y()}, {"score", d.score}});
  return doc.dump();
}

void append_training_samples(TrainingSet& out, const GrayImage& img,
                             const std::vector<Point2d>& nucleus_centers, int window, double r_min) {
  const PaddedSource src = make_padded_source(img, window);
  auto pixel = [&](const Point2d& p) {
    return Eigen::Vector2i(std::clamp(static_cast<int>(std::lround(p.x())), 0, img.width() - 1),
                           std::clamp(static_cast<int>(std::lround(p.y())), 0, img.height() - 1));
  };
  for (const auto& c : nucleus_centers) out.push_back({extract_patch(src, pixel(c), window), kNucleus});
  for (const auto& v : voronoi_negative_samples(nucleus_centers, img.width(), img.height(), r_min))
    out.push_back({extract_patch(src, pixel(v), window), kBackground});
}

}  // namespace tmapath
