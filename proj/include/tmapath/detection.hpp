#pragma once

#include <string>
#include <vector>

#include "tmapath/forest.hpp"
#include "tmapath/image.hpp"

namespace tmapath {

/// Per-pixel positive-class probability, same size as the source image.
struct ProbabilityMap {
  Raster<double> values;

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
};

struct Detection {
  Point2d center{0.0, 0.0};
  double score = 0.0;  // kernel-weighted probability mass at the mode

  bool operator==(const Detection& o) const { return center == o.center && score == o.score; }
};

struct MeanShiftConfig {
  double radius = 10.0;
  double convergence_eps = 0.5;
  int max_iters = 100;
  double merge_dist = 5.0;
  double min_mass = 0.0;
  /// Pixels with value above this seed a trajectory.
  double seed_threshold = 0.5;

  /// Defaults derived from the kernel radius: merge_dist = r/2,
  /// min_mass = 0.3 * pi * r^2.
  static MeanShiftConfig for_radius(double r);
};

void validate(const MeanShiftConfig& cfg);

/// Voronoi vertices of `positives` inside [0, width-1] x [0, height-1],
/// deduplicated and at distance > r_min from every positive. Coordinates are
/// quantized to 1/256 px for the exact integer sweep. Throws DataError
/// "degenerate tessellation" for fewer than 3 distinct or all-collinear sites.
std::vector<Point2d> voronoi_negative_samples(const std::vector<Point2d>& positives, int width,
                                              int height, double r_min = 0.0);

/// Forest positive-class probability at every stride-th pixel (x, y multiples
/// of stride); other pixels take the nearest evaluated value. Image bands are
/// evaluated concurrently; the result does not depend on scheduling.
ProbabilityMap probability_map(const DetectionForest& forest, const GrayImage& img, int stride = 2,
                               int positive_class = kNucleus);

/// Probability mass inside the circular box kernel of `radius` at `center`.
double kernel_mass(const ProbabilityMap& map, const Point2d& center, double radius);

/// Weighted mean shift with a circular box kernel. Every pixel with value above
/// seed_threshold seeds a trajectory; converged points
/// are merged greedily by decreasing mass within merge_dist; modes with mass
/// below min_mass are dropped. Output sorted by decreasing score.
std::vector<Detection> mean_shift_modes(const ProbabilityMap& map, const MeanShiftConfig& cfg);

/// Fixed point reached by mean shift from `start`.
Point2d mean_shift_from(const ProbabilityMap& map, const Point2d& start, const MeanShiftConfig& cfg);

struct DetectConfig {
  int stride = 2;
  MeanShiftConfig mean_shift;
};

std::vector<Detection> detect_nuclei(const DetectionForest& forest, const GrayImage& img,
                                     const DetectConfig& cfg);

struct MatchResult {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (predicted, truth)
  std::vector<double> distances;
};

/// Greedy one-to-one matching by ascending pair distance; pairs within
/// match_radius are true positives. Empty denominators give 1.
MatchResult match_detections(const std::vector<Point2d>& predicted, const std::vector<Point2d>& truth,
                             double match_radius);

std::vector<Point2d> centers(const std::vector<Detection>& detections);

std::string detections_csv(const std::string& spot_id, const std::vector<Detection>& detections);
std::string detections_json(const std::string& spot_id, const std::vector<Detection>& detections);

/// Training set: positives at the given centers, background at the filtered
/// Voronoi vertices of those centers.
void append_training_samples(TrainingSet& out, const GrayImage& img,
                             const std::vector<Point2d>& nucleus_centers, int window, double r_min);

}  // namespace tmapath
