#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmapath/annotation.hpp"
#include "tmapath/detection.hpp"
#include "tmapath/image.hpp"

namespace tmapath {

/// Normalized 3-D RGB histogram with `bins` bins per channel, flattened as
/// index = (r_bin * bins + g_bin) * bins + b_bin.
struct ColorHistogram {
  int bins = 8;
  Eigen::VectorXd mass;

  double l1_distance(const ColorHistogram& other) const { return (mass - other.mass).cwiseAbs().sum(); }
};

/// Histogram over pixels within Euclidean distance <= radius of `center`,
/// clipped to the image. A radius below one pixel yields the nearest pixel.
/// Throws std::invalid_argument if no pixel of the disc is inside the image.
ColorHistogram histogram_at(const RgbImage& img, const Point2d& center, double radius, int bins = 8);

struct StainingModel {
  ColorHistogram centroid_stained;
  ColorHistogram centroid_unstained;
  double radius = 10.0;
  int bins = 8;
};

struct StainingSample {
  const RgbImage* image;
  Point2d center;
  StainState state;
};

/// Per-class centroid = arithmetic mean of member histograms, renormalized.
/// Throws DataError when a class has no member.
StainingModel fit_staining_model(const std::vector<StainingSample>& samples, double radius, int bins = 8);

/// Nearest centroid under L1; ties resolve to unstained.
StainState classify_staining(const StainingModel& model, const ColorHistogram& h);
StainState classify_staining(const StainingModel& model, const RgbImage& img, const Detection& d);

struct PatientStaining {
  std::string patient_id;
  int n_detected = 0;
  int n_stained = 0;
  double percentage = 0.0;
  std::vector<std::string> flags;
};

PatientStaining patient_staining(const SpotRecord& spot, const std::vector<Detection>& detections,
                                 const StainingModel& model, const RgbImage& img);

std::string staining_csv(const std::vector<PatientStaining>& rows);

}  // namespace tmapath
