#include "tmapath/staining.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tmapath/error.hpp"

namespace tmapath {

ColorHistogram histogram_at(const RgbImage& img, const Point2d& center, double radius, int bins) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  if (bins < 2 || bins > 256) throw std::invalid_argument("bins must be in [2, 256]");
  ColorHistogram h{bins, Eigen::VectorXd::Zero(bins * bins * bins)};
  auto add = [&](int x, int y) {
    const int rb = img.r(y, x) * bins / 256, gb = img.g(y, x) * bins / 256, bb = img.b(y, x) * bins / 256;
    h.mass((rb * bins + gb) * bins + bb) += 1.0;
  };
  const double r2 = radius * radius;
  const int x0 = std::max(0, static_cast<int>(std::ceil(center.x() - radius)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::floor(center.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(center.y() - radius)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::floor(center.y() + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x(), dy = y - center.y();
      if (dx * dx + dy * dy <= r2) add(x, y);
    }
  if (h.mass.sum() == 0.0) {
    const long nx = std::lround(center.x()), ny = std::lround(center.y());
    if (nx < 0 || ny < 0 || nx >= img.width() || ny >= img.height())
      throw std::invalid_argument("histogram disc lies outside the image");
    add(static_cast<int>(nx), static_cast<int>(ny));
  }
  h.mass /= h.mass.sum();
  return h;
}

StainingModel fit_staining_model(const std::vector<StainingSample>& samples, double radius, int bins) {
  StainingModel model;
  model.radius = radius;
  model.bins = bins;
  const Eigen::Index n_bins = static_cast<Eigen::Index>(bins) * bins * bins;
  Eigen::VectorXd sum_stained = Eigen::VectorXd::Zero(n_bins), sum_unstained = sum_stained;
  int n_stained = 0, n_unstained = 0;
  for (const auto& s : samples) {
    const auto h = histogram_at(*s.image, s.center, radius, bins);
    if (s.state == StainState::stained) {
      sum_stained += h.mass;
      ++n_stained;
    } else {
      sum_unstained += h.mass;
      ++n_unstained;
    }
  }
  if (n_stained == 0 || n_unstained == 0)
    throw DataError("staining model needs at least one stained and one unstained nucleus");
  model.centroid_stained = {bins, sum_stained / sum_stained.sum()};
  model.centroid_unstained = {bins, sum_unstained / sum_unstained.sum()};
  return model;
}

StainState classify_staining(const StainingModel& model, const ColorHistogram& h) {
  const double ds = h.l1_distance(model.centroid_stained);
  const double du = h.l1_distance(model.centroid_unstained);
  return ds < du ? StainState::stained : StainState::unstained;
}

StainState classify_staining(const StainingModel& model, const RgbImage& img, const Detection& d) {
  return classify_staining(model, histogram_at(img, d.center, model.radius, model.bins));
}

PatientStaining patient_staining(const SpotRecord& spot, const std::vector<Detection>& detections,
                                 const StainingModel& model, const RgbImage& img) {
  PatientStaining out;
  out.patient_id = spot.patient_id;
  out.n_detected = static_cast<int>(detections.size());
  for (const auto& d : detections)
    if (classify_staining(model, img, d) == StainState::stained) ++out.n_stained;
  if (out.n_detected == 0) {
    out.flags.emplace_back("no nuclei detected");
  } else {
    out.percentage = 100.0 * out.n_stained / out.n_detected;
  }
  return out;
}

std::string staining_csv(const std::vector<PatientStaining>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "patient_id,n_detected,n_stained,percentage,flags\n";
  for (const auto& r : rows) {
    out << r.patient_id << ',' << r.n_detected << ',' << r.n_stained << ',' << r.percentage << ',';
    for (std::size_t k = 0; k < r.flags.size(); ++k) out << (k ? ";" : "") << r.flags[k];
    out << '\n';
  }
  return out.str();
}

}  // namespace tmapath
