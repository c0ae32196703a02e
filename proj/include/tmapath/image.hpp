#pragma once

#include <cstdint>
#include <memory>

#include <Eigen/Dense>

namespace tmapath {

/// Row-major 2-D raster; rows index y, columns index x.
template <typename Scalar>
using Raster = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Point2d = Eigen::Vector2d;

/// 8-bit gray image. Origin top-left, x rightward, y downward.
struct GrayImage {
  Raster<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  explicit GrayImage(Raster<std::uint8_t> px);

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  std::uint8_t& operator()(int x, int y) { return pixels(y, x); }
  std::uint8_t operator()(int x, int y) const { return pixels(y, x); }
};

/// 8-bit RGB image stored as three planes of equal size.
struct RgbImage {
  Raster<std::uint8_t> r, g, b;

  RgbImage() = default;
  RgbImage(int width, int height, std::uint8_t red = 0, std::uint8_t green = 0,
           std::uint8_t blue = 0);

  int width() const { return static_cast<int>(r.cols()); }
  int height() const { return static_cast<int>(r.rows()); }
  void set(int x, int y, std::uint8_t red, std::uint8_t green, std::uint8_t blue) {
    r(y, x) = red;
    g(y, x) = green;
    b(y, x) = blue;
  }
};

/// Integer luminance weights (sum 256), applied as (wr*r + wg*g + wb*b + 128) >> 8.
inline constexpr int kLumaRed = 77;
inline constexpr int kLumaGreen = 150;
inline constexpr int kLumaBlue = 29;

GrayImage to_gray(const RgbImage& img);

/// Reflect-101 index mapping (edge pixel not repeated) for a border of
/// width < n.
int mirror_index(int i, int n);

/// Summed-area table with one leading zero row and column. Values are
/// stored as doubles; integer and dyadic-rational inputs sum exactly.
class IntegralImage {
 public:
  IntegralImage() = default;
  explicit IntegralImage(const Eigen::Ref<const Raster<double>>& values);

  int width() const { return static_cast<int>(table_.cols()) - 1; }
  int height() const { return static_cast<int>(table_.rows()) - 1; }

  /// Sum over the inclusive pixel rectangle [x1, x2] x [y1, y2].
  double sum(int x1, int y1, int x2, int y2) const {
    return table_(y2 + 1, x2 + 1) - table_(y1, x2 + 1) - table_(y2 + 1, x1) + table_(y1, x1);
  }

 private:
  Raster<double> table_;
};

/// Gray image mirror-padded by `pad` pixels on every side and wrapped in an
/// integral image, so that any window of side 2*pad+1 centered on an image
/// pixel is addressable without bounds checks.
struct PaddedSource {
  std::shared_ptr<const IntegralImage> integral;
  int pad = 0;
  int width = 0;   // unpadded
  int height = 0;  // unpadded
};

PaddedSource make_padded_source(const GrayImage& img, int window);

/// Square w x w window (w odd) of gray intensities centered on a pixel.
/// A patch is a view into a shared integral image; it never copies pixels.
class Patch {
 public:
  Patch() = default;
  Patch(std::shared_ptr<const IntegralImage> integral, int origin_x, int origin_y, int window,
        Eigen::Vector2i center);

  /// Patch owning its own intensities (any real values; used for
  /// synthetic patches and photometric transforms).
  static Patch from_values(const Eigen::Ref<const Raster<double>>& values);

  int window() const { return window_; }
  const Eigen::Vector2i& center() const { return center_; }

  /// Sum over the inclusive rectangle in window coordinates.
  double rect_sum(int x1, int y1, int x2, int y2) const {
    return integral_->sum(ox_ + x1, oy_ + y1, ox_ + x2, oy_ + y2);
  }

  /// Materialized w x w intensities.
  Raster<double> values() const;

 private:
  std::shared_ptr<const IntegralImage> integral_;
  int ox_ = 0;
  int oy_ = 0;
  int window_ = 0;
  Eigen::Vector2i center_{0, 0};
};

/// Patch of side `window` centered at `center` with mirror padding.
/// Throws std::invalid_argument for even windows or windows wider than twice
/// an image dimension, and when `center` lies outside the image.
Patch extract_patch(const GrayImage& img, Eigen::Vector2i center, int window);

/// Same, reusing an existing padded source (no per-call padding cost).
Patch extract_patch(const PaddedSource& src, Eigen::Vector2i center, int window);

}  // namespace tmapath
