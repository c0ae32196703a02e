#include "tmapath/image.hpp"

#include <stdexcept>
#include <string>

namespace tmapath {

GrayImage::GrayImage(int width, int height, std::uint8_t fill) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  pixels = Raster<std::uint8_t>::Constant(height, width, fill);
}

GrayImage::GrayImage(Raster<std::uint8_t> px) : pixels(std::move(px)) {
  if (pixels.rows() == 0 || pixels.cols() == 0)
    throw std::invalid_argument("image dimensions must be positive");
}

RgbImage::RgbImage(int width, int height, std::uint8_t red, std::uint8_t green,
                   std::uint8_t blue) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  r = Raster<std::uint8_t>::Constant(height, width, red);
  g = Raster<std::uint8_t>::Constant(height, width, green);
  b = Raster<std::uint8_t>::Constant(height, width, blue);
}

GrayImage to_gray(const RgbImage& img) {
  const Raster<int> luma = kLumaRed * img.r.cast<int>() + kLumaGreen * img.g.cast<int>() +
                           kLumaBlue * img.b.cast<int>() + 128;
  return GrayImage(luma.unaryExpr([](int v) { return static_cast<std::uint8_t>(v >> 8); }));
}

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

IntegralImage::IntegralImage(const Eigen::Ref<const Raster<double>>& values)
    : table_(Raster<double>::Zero(values.rows() + 1, values.cols() + 1)) {
  for (Eigen::Index y = 0; y < values.rows(); ++y) {
    double row = 0.0;
    for (Eigen::Index x = 0; x < values.cols(); ++x) {
      row += values(y, x);
      table_(y + 1, x + 1) = table_(y, x + 1) + row;
    }
  }
}

namespace {

void check_window(int window, int width, int height) {
  if (window <= 0 || window % 2 == 0) throw std::invalid_argument("window must be odd");
  if (window > 2 * width || window > 2 * height)
    throw std::invalid_argument("window larger than twice the image dimension");
}

}  // namespace

PaddedSource make_padded_source(const GrayImage& img, int window) {
  check_window(window, img.width(), img.height());
  const int pad = window / 2;
  const int w = img.width();
  const int h = img.height();
  Raster<double> padded(h + 2 * pad, w + 2 * pad);
  for (int y = 0; y < padded.rows(); ++y) {
    const int sy = mirror_index(y - pad, h);
    for (int x = 0; x < padded.cols(); ++x) padded(y, x) = img(mirror_index(x - pad, w), sy);
  }
  return {std::make_shared<const IntegralImage>(padded), pad, w, h};
}

Patch::Patch(std::shared_ptr<const IntegralImage> integral, int origin_x, int origin_y, int window,
             Eigen::Vector2i center)
    : integral_(std::move(integral)), ox_(origin_x), oy_(origin_y), window_(window), center_(center) {}

Patch Patch::from_values(const Eigen::Ref<const Raster<double>>& values) {
  if (values.rows() != values.cols() || values.rows() % 2 == 0)
    throw std::invalid_argument("patch must be square with odd side");
  const int w = static_cast<int>(values.rows());
  return Patch(std::make_shared<const IntegralImage>(values), 0, 0, w, {w / 2, w / 2});
}

Raster<double> Patch::values() const {
  Raster<double> out(window_, window_);
  for (int y = 0; y < window_; ++y)
    for (int x = 0; x < window_; ++x) out(y, x) = rect_sum(x, y, x, y);
  return out;
}

Patch extract_patch(const GrayImage& img, Eigen::Vector2i center, int window) {
  return extract_patch(make_padded_source(img, window), center, window);
}

Patch extract_patch(const PaddedSource& src, Eigen::Vector2i center, int window) {
  if (window <= 0 || window % 2 == 0) throw std::invalid_argument("window must be odd");
  if (window > 2 * src.pad + 1)
    throw std::invalid_argument("window exceeds the padding of the source");
  if (center.x() < 0 || center.y() < 0 || center.x() >= src.width || center.y() >= src.height)
    throw std::invalid_argument("patch center outside image");
  const int half = window / 2;
  return Patch(src.integral, center.x() + src.pad - half, center.y() + src.pad - half, window,
               center);
}

}  // namespace tmapath
