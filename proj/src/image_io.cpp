#include "tmapath/image_io.hpp"

#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <png.h>
#include <tiffio.h>

#include "tmapath/error.hpp"

namespace tmapath {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("unreadable file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RgbImage from_interleaved(const std::uint8_t* data, int width, int height, int channels) {
  RgbImage img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* px = data + (static_cast<std::size_t>(y) * width + x) * channels;
      img.set(x, y, px[0], px[1], px[2]);
    }
  return img;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw DataError("unreadable file: " + name + " (" + image.message + ")");
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw DataError("unreadable file: " + name + " (zero-sized image)");
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("unreadable file: " + name + " (" + msg + ")");
  }
  return from_interleaved(buffer.data(), static_cast<int>(image.width),
                          static_cast<int>(image.height), 3);
}

RgbImage decode_tiff(const std::filesystem::path& path) {
  TIFFSetWarningHandler(nullptr);
  TIFFSetErrorHandler(nullptr);
  std::unique_ptr<TIFF, decltype(&TIFFClose)> tif(TIFFOpen(path.c_str(), "r"), &TIFFClose);
  if (!tif) throw DataError("unreadable file: " + path.string());
  std::uint32_t width = 0, height = 0;
  std::uint16_t bits = 8;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
  if (width == 0 || height == 0) throw DataError("unreadable file: " + path.string() + " (zero-sized image)");
  if (bits != 8) throw DataError("unsupported format: only 8-bit TIFF is supported");
  std::vector<std::uint32_t> raster(static_cast<std::size_t>(width) * height);
  if (!TIFFReadRGBAImageOriented(tif.get(), width, height, raster.data(), ORIENTATION_TOPLEFT, 0))
    throw DataError("unreadable file: " + path.string());
  RgbImage img(static_cast<int>(width), static_cast<int>(height));
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x) {
      const std::uint32_t px = raster[static_cast<std::size_t>(y) * width + x];
      img.set(static_cast<int>(x), static_cast<int>(y), static_cast<std::uint8_t>(TIFFGetR(px)),
              static_cast<std::uint8_t>(TIFFGetG(px)), static_cast<std::uint8_t>(TIFFGetB(px)));
    }
  return img;
}

std::vector<std::uint8_t> interleave(const RgbImage& img) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(img.width()) * img.height() * 3);
  std::size_t k = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      out[k++] = img.r(y, x);
      out[k++] = img.g(y, x);
      out[k++] = img.b(y, x);
    }
  return out;
}

std::vector<std::uint8_t> write_simplified(const std::uint8_t* data, int width, int height,
                                           png_uint_32 format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  // Worst-case bound, so the image is encoded once.
  png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(image);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr))
    throw DataError(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

struct MemoryReader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset = 0;
};

void png_read_memory(png_structp png, png_bytep data, png_size_t length) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->offset + length > reader->bytes->size()) png_error(png, "truncated stream");
  std::copy_n(reader->bytes->data() + reader->offset, length, data);
  reader->offset += length;
}

}  // namespace

RgbImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  static constexpr std::array<std::uint8_t, 4> kPng{0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(kPng.begin(), kPng.end(), bytes.begin()))
    return decode_png(bytes, path.string());
  if (bytes.size() >= 4 && ((bytes[0] == 'I' && bytes[1] == 'I' && bytes[2] == 42 && bytes[3] == 0) ||
                            (bytes[0] == 'M' && bytes[1] == 'M' && bytes[2] == 0 && bytes[3] == 42)))
    return decode_tiff(path);
  if (bytes.empty()) throw DataError("unreadable file: " + path.string() + " (empty)");
  throw DataError("unsupported format: " + path.string());
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  const auto data = interleave(img);
  return write_simplified(data.data(), img.width(), img.height(), PNG_FORMAT_RGB);
}

void save_png(const std::filesystem::path& path, const RgbImage& img) {
  write_bytes(path, encode_png(img));
}

void save_png(const std::filesystem::path& path, const GrayImage& img) {
  write_bytes(path, write_simplified(img.pixels.data(), img.width(), img.height(), PNG_FORMAT_GRAY));
}

std::vector<std::uint8_t> encode_png16(const Raster<double>& unit_values) {
  const int width = static_cast<int>(unit_values.cols());
  const int height = static_cast<int>(unit_values.rows());
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png16 encode failed");
  }
  png_set_write_fn(png, &out, png_append, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = std::clamp(unit_values(y, x), 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      row[2 * x] = static_cast<std::uint8_t>(q >> 8);  // big-endian
      row[2 * x + 1] = static_cast<std::uint8_t>(q & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void save_png16(const std::filesystem::path& path, const Raster<double>& unit_values) {
  write_bytes(path, encode_png16(unit_values));
}

Raster<std::uint16_t> load_png16(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  MemoryReader reader{&bytes};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  Raster<std::uint16_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unreadable file: " + path.string());
  }
  png_set_read_fn(png, &reader, png_read_memory);
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY)
    png_error(png, "not a 16-bit gray png");
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  out.resize(height, width);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 2);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x)
      out(y, x) = static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

RgbImage downsample(const RgbImage& img, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return img;
  const int w = (img.width() + factor - 1) / factor;
  const int h = (img.height() + factor - 1) / factor;
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int x0 = x * factor, y0 = y * factor;
      const int bw = std::min(factor, img.width() - x0), bh = std::min(factor, img.height() - y0);
      const int n = bw * bh;
      auto avg = [&](const Raster<std::uint8_t>& c) {
        const int s = c.block(y0, x0, bh, bw).cast<int>().sum();
        return static_cast<std::uint8_t>((s + n / 2) / n);
      };
      out.set(x, y, avg(img.r), avg(img.g), avg(img.b));
    }
  return out;
}

}  // namespace tmapath
