#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tmapath/image.hpp"

namespace tmapath {

/// Decodes an 8-bit PNG or TIFF (gray, gray+alpha, RGB, RGBA or palette).
/// Alpha is dropped. Throws DataError("unreadable file: ...") on I/O or
/// decode failure and DataError("unsupported format: ...") otherwise.
RgbImage load_image(const std::filesystem::path& path);

void save_png(const std::filesystem::path& path, const RgbImage& img);
void save_png(const std::filesystem::path& path, const GrayImage& img);

/// In-memory PNG encoding (used by the HTTP tile endpoint).
std::vector<std::uint8_t> encode_png(const RgbImage& img);

/// 16-bit gray PNG from values in [0,1] mapped to round(v * 65535).
void save_png16(const std::filesystem::path& path, const Raster<double>& unit_values);
std::vector<std::uint8_t> encode_png16(const Raster<double>& unit_values);

/// Decodes a 16-bit gray PNG into raw sample values.
Raster<std::uint16_t> load_png16(const std::filesystem::path& path);

/// Box-filter downsampling by an integer factor (ceil-sized output).
RgbImage downsample(const RgbImage& img, int factor);

}  // namespace tmapath
