#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "tmapath/image.hpp"
#include "tmapath/random.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("tmapath_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline tmapath::GrayImage random_gray(int w, int h, tmapath::Rng& rng) {
  tmapath::GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = static_cast<std::uint8_t>(tmapath::uniform_index(rng, 256));
  return img;
}

}  // namespace testing
