#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "support.hpp"
#include "tmapath/error.hpp"
#include "tmapath/image.hpp"
#include "tmapath/image_io.hpp"

using namespace tmapath;

TEST_CASE("mirror_index reflects without repeating the edge") {
  CHECK(mirror_index(-1, 5) == 1);
  CHECK(mirror_index(-2, 5) == 2);
  CHECK(mirror_index(5, 5) == 3);
  CHECK(mirror_index(6, 5) == 2);
  CHECK(mirror_index(0, 1) == 0);
  CHECK(mirror_index(-7, 1) == 0);
  for (int i = -40; i < 40; ++i) {
    const int m = mirror_index(i, 7);
    CHECK(m >= 0);
    CHECK(m < 7);
  }
}

TEST_CASE("to_gray uses integer luma weights") {
  RgbImage img(3, 1);
  img.set(0, 0, 255, 255, 255);
  img.set(1, 0, 0, 0, 0);
  img.set(2, 0, 100, 50, 200);
  const auto g = to_gray(img);
  CHECK(g(0, 0) == 255);
  CHECK(g(1, 0) == 0);
  CHECK(g(2, 0) == (77 * 100 + 150 * 50 + 29 * 200 + 128) / 256);
}

TEST_CASE("integral image sums match brute force") {
  Rng rng(7);
  Raster<double> v(13, 17);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<double>(uniform_index(rng, 256));
  const IntegralImage ii(v);
  CHECK(ii.width() == 17);
  CHECK(ii.height() == 13);
  for (int trial = 0; trial < 500; ++trial) {
    int x1 = static_cast<int>(uniform_index(rng, 17)), x2 = static_cast<int>(uniform_index(rng, 17));
    int y1 = static_cast<int>(uniform_index(rng, 13)), y2 = static_cast<int>(uniform_index(rng, 13));
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    const double brute = v.block(y1, x1, y2 - y1 + 1, x2 - x1 + 1).sum();
    CHECK(ii.sum(x1, y1, x2, y2) == brute);
  }
}

TEST_CASE("patches see mirror-padded pixels") {
  Rng rng(3);
  const auto img = testing::random_gray(9, 6, rng);
  const int w = 7;
  for (int cy = 0; cy < img.height(); ++cy)
    for (int cx = 0; cx < img.width(); ++cx) {
      const auto vals = extract_patch(img, {cx, cy}, w).values();
      for (int dy = 0; dy < w; ++dy)
        for (int dx = 0; dx < w; ++dx) {
          const int sx = mirror_index(cx - w / 2 + dx, img.width());
          const int sy = mirror_index(cy - w / 2 + dy, img.height());
          REQUIRE(vals(dy, dx) == img(sx, sy));
        }
    }
}

TEST_CASE("patch argument checks") {
  const GrayImage img(10, 10, 5);
  CHECK_THROWS_AS(extract_patch(img, {0, 0}, 4), std::invalid_argument);
  CHECK_THROWS_AS(extract_patch(img, {0, 0}, 21), std::invalid_argument);
  CHECK_THROWS_AS(extract_patch(img, {10, 0}, 5), std::invalid_argument);
  CHECK_NOTHROW(extract_patch(img, {9, 9}, 19));
  const auto src = make_padded_source(img, 9);
  CHECK_THROWS_AS(extract_patch(src, {1, 1}, 11), std::invalid_argument);
  CHECK(extract_patch(src, {1, 1}, 5).values().sum() == 25 * 5);
  CHECK_THROWS_AS(Patch::from_values(Raster<double>::Zero(4, 4)), std::invalid_argument);
}

TEST_CASE("png round trip") {
  testing::TempDir dir("image");
  Rng rng(11);
  RgbImage img(23, 11);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 23; ++x)
      img.set(x, y, static_cast<std::uint8_t>(uniform_index(rng, 256)), static_cast<std::uint8_t>(uniform_index(rng, 256)),
              static_cast<std::uint8_t>(uniform_index(rng, 256)));
  save_png(dir.path / "a.png", img);
  const auto back = load_image(dir.path / "a.png");
  CHECK((back.r == img.r).all());
  CHECK((back.g == img.g).all());
  CHECK((back.b == img.b).all());

  const auto gray = to_gray(img);
  save_png(dir.path / "g.png", gray);
  const auto gback = load_image(dir.path / "g.png");
  CHECK((gback.r == gray.pixels).all());
  CHECK((gback.b == gray.pixels).all());
}

TEST_CASE("16-bit png keeps probabilities to 1/65535") {
  testing::TempDir dir("png16");
  Raster<double> p(5, 8);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<double>(i) / (p.size() - 1);
  save_png16(dir.path / "p.png", p);
  const auto raw = load_png16(dir.path / "p.png");
  REQUIRE(raw.rows() == 5);
  REQUIRE(raw.cols() == 8);
  CHECK((raw.cast<double>() / 65535.0 - p).abs().maxCoeff() <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("decode errors are data errors") {
  testing::TempDir dir("bad");
  CHECK_THROWS_AS(load_image(dir.path / "missing.png"), DataError);
  {
    std::ofstream(dir.path / "text.png") << "definitely not an image";
  }
  CHECK_THROWS_WITH_AS(load_image(dir.path / "text.png"), doctest::Contains("unsupported format"), DataError);
  {
    std::ofstream out(dir.path / "trunc.png", std::ios::binary);
    out << "\x89PNG\r\n\x1a\n";
  }
  CHECK_THROWS_WITH_AS(load_image(dir.path / "trunc.png"), doctest::Contains("unreadable file"), DataError);
}

TEST_CASE("downsample is a box average") {
  RgbImage img(8, 5, 10, 20, 30);
  img.set(0, 0, 50, 20, 30);
  const auto d = downsample(img, 4);
  CHECK(d.width() == 2);
  CHECK(d.height() == 2);
  CHECK(d.r(0, 0) == 13);  // (15 * 10 + 50) / 16 = 12.5 rounds half up
  CHECK(d.g(1, 1) == 20);
}
