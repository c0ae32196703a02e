#include <algorithm>
#include <cmath>

#include <boost/polygon/voronoi.hpp>

#include "tmapath/detection.hpp"
#include "tmapath/error.hpp"

namespace tmapath {

namespace {

constexpr double kQuantum = 256.0;

struct Site {
  int x, y;
};

}  // namespace

}  // namespace tmapath

namespace boost::polygon {

template <>
struct geometry_concept<tmapath::Site> {
  using type = point_concept;
};

template <>
struct point_traits<tmapath::Site> {
  using coordinate_type = int;
  static int get(const tmapath::Site& s, orientation_2d orient) {
    return orient == HORIZONTAL ? s.x : s.y;
  }
};

}  // namespace boost::polygon

namespace tmapath {

std::vector<Point2d> voronoi_negative_samples(const std::vector<Point2d>& positives, int width,
                                              int height, double r_min) {
  std::vector<Site> sites;
  sites.reserve(positives.size());
  for (const auto& p : positives)
    sites.push_back({static_cast<int>(std::lround(p.x() * kQuantum)),
                     static_cast<int>(std::lround(p.y() * kQuantum))});
  std::sort(sites.begin(), sites.end(),
            [](const Site& a, const Site& b) { return std::tie(a.x, a.y) < std::tie(b.x, b.y); });
  sites.erase(std::unique(sites.begin(), sites.end(),
                          [](const Site& a, const Site& b) { return a.x == b.x && a.y == b.y; }),
              sites.end());
  if (sites.size() < 3) throw DataError("degenerate tessellation");

  boost::polygon::voronoi_diagram<double> vd;
  boost::polygon::construct_voronoi(sites.begin(), sites.end(), &vd);
  if (vd.vertices().empty()) throw DataError("degenerate tessellation");

  std::vector<Point2d> out;
  for (const auto& v : vd.vertices()) {
    const Point2d q(v.x() / kQuantum, v.y() / kQuantum);
    if (q.x() < 0.0 || q.y() < 0.0 || q.x() > width - 1 || q.y() > height - 1) continue;
    const bool clear = std::all_of(positives.begin(), positives.end(),
                                   [&](const Point2d& p) { return (p - q).norm() > r_min; });
    if (!clear) continue;
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const Point2d& o) { return (o - q).norm() < 1e-9; });
    if (!dup) out.push_back(q);
  }
  std::sort(out.begin(), out.end(), [](const Point2d& a, const Point2d& b) {
    return std::tie(a.y(), a.x()) < std::tie(b.y(), b.x());
  });
  return out;
}

}  // namespace tmapath
