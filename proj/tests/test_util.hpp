#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ptznav/cropgeom.hpp"
#include "ptznav/image.hpp"

namespace testutil {

// Rasterization IOU oracle: walks a 1-px grid and accumulates, per cell, the
// covered fraction of each box and of their overlap. Independent of the
// closed-form min/max implementation; exact for axis-aligned boxes up to
// floating-point summation.
inline double iou_raster_oracle(const ptznav::cropgeom::BBox& a,
                                const ptznav::cropgeom::BBox& b) {
  const double lo_x = std::floor(std::min(a.x, b.x)) - 1;
  const double lo_y = std::floor(std::min(a.y, b.y)) - 1;
  const double hi_x = std::ceil(std::max(a.x + a.side, b.x + b.side)) + 1;
  const double hi_y = std::ceil(std::max(a.y + a.side, b.y + b.side)) + 1;
  auto covered = [](double cell, const double lo, const double hi) {
    const double from = std::max(cell, lo);
    const double to = std::min(cell + 1.0, hi);
    return to > from ? to - from : 0.0;
  };
  auto covered2 = [](double cell, double lo1, double hi1, double lo2,
                     double hi2) {
    const double from = std::max({cell, lo1, lo2});
    const double to = std::min({cell + 1.0, hi1, hi2});
    return to > from ? to - from : 0.0;
  };
  double area_a = 0.0, area_b = 0.0, area_both = 0.0;
  for (double y = lo_y; y < hi_y; y += 1.0) {
    const double ay = covered(y, a.y, a.y + a.side);
    const double by = covered(y, b.y, b.y + b.side);
    const double aby = covered2(y, a.y, a.y + a.side, b.y, b.y + b.side);
    if (ay == 0.0 && by == 0.0) continue;
    for (double x = lo_x; x < hi_x; x += 1.0) {
      area_a += covered(x, a.x, a.x + a.side) * ay;
      area_b += covered(x, b.x, b.x + b.side) * by;
      area_both +=
          covered2(x, a.x, a.x + a.side, b.x, b.x + b.side) * aby;
    }
  }
  const double uni = area_a + area_b - area_both;
  return uni == 0.0 ? 0.0 : area_both / uni;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool same_file_bytes(const std::string& a, const std::string& b) {
  return slurp(a) == slurp(b);
}

// Fresh scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::path("ptznav_test_scratch") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testutil
