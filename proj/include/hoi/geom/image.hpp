#pragma once

// Minimal dense float image (row-major) used for rendered depth, masks and
// mask grids.

#include <vector>

#include "hoi/common.hpp"

namespace hoi::geom {

struct Image {
  int width = 0, height = 0;
  std::vector<double> pix;  // row-major, pix[y*width + x]

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pix(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {
    if (w <= 0 || h <= 0) fail(str_cat("Image: invalid dimensions ", w, "x", h));
  }

  double& at(int x, int y) { return pix[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)]; }
  double at(int x, int y) const {
    return pix[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)];
  }
  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

}  // namespace hoi::geom
