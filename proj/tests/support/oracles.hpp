#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance suite.  These deliberately avoid the library's accelerated code
// paths: the voxel oracle classifies inside/outside by flood fill, the brute
// metrics use quadratic scans.

#include <cstdint>
#include <queue>
#include <vector>

#include "hoi/geom/bvh.hpp"
#include "hoi/geom/trimesh.hpp"

namespace hoi::testing {

// Voxelized inside/outside classifier: cells overlapping any triangle's
// bounding box form a conservative surface shell; a flood fill from the
// boundary labels the outside.  Queries in or next to the shell are
// indeterminate and must be skipped by the caller.
class VoxelInsideOracle {
 public:
  VoxelInsideOracle(const geom::TriMesh& mesh, int resolution = 48) {
    auto [lo, hi] = geom::bounding_box(mesh);
    geom::V3 ext = hi - lo;
    double longest = std::max({ext.x, ext.y, ext.z});
    cell_ = longest / resolution;
    if (cell_ <= 0) fail("VoxelInsideOracle: flat mesh");
    lo_ = lo - geom::V3{3 * cell_, 3 * cell_, 3 * cell_};
    nx_ = static_cast<int>(std::ceil(ext.x / cell_)) + 6;
    ny_ = static_cast<int>(std::ceil(ext.y / cell_)) + 6;
    nz_ = static_cast<int>(std::ceil(ext.z / cell_)) + 6;
    state_.assign(static_cast<size_t>(nx_) * ny_ * nz_, kUnknown);

    for (const auto& f : mesh.faces) {
      geom::V3 tlo = geom::vmin(geom::vmin(mesh.vertices[f[0]], mesh.vertices[f[1]]), mesh.vertices[f[2]]);
      geom::V3 thi = geom::vmax(geom::vmax(mesh.vertices[f[0]], mesh.vertices[f[1]]), mesh.vertices[f[2]]);
      int x0 = clampi(static_cast<int>((tlo.x - lo_.x) / cell_), 0, nx_ - 1);
      int x1 = clampi(static_cast<int>((thi.x - lo_.x) / cell_), 0, nx_ - 1);
      int y0 = clampi(static_cast<int>((tlo.y - lo_.y) / cell_), 0, ny_ - 1);
      int y1 = clampi(static_cast<int>((thi.y - lo_.y) / cell_), 0, ny_ - 1);
      int z0 = clampi(static_cast<int>((tlo.z - lo_.z) / cell_), 0, nz_ - 1);
      int z1 = clampi(static_cast<int>((thi.z - lo_.z) / cell_), 0, nz_ - 1);
      for (int x = x0; x <= x1; ++x)
        for (int y = y0; y <= y1; ++y)
          for (int z = z0; z <= z1; ++z) at(x, y, z) = kSurface;
    }

    // flood fill the outside from the grid boundary
    std::queue<std::array<int, 3>> queue;
    auto push = [&](int x, int y, int z) {
      if (x < 0 || y < 0 || z < 0 || x >= nx_ || y >= ny_ || z >= nz_) return;
      uint8_t& s = at(x, y, z);
      if (s != kUnknown) return;
      s = kOutside;
      queue.push({x, y, z});
    };
    for (int x = 0; x < nx_; ++x)
      for (int y = 0; y < ny_; ++y) {
        push(x, y, 0);
        push(x, y, nz_ - 1);
      }
    for (int x = 0; x < nx_; ++x)
      for (int z = 0; z < nz_; ++z) {
        push(x, 0, z);
        push(x, ny_ - 1, z);
      }
    for (int y = 0; y < ny_; ++y)
      for (int z = 0; z < nz_; ++z) {
        push(0, y, z);
        push(nx_ - 1, y, z);
      }
    while (!queue.empty()) {
      auto [x, y, z] = queue.front();
      queue.pop();
      push(x + 1, y, z);
      push(x - 1, y, z);
      push(x, y + 1, z);
      push(x, y - 1, z);
      push(x, y, z + 1);
      push(x, y, z - 1);
    }
  }

  enum Verdict { kInside, kOutsideV, kIndeterminate };

  // Indeterminate when the query's cell or any neighbor touches the shell.
  Verdict classify(const geom::V3& p) const {
    int x = static_cast<int>(std::floor((p.x - lo_.x) / cell_));
    int y = static_cast<int>(std::floor((p.y - lo_.y) / cell_));
    int z = static_cast<int>(std::floor((p.z - lo_.z) / cell_));
    if (x < 1 || y < 1 || z < 1 || x >= nx_ - 1 || y >= ny_ - 1 || z >= nz_ - 1) return kOutsideV;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz)
          if (cat(x + dx, y + dy, z + dz) == kSurface) return kIndeterminate;
    return cat(x, y, z) == kUnknown ? kInside : kOutsideV;
  }

 private:
  static constexpr uint8_t kUnknown = 0, kSurface = 1, kOutside = 2;
  geom::V3 lo_;
  double cell_ = 0;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<uint8_t> state_;

  static int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }
  uint8_t& at(int x, int y, int z) {
    return state_[(static_cast<size_t>(x) * ny_ + y) * nz_ + z];
  }
  uint8_t cat(int x, int y, int z) const {
    return state_[(static_cast<size_t>(x) * ny_ + y) * nz_ + z];
  }
};

// Quadratic-scan Chamfer distance (mean of nearest distances, both ways).
inline double chamfer_brute(const std::vector<geom::V3>& a, const std::vector<geom::V3>& b) {
  if (a.empty() || b.empty()) fail("chamfer_brute: empty point set");
  double acc_ab = 0;
  for (const auto& p : a) {
    double best = 1e300;
    for (const auto& q : b) best = std::min(best, geom::norm2(p - q));
    acc_ab += std::sqrt(best);
  }
  double acc_ba = 0;
  for (const auto& q : b) {
    double best = 1e300;
    for (const auto& p : a) best = std::min(best, geom::norm2(q - p));
    acc_ba += std::sqrt(best);
  }
  return acc_ab / static_cast<double>(a.size()) + acc_ba / static_cast<double>(b.size());
}

}  // namespace hoi::testing
