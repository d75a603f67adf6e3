#pragma once

// Bounding volume hierarchy over triangles: exact closest-point queries and
// ray-parity inside/outside tests.  Queries reproduce brute force exactly:
// the per-triangle math is shared, comparisons use squared distance, and
// ties resolve to the lowest face index regardless of traversal order.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <vector>

#include "hoi/common.hpp"
#include "hoi/geom/trimesh.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::geom {

// Closest point on a triangle (Voronoi-region walk), with barycentric
// coordinates of the result.
struct TrianglePoint {
  V3 point;
  double u = 0, v = 0, w = 0;
};

inline TrianglePoint closest_point_triangle(const V3& p, const V3& a, const V3& b, const V3& c) {
  V3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, 1, 0, 0};

  V3 bp = p - b;
  double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, 0, 1, 0};

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    double t = d1 / (d1 - d3);
    return {a + ab * t, 1 - t, t, 0};
  }

  V3 cp = p - c;
  double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, 0, 0, 1};

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    double t = d2 / (d2 - d6);
    return {a + ac * t, 1 - t, 0, t};
  }

  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + (c - b) * t, 0, 1 - t, t};
  }

  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, 1 - v - w, v, w};
}

struct ClosestHit {
  int64_t face = -1;
  V3 point;
  double u = 0, v = 0, w = 0;
  double dist2 = std::numeric_limits<double>::infinity();
};

// Reference implementation: scan every face in index order.
inline ClosestHit closest_point_brute(const TriMesh& mesh, const V3& q) {
  ClosestHit best;
  for (int64_t f = 0; f < mesh.num_faces(); ++f) {
    const auto& t = mesh.faces[static_cast<size_t>(f)];
    TrianglePoint tp =
        closest_point_triangle(q, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    double d2 = norm2(q - tp.point);
    if (d2 < best.dist2 || (d2 == best.dist2 && f < best.face)) {
      best = {f, tp.point, tp.u, tp.v, tp.w, d2};
    }
  }
  return best;
}

class Bvh {
 public:
  static constexpr int kLeafSize = 4;

  explicit Bvh(const TriMesh& mesh) : mesh_(&mesh) {
    int64_t nf = mesh.num_faces();
    if (nf == 0) fail("Bvh: mesh has no faces");
    prim_.resize(static_cast<size_t>(nf));
    for (int64_t i = 0; i < nf; ++i) prim_[static_cast<size_t>(i)] = i;
    centroids_.resize(static_cast<size_t>(nf));
    for (int64_t f = 0; f < nf; ++f) {
      const auto& t = mesh.faces[static_cast<size_t>(f)];
      centroids_[static_cast<size_t>(f)] =
          (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    }
    nodes_.reserve(static_cast<size_t>(2 * nf));
    build(0, nf);
  }

  const TriMesh& mesh() const { return *mesh_; }

  ClosestHit closest_point(const V3& q) const {
    ClosestHit best;
    // explicit stack; nearer child first, prune by box distance
    int64_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      int64_t ni = stack[--sp];
      const Node& n = nodes_[static_cast<size_t>(ni)];
      if (box_dist2(n, q) > best.dist2) continue;
      if (n.count > 0) {
        for (int64_t i = n.start; i < n.start + n.count; ++i) {
          int64_t f = prim_[static_cast<size_t>(i)];
          const auto& t = mesh_->faces[static_cast<size_t>(f)];
          TrianglePoint tp = closest_point_triangle(q, mesh_->vertices[t[0]],
                                                    mesh_->vertices[t[1]], mesh_->vertices[t[2]]);
          double d2 = norm2(q - tp.point);
          if (d2 < best.dist2 || (d2 == best.dist2 && f < best.face)) {
            best = {f, tp.point, tp.u, tp.v, tp.w, d2};
          }
        }
      } else {
        double dl = box_dist2(nodes_[static_cast<size_t>(n.left)], q);
        double dr = box_dist2(nodes_[static_cast<size_t>(n.right)], q);
        // push farther first so the nearer child is processed next
        if (dl <= dr) {
          stack[sp++] = n.right;
          stack[sp++] = n.left;
        } else {
          stack[sp++] = n.left;
          stack[sp++] = n.right;
        }
      }
    }
    return best;
  }

  // Count ray crossings with t > 0.  Returns nullopt when a hit grazes an
  // edge/vertex or the ray is near-parallel to a face plane; callers should
  // retry with a different direction.
  std::optional<int> ray_crossings(const V3& origin, const V3& dir) const {
    int count = 0;
    int64_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    V3 inv_dir{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    while (sp > 0) {
      const Node& n = nodes_[static_cast<size_t>(stack[--sp])];
      if (!ray_hits_box(n, origin, inv_dir)) continue;
      if (n.count > 0) {
        for (int64_t i = n.start; i < n.start + n.count; ++i) {
          int64_t f = prim_[static_cast<size_t>(i)];
          const auto& t = mesh_->faces[static_cast<size_t>(f)];
          int r = ray_triangle(origin, dir, mesh_->vertices[t[0]], mesh_->vertices[t[1]],
                               mesh_->vertices[t[2]]);
          if (r < 0) return std::nullopt;
          count += r;
        }
      } else {
        stack[sp++] = n.left;
        stack[sp++] = n.right;
      }
    }
    return count;
  }

 private:
  struct Node {
    V3 lo, hi;
    int64_t left = -1, right = -1;
    int64_t start = 0, count = 0;  // count > 0 marks a leaf
  };

  const TriMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int64_t> prim_;
  std::vector<V3> centroids_;

  int64_t build(int64_t start, int64_t count) {
    int64_t idx = static_cast<int64_t>(nodes_.size());
    nodes_.push_back({});
    V3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (int64_t i = start; i < start + count; ++i) {
      const auto& t = mesh_->faces[static_cast<size_t>(prim_[static_cast<size_t>(i)])];
      for (int k = 0; k < 3; ++k) {
        lo = vmin(lo, mesh_->vertices[t[k]]);
        hi = vmax(hi, mesh_->vertices[t[k]]);
      }
    }
    nodes_[static_cast<size_t>(idx)].lo = lo;
    nodes_[static_cast<size_t>(idx)].hi = hi;
    if (count <= kLeafSize) {
      nodes_[static_cast<size_t>(idx)].start = start;
      nodes_[static_cast<size_t>(idx)].count = count;
      return idx;
    }
    // median split along the longest centroid axis, ties by face index
    V3 clo{1e300, 1e300, 1e300}, chi{-1e300, -1e300, -1e300};
    for (int64_t i = start; i < start + count; ++i) {
      const V3& c = centroids_[static_cast<size_t>(prim_[static_cast<size_t>(i)])];
      clo = vmin(clo, c);
      chi = vmax(chi, c);
    }
    V3 ext = chi - clo;
    int axis = ext.x >= ext.y ? (ext.x >= ext.z ? 0 : 2) : (ext.y >= ext.z ? 1 : 2);
    int64_t mid = start + count / 2;
    std::nth_element(prim_.begin() + start, prim_.begin() + mid, prim_.begin() + start + count,
                     [&](int64_t a, int64_t b) {
                       double ca = centroids_[static_cast<size_t>(a)][axis];
                       double cb = centroids_[static_cast<size_t>(b)][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    int64_t l = build(start, mid - start);
    int64_t r = build(mid, start + count - mid);
    nodes_[static_cast<size_t>(idx)].left = l;
    nodes_[static_cast<size_t>(idx)].right = r;
    return idx;
  }

  static double sq(double x) { return x * x; }

  double box_dist2(const Node& n, const V3& q) const {
    double d = 0;
    for (int k = 0; k < 3; ++k) {
      if (q[k] < n.lo[k]) d += sq(n.lo[k] - q[k]);
      else if (q[k] > n.hi[k]) d += sq(q[k] - n.hi[k]);
    }
    return d;
  }

  bool ray_hits_box(const Node& n, const V3& o, const V3& inv_dir) const {
    double tmin = 0.0, tmax = 1e300;
    for (int k = 0; k < 3; ++k) {
      double t1 = (n.lo[k] - o[k]) * inv_dir[k];
      double t2 = (n.hi[k] - o[k]) * inv_dir[k];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return false;
    }
    return true;
  }

  // 1 = crossing, 0 = miss, -1 = unreliable (grazing/parallel)
  static int ray_triangle(const V3& o, const V3& d, const V3& a, const V3& b, const V3& c) {
    constexpr double kParallel = 1e-12;
    constexpr double kEdge = 1e-10;
    V3 e1 = b - a, e2 = c - a;
    V3 p = cross(d, e2);
    double det = dot(e1, p);
    double scale = norm(e1) * norm(e2);
    if (std::fabs(det) < kParallel * scale) {
      // parallel ray: reliable miss only if clearly off the plane
      V3 n = cross(e1, e2);
      double dist = dot(o - a, n) / (norm(n) + 1e-300);
      if (std::fabs(dist) > 1e-9) return 0;
      return -1;
    }
    double inv = 1.0 / det;
    V3 s = o - a;
    double u = dot(s, p) * inv;
    if (u < -kEdge || u > 1.0 + kEdge) return 0;
    V3 q = cross(s, e1);
    double v = dot(d, q) * inv;
    if (v < -kEdge || u + v > 1.0 + kEdge) return 0;
    if (u < kEdge || v < kEdge || u + v > 1.0 - kEdge) return -1;  // grazes an edge/vertex
    double t = dot(e2, q) * inv;
    if (std::fabs(t) < 1e-12) return -1;  // origin on the surface: ambiguous
    return t > 0.0 ? 1 : 0;
  }
};

// Deterministic pseudo-random unit direction derived from the query point
// bits and an attempt counter.
inline V3 parity_direction(const V3& q, uint64_t attempt) {
  uint64_t h = 0x9E3779B97F4A7C15ull * (attempt + 1);
  auto mix = [&h](double x) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(x));
    std::memcpy(&bits, &x, sizeof(bits));
    h = splitmix64(h ^ bits);
  };
  mix(q.x);
  mix(q.y);
  mix(q.z);
  // two uniforms -> point on the sphere
  double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  h = splitmix64(h);
  double v = static_cast<double>(h >> 11) * 0x1.0p-53;
  double z = 2.0 * u - 1.0;
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  double phi = 2.0 * M_PI * v;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Ray-parity point-inside test for closed meshes.  Deterministic: the ray
// direction is a hash of the query coordinates; grazing hits trigger a
// retry with the next hashed direction.  A query exactly on the surface
// resolves to whatever parity the first reliable ray reports (deterministic,
// but not meaningful).
inline bool point_inside(const Bvh& bvh, const V3& q) {
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    auto crossings = bvh.ray_crossings(q, parity_direction(q, attempt));
    if (crossings.has_value()) return (*crossings % 2) == 1;
  }
  fail(str_cat("point_inside: no reliable ray after 64 attempts at (", q.x, ",", q.y, ",", q.z, ")"));
}

}  // namespace hoi::geom
