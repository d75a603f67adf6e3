#pragma once

// Least-squares alignment of point sets: similarity (scale+rotation+
// translation) and rigid (rotation+translation) variants.  Solves
// argmin sum_i | dst_i - (s R src_i + t) |^2 with R constrained to a proper
// rotation (det +1).

#include <Eigen/Dense>

#include <vector>

#include "hoi/common.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::geom {

struct Alignment {
  double scale = 1.0;
  M3 R;
  V3 t;
};

inline V3 apply(const Alignment& a, const V3& p) { return a.R * (p * a.scale) + a.t; }

namespace detail {

inline Alignment procrustes_impl(const std::vector<V3>& src, const std::vector<V3>& dst,
                                 bool with_scale) {
  if (src.size() != dst.size()) fail("procrustes: point sets differ in size");
  if (src.size() < 3) fail("procrustes: need at least 3 points");
  size_t n = src.size();

  V3 ms{0, 0, 0}, md{0, 0, 0};
  for (size_t i = 0; i < n; ++i) {
    ms += src[i];
    md += dst[i];
  }
  ms = ms / static_cast<double>(n);
  md = md / static_cast<double>(n);

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  double src_var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    V3 a = src[i] - ms, b = dst[i] - md;
    src_var += norm2(a);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) H(r, c) += a[r] * b[c];
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(1) <= 1e-12 * (sv(0) + 1e-300))
    fail("procrustes: rank-deficient covariance (points are collinear or coincident)");

  Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((V * U.transpose()).determinant() < 0) D(2, 2) = -1.0;
  Eigen::Matrix3d Re = V * D * U.transpose();

  Alignment out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.R(r, c) = Re(r, c);
  if (with_scale) {
    if (src_var <= 0.0) fail("procrustes: source points are coincident");
    double trace = (sv(0) * D(0, 0) + sv(1) * D(1, 1) + sv(2) * D(2, 2));
    out.scale = trace / src_var;
    if (out.scale <= 0.0) fail("procrustes: non-positive scale (degenerate geometry)");
  }
  out.t = md - out.R * (ms * out.scale);
  return out;
}

}  // namespace detail

inline Alignment procrustes_similarity(const std::vector<V3>& src, const std::vector<V3>& dst) {
  return detail::procrustes_impl(src, dst, true);
}

inline Alignment procrustes_rigid(const std::vector<V3>& src, const std::vector<V3>& dst) {
  return detail::procrustes_impl(src, dst, false);
}

}  // namespace hoi::geom
