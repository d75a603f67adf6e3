#pragma once

#include <array>
#include <cmath>

#include "hoi/common.hpp"

namespace hoi::geom {

struct V3 {
  double x = 0, y = 0, z = 0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  V3 operator*(double s) const { return {x * s, y * s, z * s}; }
  V3 operator/(double s) const { return {x / s, y / s, z / s}; }
  V3 operator-() const { return {-x, -y, -z}; }
  V3& operator+=(const V3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  V3& operator-=(const V3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
};

inline V3 operator*(double s, const V3& v) { return v * s; }
inline double dot(const V3& a, const V3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline V3 cross(const V3& a, const V3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm2(const V3& v) { return dot(v, v); }
inline double norm(const V3& v) { return std::sqrt(dot(v, v)); }
inline V3 normalized(const V3& v) {
  double n = norm(v);
  if (n < 1e-14) fail("normalized: zero-length vector");
  return v / n;
}
inline V3 vmin(const V3& a, const V3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline V3 vmax(const V3& a, const V3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}
inline bool finite(const V3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// 3x3 matrix, row-major
struct M3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static M3 identity() { return {}; }
  static M3 zero() { return M3{{0, 0, 0, 0, 0, 0, 0, 0, 0}}; }
  static M3 from_rows(const V3& r0, const V3& r1, const V3& r2) {
    return M3{{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
  }
  static M3 from_cols(const V3& c0, const V3& c1, const V3& c2) {
    return M3{{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
  }

  double operator()(int r, int c) const { return m[static_cast<size_t>(r * 3 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<size_t>(r * 3 + c)]; }

  V3 row(int r) const { return {m[r * 3 + 0u], m[r * 3 + 1u], m[r * 3 + 2u]}; }
  V3 col(int c) const { return {m[0u + c], m[3u + c], m[6u + c]}; }

  V3 operator*(const V3& v) const {
    return {dot(row(0), v), dot(row(1), v), dot(row(2), v)};
  }
  M3 operator*(const M3& o) const {
    M3 out = M3::zero();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += (*this)(r, k) * o(k, c);
        out(r, c) = acc;
      }
    return out;
  }
  M3 transposed() const {
    return M3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

inline M3 rot_x(double a) {
  double c = std::cos(a), s = std::sin(a);
  return M3{{1, 0, 0, 0, c, -s, 0, s, c}};
}
inline M3 rot_y(double a) {
  double c = std::cos(a), s = std::sin(a);
  return M3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}
inline M3 rot_z(double a) {
  double c = std::cos(a), s = std::sin(a);
  return M3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

// axis-angle to rotation matrix, stable near zero via sinc and half-angle
inline M3 rodrigues(const V3& aa) {
  double t2 = norm2(aa);
  double t = std::sqrt(t2 + 1e-24);
  double f1 = std::sin(t) / t;
  double sh = std::sin(0.5 * t);
  double f2 = 2.0 * sh * sh / (t2 + 1e-24);
  M3 A = M3{{0, -aa.z, aa.y, aa.z, 0, -aa.x, -aa.y, aa.x, 0}};
  M3 A2 = A * A;
  M3 out = M3::identity();
  for (int i = 0; i < 9; ++i)
    out.m[static_cast<size_t>(i)] += f1 * A.m[static_cast<size_t>(i)] + f2 * A2.m[static_cast<size_t>(i)];
  return out;
}

}  // namespace hoi::geom
