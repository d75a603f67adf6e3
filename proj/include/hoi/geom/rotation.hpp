#pragma once

// Rotation representations: the 6d representation (first two matrix columns,
// re-orthonormalized by Gram-Schmidt) in both a plain and a differentiable
// batched form, and a batched differentiable axis-angle (Rodrigues).

#include <array>

#include "hoi/diff/tensor.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::geom {

// --------------------------------------------------------------------------
// plain 6d <-> matrix
// --------------------------------------------------------------------------

inline M3 rot6d_to_matrix(const std::array<double, 6>& r) {
  V3 a1{r[0], r[1], r[2]}, a2{r[3], r[4], r[5]};
  double n1 = norm(a1);
  if (n1 < 1e-8) fail("rot6d_to_matrix: first column is numerically zero");
  V3 b1 = a1 / n1;
  V3 u = a2 - b1 * dot(b1, a2);
  double n2 = norm(u);
  if (n2 < 1e-8) fail("rot6d_to_matrix: columns are numerically parallel");
  V3 b2 = u / n2;
  V3 b3 = cross(b1, b2);
  return M3::from_cols(b1, b2, b3);
}

inline std::array<double, 6> matrix_to_rot6d(const M3& R) {
  return {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)};
}

// --------------------------------------------------------------------------
// differentiable batched versions
// --------------------------------------------------------------------------

namespace detail {
// cross product of batched 3-vectors [B,3]
inline diff::Tensor cross_rows(const diff::Tensor& a, const diff::Tensor& b) {
  using namespace diff;
  auto comp = [](const Tensor& t, int64_t i) { return slice(t, 1, i, 1); };
  Tensor ax = comp(a, 0), ay = comp(a, 1), az = comp(a, 2);
  Tensor bx = comp(b, 0), by = comp(b, 1), bz = comp(b, 2);
  Tensor cx = sub(mul(ay, bz), mul(az, by));
  Tensor cy = sub(mul(az, bx), mul(ax, bz));
  Tensor cz = sub(mul(ax, by), mul(ay, bx));
  return concat({cx, cy, cz}, 1);
}
}  // namespace detail

// [B,6] -> [B,3,3]; raises if any row in the batch is degenerate (zero or
// parallel columns), judged on the current values.
inline diff::Tensor rot6d_to_matrix_batch(const diff::Tensor& r6) {
  using namespace diff;
  if (r6.ndim() != 2 || r6.size(1) != 6)
    fail(str_cat("rot6d_to_matrix_batch: need [B,6], got ", shape_str(r6.shape())));
  int64_t B = r6.size(0);

  Tensor a1 = slice(r6, 1, 0, 3), a2 = slice(r6, 1, 3, 3);
  Tensor n1 = sqrt(sum_last(mul(a1, a1)));
  for (int64_t b = 0; b < B; ++b)
    if (n1.at(b) < 1e-8)
      fail(str_cat("rot6d_to_matrix_batch: first column of row ", b, " is numerically zero"));
  Tensor b1 = div(a1, n1);
  Tensor proj = sum_last(mul(b1, a2));  // [B,1]
  Tensor u = sub(a2, mul(b1, proj));
  Tensor n2 = sqrt(sum_last(mul(u, u)));
  for (int64_t b = 0; b < B; ++b)
    if (n2.at(b) < 1e-8)
      fail(str_cat("rot6d_to_matrix_batch: columns of row ", b, " are numerically parallel"));
  Tensor b2 = div(u, n2);
  Tensor b3 = detail::cross_rows(b1, b2);

  // rows of R are (b1_i, b2_i, b3_i)
  auto comp = [](const Tensor& t, int64_t i) { return slice(t, 1, i, 1); };
  std::vector<Tensor> rows;
  for (int64_t i = 0; i < 3; ++i)
    rows.push_back(concat({comp(b1, i), comp(b2, i), comp(b3, i)}, 1));
  return reshape(concat(rows, 1), {B, 3, 3});
}

// [B,3] axis-angle -> [B,3,3], smooth at zero (sinc / half-angle forms)
inline diff::Tensor rodrigues_batch(const diff::Tensor& aa) {
  using namespace diff;
  if (aa.ndim() != 2 || aa.size(1) != 3)
    fail(str_cat("rodrigues_batch: need [B,3], got ", shape_str(aa.shape())));
  int64_t B = aa.size(0);

  Tensor t2 = sum_last(mul(aa, aa));                       // [B,1]
  Tensor t2s = add_scalar(t2, 1e-24);
  Tensor theta = sqrt(t2s);
  Tensor f1 = div(sin(theta), theta);                      // sinc
  Tensor sh = sin(mul_scalar(theta, 0.5));
  Tensor f2 = div(mul_scalar(mul(sh, sh), 2.0), t2s);      // (1-cos)/theta^2

  auto comp = [&](int64_t i) { return slice(aa, 1, i, 1); };
  Tensor x = comp(0), y = comp(1), z = comp(2);
  Tensor zero = Tensor::zeros({B, 1});
  // skew matrix rows: (0,-z,y, z,0,-x, -y,x,0)
  Tensor A = reshape(
      concat({zero, neg(z), y, z, zero, neg(x), neg(y), x, zero}, 1), {B, 3, 3});
  Tensor A2 = matmul(A, A);

  std::vector<double> eye(static_cast<size_t>(B * 9), 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < 3; ++i) eye[static_cast<size_t>(b * 9 + i * 3 + i)] = 1.0;
  Tensor I = Tensor::from(eye, {B, 3, 3});

  Tensor f1b = reshape(f1, {B, 1, 1});
  Tensor f2b = reshape(f2, {B, 1, 1});
  return add(I, add(mul(f1b, A), mul(f2b, A2)));
}

// fixed rotation matrices as constant tensors
inline diff::Tensor const_matrix_batch(const M3& R, int64_t B) {
  std::vector<double> v(static_cast<size_t>(B * 9));
  for (int64_t b = 0; b < B; ++b)
    for (int i = 0; i < 9; ++i) v[static_cast<size_t>(b * 9 + i)] = R.m[static_cast<size_t>(i)];
  return diff::Tensor::from(v, {B, 3, 3});
}

}  // namespace hoi::geom
