#pragma once

// Pinhole camera: x right, y down, z forward.  Pixel = (fx*x/z + cx,
// fy*y/z + cy).

#include "hoi/diff/tensor.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::geom {

struct Camera {
  double fx = 150, fy = 150, cx = 64, cy = 64;
  int width = 128, height = 128;
};

struct Pixel {
  double u = 0, v = 0;
};

inline Pixel project(const Camera& cam, const V3& p) {
  if (p.z <= 0.0)
    fail(str_cat("project: point behind camera (z=", p.z, ")"));
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

inline bool in_image(const Camera& cam, const Pixel& px) {
  return px.u >= 0 && px.u < cam.width && px.v >= 0 && px.v < cam.height;
}

// Differentiable batched projection of [...,3] points to [...,2] pixels.
// All z values must be positive on entry (checked against current values);
// callers that need a behind-camera convention split the point set first.
inline diff::Tensor project_batch(const Camera& cam, const diff::Tensor& pts) {
  using namespace diff;
  const Shape& s = pts.shape();
  if (s.empty() || s.back() != 3)
    fail(str_cat("project_batch: need [...,3], got ", shape_str(s)));
  int64_t last = static_cast<int64_t>(s.size()) - 1;
  Tensor x = slice(pts, last, 0, 1);
  Tensor y = slice(pts, last, 1, 1);
  Tensor z = slice(pts, last, 2, 1);
  for (int64_t i = 0; i < z.numel(); ++i)
    if (z.at(i) <= 0.0) fail(str_cat("project_batch: point ", i, " behind camera (z=", z.at(i), ")"));
  Tensor u = add_scalar(mul_scalar(div(x, z), cam.fx), cam.cx);
  Tensor v = add_scalar(mul_scalar(div(y, z), cam.fy), cam.cy);
  return concat({u, v}, last);
}

// Map pixel coordinates to the [-1,1] range used by grid sampling over a
// cell grid covering the full image.
inline diff::Tensor pixels_to_unit(const Camera& cam, const diff::Tensor& px) {
  using namespace diff;
  const Shape& s = px.shape();
  if (s.empty() || s.back() != 2)
    fail(str_cat("pixels_to_unit: need [...,2], got ", shape_str(s)));
  int64_t last = static_cast<int64_t>(s.size()) - 1;
  Tensor u = slice(px, last, 0, 1);
  Tensor v = slice(px, last, 1, 1);
  Tensor ux = add_scalar(mul_scalar(u, 2.0 / cam.width), -1.0);
  Tensor vy = add_scalar(mul_scalar(v, 2.0 / cam.height), -1.0);
  return concat({ux, vy}, last);
}

}  // namespace hoi::geom
