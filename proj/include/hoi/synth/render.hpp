#pragma once

// Synthetic observation rendering: a small perspective-correct z-buffer
// rasterizer over the scene's two meshes, producing noisy 2D keypoints with
// z-buffer visibility, a blurred 16x16 object-mask occupancy grid, masked
// depth medians, and metric bounding-box heights — the desk-scale stand-ins
// for off-the-shelf keypoint/mask/depth estimators.

#include <array>
#include <cmath>
#include <limits>

#include "hoi/eval/metrics.hpp"
#include "hoi/geom/camera.hpp"
#include "hoi/geom/image.hpp"
#include "hoi/synth/scene.hpp"

namespace hoi::synth {

struct RenderedScene {
  geom::Image depth;      // meters; +inf where nothing was hit
  geom::Image body_mask;  // 1 where the body is the nearest surface
  geom::Image obj_mask;   // 1 where the object is the nearest surface
};

namespace detail {

// Rasterize one triangle into depth/id buffers (id wins where strictly nearer).
inline void raster_triangle(const geom::Camera& cam, const geom::V3& a, const geom::V3& b,
                            const geom::V3& c, int id, geom::Image& depth, geom::Image& ids) {
  // skip any triangle touching the camera plane
  if (a.z <= 1e-6 || b.z <= 1e-6 || c.z <= 1e-6) return;
  auto pa = geom::project(cam, a), pb = geom::project(cam, b), pc = geom::project(cam, c);
  double x0 = std::min({pa.u, pb.u, pc.u}), x1 = std::max({pa.u, pb.u, pc.u});
  double y0 = std::min({pa.v, pb.v, pc.v}), y1 = std::max({pa.v, pb.v, pc.v});
  int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
  int ix1 = std::min(cam.width - 1, static_cast<int>(std::ceil(x1)));
  int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
  int iy1 = std::min(cam.height - 1, static_cast<int>(std::ceil(y1)));
  if (ix0 > ix1 || iy0 > iy1) return;

  double d = (pb.v - pc.v) * (pa.u - pc.u) + (pc.u - pb.u) * (pa.v - pc.v);
  if (std::fabs(d) < 1e-12) return;  // degenerate in screen space
  for (int y = iy0; y <= iy1; ++y)
    for (int x = ix0; x <= ix1; ++x) {
      double px = x + 0.5, py = y + 0.5;
      double l0 = ((pb.v - pc.v) * (px - pc.u) + (pc.u - pb.u) * (py - pc.v)) / d;
      double l1 = ((pc.v - pa.v) * (px - pc.u) + (pa.u - pc.u) * (py - pc.v)) / d;
      double l2 = 1.0 - l0 - l1;
      if (l0 < 0 || l1 < 0 || l2 < 0) continue;
      double inv_z = l0 / a.z + l1 / b.z + l2 / c.z;  // perspective-correct
      double z = 1.0 / inv_z;
      if (z < depth.at(x, y)) {
        depth.at(x, y) = z;
        ids.at(x, y) = id;
      }
    }
}

inline void raster_mesh(const geom::Camera& cam, const geom::TriMesh& m, int id, geom::Image& depth,
                        geom::Image& ids) {
  for (const auto& f : m.faces)
    raster_triangle(cam, m.vertices[static_cast<size_t>(f[0])], m.vertices[static_cast<size_t>(f[1])],
                    m.vertices[static_cast<size_t>(f[2])], id, depth, ids);
}

}  // namespace detail

inline RenderedScene render_scene(const SceneSpec& s) {
  RenderedScene out;
  out.depth = geom::Image(s.camera.width, s.camera.height, std::numeric_limits<double>::infinity());
  geom::Image ids(s.camera.width, s.camera.height, -1.0);
  detail::raster_mesh(s.camera, s.body_mesh_world(), 0, out.depth, ids);
  detail::raster_mesh(s.camera, s.object_mesh_world(), 1, out.depth, ids);
  out.body_mask = geom::Image(s.camera.width, s.camera.height, 0.0);
  out.obj_mask = geom::Image(s.camera.width, s.camera.height, 0.0);
  for (size_t i = 0; i < ids.pix.size(); ++i) {
    if (ids.pix[i] == 0.0) out.body_mask.pix[i] = 1.0;
    if (ids.pix[i] == 1.0) out.obj_mask.pix[i] = 1.0;
  }
  return out;
}

inline constexpr int kMaskGridSize = 16;
inline constexpr double kVisibilityBand = 0.25;  // meters in front of a joint

struct Observation {
  std::array<std::array<double, 2>, body::kNumJoints> keypoints_px{};  // noisy pixels
  std::array<uint8_t, body::kNumJoints> visible{};
  geom::Image mask_grid;  // kMaskGridSize^2, values in [0,1]
  double depth_median_body = 0, depth_median_obj = 0;
  double bbox_h_body_m = 0, bbox_h_obj_m = 0;  // metric bbox heights from the depth map
};

namespace detail {

inline geom::Image downsample_and_blur(const geom::Image& mask, int grid) {
  geom::Image out(grid, grid, 0.0);
  int bx = mask.width / grid, by = mask.height / grid;
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      double acc = 0;
      for (int y = gy * by; y < (gy + 1) * by; ++y)
        for (int x = gx * bx; x < (gx + 1) * bx; ++x) acc += mask.at(x, y);
      out.at(gx, gy) = acc / static_cast<double>(bx * by);
    }
  // separable 1-cell Gaussian ([0.25,0.5,0.25]), zero-padded borders
  auto blur_pass = [&](const geom::Image& src, bool horizontal) {
    geom::Image dst(grid, grid, 0.0);
    for (int y = 0; y < grid; ++y)
      for (int x = 0; x < grid; ++x) {
        double acc = 0.5 * src.at(x, y);
        int x0 = horizontal ? x - 1 : x, y0 = horizontal ? y : y - 1;
        int x1 = horizontal ? x + 1 : x, y1 = horizontal ? y : y + 1;
        if (src.contains(x0, y0)) acc += 0.25 * src.at(x0, y0);
        if (src.contains(x1, y1)) acc += 0.25 * src.at(x1, y1);
        dst.at(x, y) = acc;
      }
    return dst;
  };
  return blur_pass(blur_pass(out, true), false);
}

inline double masked_median_local(const geom::Image& depth, const geom::Image& mask) {
  std::vector<double> vals;
  for (size_t i = 0; i < depth.pix.size(); ++i)
    if (mask.pix[i] > 0.5 && std::isfinite(depth.pix[i])) vals.push_back(depth.pix[i]);
  if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(vals.begin(), vals.end());
  size_t n = vals.size();
  return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

inline bool mask_nonempty(const geom::Image& mask, const geom::Image& depth) {
  for (size_t i = 0; i < mask.pix.size(); ++i)
    if (mask.pix[i] > 0.5 && std::isfinite(depth.pix[i])) return true;
  return false;
}

}  // namespace detail

// Pure function of (scene, keypoint noise sigma); the noise stream is seeded
// from the scene seed.
inline Observation render_observation(const SceneSpec& s, double keypoint_noise_px = 2.0) {
  RenderedScene r = render_scene(s);
  Observation obs;
  obs.mask_grid = detail::downsample_and_blur(r.obj_mask, kMaskGridSize);
  obs.depth_median_body = detail::masked_median_local(r.depth, r.body_mask);
  obs.depth_median_obj = detail::masked_median_local(r.depth, r.obj_mask);
  obs.bbox_h_body_m = detail::mask_nonempty(r.body_mask, r.depth)
                          ? eval::masked_metric_height(r.depth, r.body_mask, s.camera)
                          : 0.0;
  obs.bbox_h_obj_m = detail::mask_nonempty(r.obj_mask, r.depth)
                         ? eval::masked_metric_height(r.depth, r.obj_mask, s.camera)
                         : 0.0;

  auto joints = body::BodyModel::get().joint_positions(s.body);
  Rng noise(substream_seed(s.seed, 0x0B5EAF));
  for (int j = 0; j < body::kNumJoints; ++j) {
    const geom::V3& J = joints[static_cast<size_t>(j)];
    bool vis = J.z > 1e-6;
    double u = 0, v = 0;
    if (vis) {
      auto px = geom::project(s.camera, J);
      u = px.u;
      v = px.v;
      vis = geom::in_image(s.camera, px);
      if (vis) {
        int ix = std::clamp(static_cast<int>(std::floor(u)), 0, s.camera.width - 1);
        int iy = std::clamp(static_cast<int>(std::floor(v)), 0, s.camera.height - 1);
        double zbuf = r.depth.at(ix, iy);
        vis = std::isfinite(zbuf) && zbuf >= J.z - kVisibilityBand;
      }
    }
    // keypoint estimators still output coordinates for occluded joints
    obs.keypoints_px[static_cast<size_t>(j)] = {u + noise.normal() * keypoint_noise_px,
                                                v + noise.normal() * keypoint_noise_px};
    obs.visible[static_cast<size_t>(j)] = vis ? 1 : 0;
  }
  return obs;
}

}  // namespace hoi::synth
