#pragma once

// Benchmark metrics and protocol: bidirectional Chamfer distance, binary
// contact F1 at a fixed threshold, ray-parity collision score, the
// Procrustes evaluation alignment (similarity for the body, rigid-only for
// the object so estimated scale stays visible in CD), and the depth-anchored
// object initialization that blends an unreliable scale estimate with a
// body-anchored one.

#include <algorithm>
#include <vector>

#include "hoi/body/model.hpp"
#include "hoi/field/interfield.hpp"
#include "hoi/geom/bvh.hpp"
#include "hoi/geom/camera.hpp"
#include "hoi/geom/image.hpp"
#include "hoi/geom/kdtree.hpp"
#include "hoi/geom/procrustes.hpp"
#include "hoi/geom/trimesh.hpp"

namespace hoi::eval {

inline constexpr double kContactTau = 0.05;       // meters
inline constexpr int64_t kChamferSamples = 10000;  // surface points per mesh

// ---------------------------------------------------------------------------
// Chamfer distance
// ---------------------------------------------------------------------------

// CD(A,B) = mean_a min_b |a-b| + mean_b min_a |b-a|, in meters.
inline double chamfer(const std::vector<geom::V3>& a, const std::vector<geom::V3>& b) {
  if (a.empty() || b.empty()) fail("chamfer: empty point set");
  geom::KdTree3 ta(a), tb(b);
  double fwd = 0, bwd = 0;
  for (const auto& p : a) fwd += std::sqrt(tb.nearest(p).dist2);
  for (const auto& q : b) bwd += std::sqrt(ta.nearest(q).dist2);
  return fwd / static_cast<double>(a.size()) + bwd / static_cast<double>(b.size());
}

// Chamfer on surfaces: n uniform samples per mesh, deterministic per seed.
inline double chamfer_meshes(const geom::TriMesh& a, const geom::TriMesh& b,
                             int64_t n = kChamferSamples, uint64_t seed = 0x00C4A3FE) {
  Rng ra(substream_seed(seed, 1)), rb(substream_seed(seed, 2));
  return chamfer(geom::sample_positions(a, geom::sample_surface(a, n, ra)),
                 geom::sample_positions(b, geom::sample_surface(b, n, rb)));
}

// ---------------------------------------------------------------------------
// Contact F1
// ---------------------------------------------------------------------------

struct F1Result {
  double f1 = 0, precision = 0, recall = 0;
};

// F1 over aligned binary masks.  Convention: both masks empty -> perfect
// agreement (1); exactly one empty -> 0.
inline F1Result contact_f1_masks(const std::vector<bool>& pred, const std::vector<bool>& gt) {
  if (pred.size() != gt.size())
    fail(str_cat("contact_f1: mask size mismatch ", pred.size(), " vs ", gt.size()));
  int64_t tp = 0, np = 0, ng = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    np += pred[i] ? 1 : 0;
    ng += gt[i] ? 1 : 0;
    tp += (pred[i] && gt[i]) ? 1 : 0;
  }
  if (np == 0 && ng == 0) return {1.0, 1.0, 1.0};
  if (np == 0 || ng == 0) return {0.0, 0.0, 0.0};
  double p = static_cast<double>(tp) / static_cast<double>(np);
  double r = static_cast<double>(tp) / static_cast<double>(ng);
  double f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  return {f1, p, r};
}

// Binary contact at the canonical body sample points: a sample is "in
// contact" when its distance to the object surface is at most tau.
inline std::vector<bool> contact_mask(const geom::TriMesh& body, const geom::TriMesh& object,
                                      double tau = kContactTau, int64_t n_samples = 1024) {
  const auto& bm = body::BodyModel::get();
  if (body.num_vertices() != bm.num_vertices())
    fail("contact_mask: body mesh does not match the template topology");
  auto samples = bm.canonical_samples(n_samples);
  std::vector<geom::V3> pts(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) pts[i] = geom::sample_position(body, samples[i]);
  geom::Bvh bvh(object);
  auto f = field::compute_interfield(pts, bvh, 5.0);
  return field::extract_contact(f, tau);
}

inline F1Result contact_f1(const geom::TriMesh& pred_body, const geom::TriMesh& pred_obj,
                           const geom::TriMesh& gt_body, const geom::TriMesh& gt_obj,
                           double tau = kContactTau) {
  return contact_f1_masks(contact_mask(pred_body, pred_obj, tau),
                          contact_mask(gt_body, gt_obj, tau));
}

// ---------------------------------------------------------------------------
// Collision score
// ---------------------------------------------------------------------------

// Fraction of body vertices strictly inside the (closed) object mesh.
inline double collision_score(const geom::TriMesh& body, const geom::TriMesh& object) {
  if (!geom::is_watertight(object))
    fail("collision_score: object mesh is not closed (ray parity undefined)");
  geom::Bvh bvh(object);
  int64_t n = body.num_vertices();
  if (n == 0) fail("collision_score: empty body mesh");
  std::vector<uint8_t> inside(static_cast<size_t>(n), 0);
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      inside[static_cast<size_t>(i)] =
          geom::point_inside(bvh, body.vertices[static_cast<size_t>(i)]) ? 1 : 0;
  });
  int64_t count = 0;
  for (uint8_t b : inside) count += b;
  return static_cast<double>(count) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Evaluation alignment
// ---------------------------------------------------------------------------

struct EvalAlignment {
  geom::TriMesh body;
  geom::TriMesh object;
  geom::Alignment fit;  // similarity fit of pred body onto GT body
};

// Procrustes-align the predicted body onto the GT body (similarity); apply
// only the rigid part {R,t} to the object so its estimated scale is
// preserved and judged by CD.
inline EvalAlignment align_for_eval(const geom::TriMesh& pred_body, const geom::TriMesh& gt_body,
                                    const geom::TriMesh& pred_obj,
                                    const std::vector<int64_t>& subset = {}) {
  if (pred_body.num_vertices() != gt_body.num_vertices())
    fail("align_for_eval: body vertex counts differ");
  std::vector<geom::V3> src, dst;
  if (subset.empty()) {
    src = pred_body.vertices;
    dst = gt_body.vertices;
  } else {
    for (int64_t i : subset) {
      if (i < 0 || i >= pred_body.num_vertices())
        fail(str_cat("align_for_eval: correspondence index ", i, " out of range"));
      src.push_back(pred_body.vertices[static_cast<size_t>(i)]);
      dst.push_back(gt_body.vertices[static_cast<size_t>(i)]);
    }
  }
  if (src.size() < 3) fail("align_for_eval: correspondence subset too small");
  geom::Alignment fit = geom::procrustes_similarity(src, dst);

  EvalAlignment out;
  out.fit = fit;
  out.body = pred_body;
  for (auto& v : out.body.vertices) v = geom::apply(fit, v);
  out.object = pred_obj;
  for (auto& v : out.object.vertices) v = fit.R * v + fit.t;  // rigid only
  return out;
}

// ---------------------------------------------------------------------------
// Depth-anchored object initialization
// ---------------------------------------------------------------------------

struct InitAlignment {
  geom::M3 R;
  geom::V3 t;
  double sigma = 1.0;
};

namespace detail {

inline double masked_median(const geom::Image& depth, const geom::Image& mask, const char* what) {
  if (depth.width != mask.width || depth.height != mask.height)
    fail("init_object_alignment: depth/mask dimensions differ");
  std::vector<double> vals;
  for (size_t i = 0; i < depth.pix.size(); ++i)
    if (mask.pix[i] > 0.5 && std::isfinite(depth.pix[i])) vals.push_back(depth.pix[i]);
  if (vals.empty()) fail(str_cat("init_object_alignment: empty ", what, " mask"));
  std::sort(vals.begin(), vals.end());
  size_t n = vals.size();
  return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

}  // namespace detail

// Metric bounding-box height of a masked region, from the depth map: each
// masked pixel (a vertical [v, v+1) footprint) is unprojected at its own
// depth, and the y-extent of the resulting points is returned.  This is
// perspective-exact, unlike pixel-bbox-height * median-depth.
inline double masked_metric_height(const geom::Image& depth, const geom::Image& mask,
                                   const geom::Camera& cam) {
  if (depth.width != mask.width || depth.height != mask.height)
    fail("masked_metric_height: depth/mask dimensions differ");
  double y_lo = 1e300, y_hi = -1e300;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      double z = depth.at(x, y);
      if (!std::isfinite(z)) continue;
      y_lo = std::min(y_lo, (static_cast<double>(y) - cam.cy) * z / cam.fy);
      y_hi = std::max(y_hi, (static_cast<double>(y) + 1.0 - cam.cy) * z / cam.fy);
    }
  if (y_hi < y_lo) fail("masked_metric_height: empty mask");
  return y_hi - y_lo;
}

// Re-anchors a noisy object pose/scale estimate to the body:
//   rho     = median object depth / median body depth
//   delta   = rho * body_depth_anchor / t_sam.z          (depth re-anchoring)
//   sigma_m = template_height * (L_obj / L_body) / canonical_obj_height,
//             with L = metric bbox heights measured from the depth map
//   sigma   = (delta*sigma_sam)^0.8 * sigma_m^0.2        (blend)
// Rotation is kept unchanged.
inline InitAlignment init_object_alignment(const geom::M3& R_sam, const geom::V3& t_sam,
                                           double sigma_sam, const geom::Image& depth,
                                           const geom::Image& body_mask, const geom::Image& obj_mask,
                                           double body_depth_anchor, double template_height,
                                           double bbox_h_body, double bbox_h_obj,
                                           double canonical_obj_height) {
  if (std::fabs(t_sam.z) < 1e-12) fail("init_object_alignment: t_sam.z is zero");
  if (!(sigma_sam > 0)) fail("init_object_alignment: sigma_sam must be positive");
  if (!(bbox_h_body > 0) || !(bbox_h_obj > 0))
    fail("init_object_alignment: bbox heights must be positive");
  if (!(canonical_obj_height > 0)) fail("init_object_alignment: canonical object height must be positive");

  double zb = detail::masked_median(depth, body_mask, "body");
  double zo = detail::masked_median(depth, obj_mask, "object");
  double rho = zo / zb;
  double delta = rho * body_depth_anchor / t_sam.z;
  if (!(delta > 0)) fail("init_object_alignment: negative depth re-anchoring factor");

  double sigma_moge = template_height * (bbox_h_obj / bbox_h_body) / canonical_obj_height;

  InitAlignment out;
  out.R = R_sam;
  out.t = t_sam * delta;
  out.sigma = std::pow(delta * sigma_sam, 0.8) * std::pow(sigma_moge, 0.2);
  if (!std::isfinite(out.sigma) || out.sigma <= 0)
    fail("init_object_alignment: degenerate blended scale");
  return out;
}

}  // namespace hoi::eval
