#pragma once

// Procedural scene generation: per-interaction pose priors, object placement
// with snap-to-contact, and rejection sampling against the scene invariant
// (guaranteed contact <= 2cm, collision score <= 0.02).  Deterministic per
// (seed, object class, interaction class).

#include <optional>
#include <string>

#include "hoi/body/model.hpp"
#include "hoi/eval/metrics.hpp"
#include "hoi/field/interfield.hpp"
#include "hoi/geom/camera.hpp"
#include "hoi/synth/objects.hpp"

namespace hoi::synth {

enum class InteractionClass : int { kHold = 0, kSit = 1, kCarry = 2, kLean = 3, kLift = 4 };
inline constexpr int kNumInteractionClasses = 5;

inline const char* interaction_class_name(InteractionClass c) {
  switch (c) {
    case InteractionClass::kHold: return "hold";
    case InteractionClass::kSit: return "sit";
    case InteractionClass::kCarry: return "carry";
    case InteractionClass::kLean: return "lean";
    case InteractionClass::kLift: return "lift";
  }
  fail("interaction_class_name: bad class");
}

inline InteractionClass parse_interaction_class(const std::string& s) {
  for (int i = 0; i < kNumInteractionClasses; ++i)
    if (s == interaction_class_name(static_cast<InteractionClass>(i)))
      return static_cast<InteractionClass>(i);
  fail(str_cat("unknown interaction class '", s, "' (expected hold|sit|carry|lean|lift)"));
}

// Rigid pose of the object instance (rotation as 6D for state compatibility).
struct ObjectPose {
  std::array<double, 6> rot6d = {1, 0, 0, 0, 1, 0};
  geom::V3 trans{0, 0, 0};

  geom::M3 rotation() const { return geom::rot6d_to_matrix(rot6d); }
  void set_rotation(const geom::M3& R) {
    auto r6 = geom::matrix_to_rot6d(R);
    for (int i = 0; i < 6; ++i) rot6d[static_cast<size_t>(i)] = r6[static_cast<size_t>(i)];
  }
};

struct SceneSpec {
  uint64_t seed = 0;
  ObjectClass object_class = ObjectClass::kBox;
  InteractionClass interaction_class = InteractionClass::kHold;
  geom::Camera camera;
  body::BodyParams body;   // world frame (the camera frame)
  ObjectPose object_world;  // world frame
  double object_scale = 1.0;

  geom::TriMesh body_mesh_world() const { return body::BodyModel::get().pose_body(body); }
  geom::TriMesh body_mesh_root() const {
    return body::BodyModel::get().posed_mesh(body.theta, body.beta);
  }
  geom::TriMesh object_mesh_world() const {
    return geom::transformed(canonical_object(object_class), object_world.rotation(),
                             object_world.trans, object_scale);
  }
  // object pose expressed in the human-root-relative frame
  ObjectPose object_root() const {
    geom::M3 Rh = body.rotation();
    geom::M3 RhT = Rh.transposed();
    ObjectPose rel;
    rel.set_rotation(RhT * object_world.rotation());
    rel.trans = RhT * (object_world.trans - body.trans);
    return rel;
  }
  geom::TriMesh object_mesh_root() const {
    ObjectPose rel = object_root();
    return geom::transformed(canonical_object(object_class), rel.rotation(), rel.trans,
                             object_scale);
  }
};

namespace detail {

// axis-angle with magnitude kept inside the canonical range
inline geom::V3 clamp_aa(geom::V3 aa, double max_norm = 2.9) {
  double n = geom::norm(aa);
  return n > max_norm ? aa * (max_norm / n) : aa;
}

struct Prior {
  std::vector<geom::V3> theta = std::vector<geom::V3>(body::kNumPosable, geom::V3{0, 0, 0});
  geom::V3 object_anchor{0, 0, 0.4};  // root-relative initial object center
  double spin_lo = 0, spin_hi = 2 * M_PI;
};

inline void set_joint(Prior& p, int joint, geom::V3 aa) {
  p.theta[static_cast<size_t>(joint - 1)] = aa;
}

// Base pose + object anchor per interaction class.  "Front" is template +z,
// up is +y, left arm along +x.
inline Prior interaction_prior(InteractionClass c, Rng& rng) {
  using namespace hoi::body;
  Prior p;
  auto n = [&](double s) { return rng.normal() * s; };
  switch (c) {
    case InteractionClass::kHold: {
      set_joint(p, kLeftShoulder, {n(0.1), -1.05 + n(0.15), -0.25 + n(0.1)});
      set_joint(p, kRightShoulder, {n(0.1), 1.05 + n(0.15), 0.25 + n(0.1)});
      set_joint(p, kLeftElbow, {n(0.1), -0.55 + n(0.15), n(0.1)});
      set_joint(p, kRightElbow, {n(0.1), 0.55 + n(0.15), n(0.1)});
      p.object_anchor = {n(0.05), 0.30 + n(0.08), 0.55};
      break;
    }
    case InteractionClass::kSit: {
      double hip = -1.45 + n(0.1), knee = 1.40 + n(0.1);
      set_joint(p, kLeftHip, {hip, n(0.08), n(0.08)});
      set_joint(p, kRightHip, {hip + n(0.05), n(0.08), n(0.08)});
      set_joint(p, kLeftKnee, {knee, 0, 0});
      set_joint(p, kRightKnee, {knee + n(0.05), 0, 0});
      set_joint(p, kSpine1, {0.12 + n(0.06), n(0.05), n(0.05)});
      set_joint(p, kLeftShoulder, {n(0.1), n(0.1), -1.15 + n(0.12)});
      set_joint(p, kRightShoulder, {n(0.1), n(0.1), 1.15 + n(0.12)});
      p.object_anchor = {n(0.03), -0.35 + n(0.05), 0.10 + n(0.04)};
      p.spin_lo = -0.3;
      p.spin_hi = 0.3;
      break;
    }
    case InteractionClass::kCarry: {
      set_joint(p, kLeftShoulder, {n(0.1), -0.75 + n(0.12), -0.55 + n(0.1)});
      set_joint(p, kRightShoulder, {n(0.1), 0.75 + n(0.12), 0.55 + n(0.1)});
      set_joint(p, kLeftElbow, {n(0.1), -0.75 + n(0.12), n(0.1)});
      set_joint(p, kRightElbow, {n(0.1), 0.75 + n(0.12), n(0.1)});
      set_joint(p, kLeftHip, {0.25 + n(0.1), n(0.05), n(0.05)});
      set_joint(p, kRightHip, {-0.25 + n(0.1), n(0.05), n(0.05)});
      p.object_anchor = {n(0.05), 0.05 + n(0.06), 0.50};
      break;
    }
    case InteractionClass::kLean: {
      double side = 0.17 + n(0.04);
      set_joint(p, kSpine1, {n(0.04), n(0.04), side});
      set_joint(p, kSpine2, {n(0.04), n(0.04), side});
      set_joint(p, kSpine3, {n(0.04), n(0.04), side * 0.6});
      set_joint(p, kRightShoulder, {n(0.1), 0.25 + n(0.1), 1.1 + n(0.12)});
      set_joint(p, kRightElbow, {n(0.08), 0.25 + n(0.1), n(0.08)});
      set_joint(p, kLeftShoulder, {n(0.1), n(0.1), -1.25 + n(0.1)});
      p.object_anchor = {-0.55 + n(0.05), -0.05 + n(0.08), 0.12 + n(0.05)};
      break;
    }
    case InteractionClass::kLift: {
      double hip = -0.85 + n(0.12), knee = 1.05 + n(0.12);
      set_joint(p, kLeftHip, {hip, n(0.06), n(0.06)});
      set_joint(p, kRightHip, {hip + n(0.05), n(0.06), n(0.06)});
      set_joint(p, kLeftKnee, {knee, 0, 0});
      set_joint(p, kRightKnee, {knee + n(0.05), 0, 0});
      set_joint(p, kSpine1, {0.35 + n(0.08), n(0.05), n(0.05)});
      set_joint(p, kSpine2, {0.25 + n(0.06), n(0.05), n(0.05)});
      set_joint(p, kLeftShoulder, {n(0.1), -0.5 + n(0.12), -0.85 + n(0.12)});
      set_joint(p, kRightShoulder, {n(0.1), 0.5 + n(0.12), 0.85 + n(0.12)});
      p.object_anchor = {n(0.05), -0.35 + n(0.08), 0.50};
      break;
    }
  }
  // mild noise everywhere else
  for (auto& aa : p.theta) {
    aa += geom::V3{n(0.03), n(0.03), n(0.03)};
    aa = clamp_aa(aa);
  }
  return p;
}

// closest pair between the posed body and the transformed object, found from
// both sample directions; returns (distance, body point, object point)
struct ClosestPair {
  double dist = 0;
  geom::V3 on_body, on_object;
};

inline ClosestPair closest_pair(const geom::TriMesh& body_mesh, const geom::Bvh& body_bvh,
                                const std::vector<geom::V3>& body_pts, const geom::TriMesh& obj_mesh,
                                const geom::Bvh& obj_bvh, const std::vector<geom::V3>& obj_pts) {
  (void)body_mesh;
  (void)obj_mesh;
  ClosestPair best;
  best.dist = std::numeric_limits<double>::infinity();
  for (const auto& p : body_pts) {
    auto hit = obj_bvh.closest_point(p);
    double d = std::sqrt(hit.dist2);
    if (d < best.dist) best = {d, p, hit.point};
  }
  for (const auto& q : obj_pts) {
    auto hit = body_bvh.closest_point(q);
    double d = std::sqrt(hit.dist2);
    if (d < best.dist) best = {d, hit.point, q};
  }
  return best;
}

}  // namespace detail

inline constexpr double kMaxContactDistance = 0.02;  // scene invariant
inline constexpr double kMaxCollisionScore = 0.02;

// Deterministic rejection sampler; throws after 1000 failed attempts.
inline SceneSpec gen_scene(uint64_t seed, ObjectClass object_class,
                           InteractionClass interaction_class) {
  const auto& bm = body::BodyModel::get();
  Rng rng(substream_seed(seed, 0xA11CE));
  const auto& body_samples = bm.canonical_samples(1024);
  const auto& obj_samples = object_canonical_samples(object_class);
  const auto& canon = canonical_object(object_class);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    SceneSpec s;
    s.seed = seed;
    s.object_class = object_class;
    s.interaction_class = interaction_class;

    // body shape and pose from the interaction prior
    for (auto& b : s.body.beta) b = std::clamp(rng.normal() * 0.5, -1.5, 1.5);
    auto prior = detail::interaction_prior(interaction_class, rng);
    s.body.theta = prior.theta;

    // body world placement: upright, camera-facing, 2.6-3.4m away
    double yaw = rng.uniform(-0.5, 0.5);
    geom::M3 Rh = geom::rot_y(yaw) * geom::rot_x(M_PI);
    s.body.set_rotation(Rh);
    s.body.trans = {rng.uniform(-0.25, 0.25), rng.uniform(-0.15, 0.15), rng.uniform(2.6, 3.4)};

    // object scale and spin
    s.object_scale = rng.uniform(0.75, 1.3);
    double spin = rng.uniform(prior.spin_lo, prior.spin_hi);
    geom::M3 R_rel = geom::rot_y(spin);

    // root-relative body geometry
    geom::TriMesh body_root = bm.posed_mesh(s.body.theta, s.body.beta);
    geom::Bvh body_bvh(body_root);
    std::vector<geom::V3> body_pts = geom::sample_positions(body_root, body_samples);

    // start beyond the anchor, then snap along the closest-pair direction
    geom::V3 anchor = prior.object_anchor;
    geom::V3 outward = geom::norm(anchor) > 1e-9 ? geom::normalized(anchor) : geom::V3{0, 0, 1};
    geom::V3 t_rel = anchor + outward * 0.30;

    double gap_target = rng.uniform(0.004, 0.015);
    bool ok = false;
    for (int snap = 0; snap < 4; ++snap) {
      geom::TriMesh obj_root = geom::transformed(canon, R_rel, t_rel, s.object_scale);
      geom::Bvh obj_bvh(obj_root);
      std::vector<geom::V3> obj_pts = geom::sample_positions(obj_root, obj_samples);
      auto pair = detail::closest_pair(body_root, body_bvh, body_pts, obj_root, obj_bvh, obj_pts);
      if (pair.dist <= gap_target * 1.5 && pair.dist <= kMaxContactDistance) {
        ok = true;
        break;
      }
      geom::V3 dir = pair.on_body - pair.on_object;
      double dn = geom::norm(dir);
      if (dn < 1e-9) break;
      t_rel += dir * ((pair.dist - gap_target) / dn);
    }
    if (!ok) continue;

    // finalize world pose
    ObjectPose rel;
    rel.set_rotation(R_rel);
    rel.trans = t_rel;
    s.object_world.set_rotation(Rh * R_rel);
    s.object_world.trans = Rh * t_rel + s.body.trans;

    // invariant checks on the emitted scene
    geom::TriMesh obj_root = geom::transformed(canon, R_rel, t_rel, s.object_scale);
    if (eval::collision_score(body_root, obj_root) > kMaxCollisionScore) continue;

    // object must be in front of the camera and project inside the image
    if (s.object_world.trans.z < 0.5) continue;
    auto px = geom::project(s.camera, s.object_world.trans);
    if (!geom::in_image(s.camera, px)) continue;
    auto head_px = geom::project(s.camera, bm.joint_positions(s.body)[body::kHead]);
    if (!geom::in_image(s.camera, head_px)) continue;

    s.body.validate();
    return s;
  }
  fail(str_cat("gen_scene: no valid scene after 1000 attempts for (",
               object_class_name(object_class), ", ", interaction_class_name(interaction_class),
               ") seed ", seed));
}

// Minimum body-object surface distance, measured from both sample sets.
inline double min_surface_distance(const SceneSpec& s) {
  const auto& bm = body::BodyModel::get();
  geom::TriMesh body_root = s.body_mesh_root();
  geom::TriMesh obj_root = s.object_mesh_root();
  geom::Bvh body_bvh(body_root), obj_bvh(obj_root);
  auto body_pts = geom::sample_positions(body_root, bm.canonical_samples(1024));
  auto obj_pts = geom::sample_positions(obj_root, object_canonical_samples(s.object_class));
  auto pair = detail::closest_pair(body_root, body_bvh, body_pts, obj_root, obj_bvh, obj_pts);
  return pair.dist;
}

}  // namespace hoi::synth
