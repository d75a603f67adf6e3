#pragma once

// Simulated noisy initial estimates: the ground-truth state perturbed by
// seeded noise, standing in for off-the-shelf body/object/depth estimators.

#include "hoi/synth/scene.hpp"

namespace hoi::synth {

struct NoiseConfig {
  double object_rot_deg = 10.0;   // rotation angle sigma, degrees
  double object_trans_m = 0.10;   // per-axis translation sigma, meters
  double body_pose_rad = 0.10;    // per-joint-axis sigma, radians
  double scale_lo = 0.80;         // multiplicative scale noise U(lo, hi)
  double scale_hi = 1.25;

  static NoiseConfig zero() { return {0.0, 0.0, 0.0, 1.0, 1.0}; }
};

// Noisy initialization: body parameters plus the object pose/scale, all in
// the same frames as the scene ground truth (world).
struct InitState {
  body::BodyParams body;
  ObjectPose object_world;
  double object_scale = 1.0;
};

inline InitState perturb_init(const SceneSpec& s, const NoiseConfig& cfg) {
  Rng rng(substream_seed(s.seed, 0x9E27B0));
  InitState init;
  init.body = s.body;
  for (auto& aa : init.body.theta) {
    aa += geom::V3{rng.normal() * cfg.body_pose_rad, rng.normal() * cfg.body_pose_rad,
                   rng.normal() * cfg.body_pose_rad};
    double n = geom::norm(aa);
    if (n >= M_PI) aa = aa * (3.0 / n);
  }

  // object rotation: random axis, normal angle
  geom::V3 axis{rng.normal(), rng.normal(), rng.normal()};
  double an = geom::norm(axis);
  double angle = rng.normal() * cfg.object_rot_deg * M_PI / 180.0;
  geom::M3 dR = an > 1e-12 ? geom::rodrigues(axis * (angle / an)) : geom::M3::identity();
  init.object_world.set_rotation(dR * s.object_world.rotation());
  init.object_world.trans =
      s.object_world.trans + geom::V3{rng.normal() * cfg.object_trans_m,
                                      rng.normal() * cfg.object_trans_m,
                                      rng.normal() * cfg.object_trans_m};
  init.object_scale = s.object_scale * rng.uniform(cfg.scale_lo, cfg.scale_hi);
  return init;
}

}  // namespace hoi::synth
