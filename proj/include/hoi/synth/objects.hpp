#pragma once

// The five interactable object classes.  Each class has a fixed canonical
// mesh (unit scale, centered near the origin, up +y) built once; per-scene
// instances are rigid transforms + a uniform scale of the canonical mesh.
// All canonical meshes are closed (disjoint unions of closed parts), so
// ray-parity inside tests are valid.

#include <array>
#include <string>

#include "hoi/geom/primitives.hpp"
#include "hoi/geom/trimesh.hpp"

namespace hoi::synth {

enum class ObjectClass : int { kBox = 0, kCylinder = 1, kSphere = 2, kCapsuleChair = 3, kBar = 4 };
inline constexpr int kNumObjectClasses = 5;

inline const char* object_class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kBox: return "box";
    case ObjectClass::kCylinder: return "cylinder";
    case ObjectClass::kSphere: return "sphere";
    case ObjectClass::kCapsuleChair: return "capsule-chair";
    case ObjectClass::kBar: return "bar";
  }
  fail("object_class_name: bad class");
}

inline ObjectClass parse_object_class(const std::string& s) {
  for (int i = 0; i < kNumObjectClasses; ++i)
    if (s == object_class_name(static_cast<ObjectClass>(i))) return static_cast<ObjectClass>(i);
  fail(str_cat("unknown object class '", s, "' (expected box|cylinder|sphere|capsule-chair|bar)"));
}

namespace detail {

inline geom::TriMesh build_capsule_chair() {
  using geom::V3;
  geom::TriMesh chair;
  // seat slab
  auto seat = geom::make_box(0.42, 0.06, 0.42);
  seat = geom::transformed(seat, geom::M3::identity(), {0, 0.25, 0});
  append_mesh(chair, seat);
  // backrest slab, on the -z side, kept clear of the seat so parts stay
  // disjoint closed components
  auto back = geom::make_box(0.42, 0.40, 0.05);
  back = geom::transformed(back, geom::M3::identity(), {0, 0.485, -0.185});
  append_mesh(chair, back);
  // four capsule legs below the seat (again with a hair of clearance)
  for (int sx = -1; sx <= 1; sx += 2)
    for (int sz = -1; sz <= 1; sz += 2) {
      auto leg = geom::make_capsule(0.025, 0.14, 6, 2);
      leg = geom::transformed(leg, geom::M3::identity(),
                              {0.17 * sx, 0.11, 0.17 * sz});
      append_mesh(chair, leg);
    }
  return chair;
}

}  // namespace detail

// Canonical mesh per class, built once (deterministic).
inline const geom::TriMesh& canonical_object(ObjectClass c) {
  static const geom::TriMesh meshes[kNumObjectClasses] = {
      geom::make_box(0.40, 0.40, 0.40),
      geom::make_cylinder(0.16, 0.50, 14),
      geom::make_icosphere(0.22, 2),
      detail::build_capsule_chair(),
      [] {
        // a carrying bar along +x
        auto bar = geom::make_capsule(0.035, 0.85, 8, 2);
        return geom::transformed(bar, geom::rot_z(-M_PI / 2), {0, 0, 0});
      }(),
  };
  int i = static_cast<int>(c);
  if (i < 0 || i >= kNumObjectClasses) fail("canonical_object: bad class");
  return meshes[i];
}

// Height (y extent) of the canonical mesh, used by depth-anchored init.
inline double canonical_object_height(ObjectClass c) {
  auto [lo, hi] = geom::bounding_box(canonical_object(c));
  return hi.y - lo.y;
}

// Fixed per-class surface samples (barycentric) used for object-side fields;
// reproducible and shared between ground truth and predictions.
inline const std::vector<geom::SurfaceSample>& object_canonical_samples(ObjectClass c) {
  static const auto cache = [] {
    std::array<std::vector<geom::SurfaceSample>, kNumObjectClasses> out;
    for (int i = 0; i < kNumObjectClasses; ++i) {
      Rng rng(substream_seed(0x0B7EC75A, static_cast<uint64_t>(i)));
      out[static_cast<size_t>(i)] =
          geom::sample_surface(canonical_object(static_cast<ObjectClass>(i)), 1024, rng);
    }
    return out;
  }();
  int i = static_cast<int>(c);
  if (i < 0 || i >= kNumObjectClasses) fail("object_canonical_samples: bad class");
  return cache[static_cast<size_t>(i)];
}

}  // namespace hoi::synth
