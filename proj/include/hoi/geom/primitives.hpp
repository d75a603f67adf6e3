#pragma once

// Closed primitive meshes (origin-centered): box, cylinder, icosphere,
// capsule.  All are watertight, suitable for parity inside/outside tests.

#include <cmath>
#include <map>
#include <vector>

#include "hoi/geom/trimesh.hpp"

namespace hoi::geom {

inline TriMesh make_box(double w, double h, double d) {
  double x = w / 2, y = h / 2, z = d / 2;
  std::vector<V3> v = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
                       {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z}};
  std::vector<std::array<int, 3>> f = {
      {0, 2, 1}, {0, 3, 2},  // -z
      {4, 5, 6}, {4, 6, 7},  // +z
      {0, 1, 5}, {0, 5, 4},  // -y
      {3, 7, 6}, {3, 6, 2},  // +y
      {0, 4, 7}, {0, 7, 3},  // -x
      {1, 2, 6}, {1, 6, 5},  // +x
  };
  return make_mesh(std::move(v), std::move(f));
}

// axis along +y, caps included
inline TriMesh make_cylinder(double radius, double height, int segments = 16) {
  if (segments < 3) fail("make_cylinder: need at least 3 segments");
  std::vector<V3> v;
  double hy = height / 2;
  for (int i = 0; i < segments; ++i) {
    double a = 2.0 * M_PI * i / segments;
    v.push_back({radius * std::cos(a), -hy, radius * std::sin(a)});
  }
  for (int i = 0; i < segments; ++i) {
    double a = 2.0 * M_PI * i / segments;
    v.push_back({radius * std::cos(a), hy, radius * std::sin(a)});
  }
  int bc = static_cast<int>(v.size());
  v.push_back({0, -hy, 0});
  int tc = static_cast<int>(v.size());
  v.push_back({0, hy, 0});
  std::vector<std::array<int, 3>> f;
  for (int i = 0; i < segments; ++i) {
    int j = (i + 1) % segments;
    f.push_back({i, j, segments + i});
    f.push_back({j, segments + j, segments + i});
    f.push_back({bc, j, i});                        // bottom cap (faces -y)
    f.push_back({tc, segments + i, segments + j});  // top cap (faces +y)
  }
  return make_mesh(std::move(v), std::move(f));
}

inline TriMesh make_icosphere(double radius, int subdivisions = 2) {
  double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<V3> v = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                       {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                       {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
  for (V3& p : v) p = normalized(p);
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      V3 m = normalized((v[static_cast<size_t>(a)] + v[static_cast<size_t>(b)]) / 2.0);
      v.push_back(m);
      int idx = static_cast<int>(v.size()) - 1;
      midpoint[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> nf;
    nf.reserve(f.size() * 4);
    for (const auto& tr : f) {
      int a = mid(tr[0], tr[1]), b = mid(tr[1], tr[2]), c = mid(tr[2], tr[0]);
      nf.push_back({tr[0], a, c});
      nf.push_back({tr[1], b, a});
      nf.push_back({tr[2], c, b});
      nf.push_back({a, b, c});
    }
    f = std::move(nf);
  }
  for (V3& p : v) p = p * radius;
  return make_mesh(std::move(v), std::move(f));
}

// axis along +y; total height = cyl_height + 2*radius
inline TriMesh make_capsule(double radius, double cyl_height, int segments = 8, int rings = 3) {
  if (segments < 3 || rings < 1) fail("make_capsule: bad tessellation");
  std::vector<V3> v;
  std::vector<std::array<int, 3>> f;
  double hy = cyl_height / 2;

  // bottom pole
  v.push_back({0, -hy - radius, 0});
  // bottom hemisphere rings (from pole upward), then top hemisphere rings,
  // then top pole; ring r at polar angle
  for (int r = 1; r <= rings; ++r) {
    double polar = M_PI / 2 * (1.0 - static_cast<double>(r) / rings);  // pi/2 .. 0 from equator? reversed below
    double y = -hy - radius * std::sin(polar);
    double rr = radius * std::cos(polar);
    for (int i = 0; i < segments; ++i) {
      double a = 2.0 * M_PI * i / segments;
      v.push_back({rr * std::cos(a), y, rr * std::sin(a)});
    }
  }
  int top_start = static_cast<int>(v.size());
  for (int r = rings; r >= 1; --r) {
    double polar = M_PI / 2 * (1.0 - static_cast<double>(r) / rings);
    double y = hy + radius * std::sin(polar);
    double rr = radius * std::cos(polar);
    for (int i = 0; i < segments; ++i) {
      double a = 2.0 * M_PI * i / segments;
      v.push_back({rr * std::cos(a), y, rr * std::sin(a)});
    }
  }
  v.push_back({0, hy + radius, 0});
  int top_pole = static_cast<int>(v.size()) - 1;

  auto ring_vertex = [&](int ring, int i) { return 1 + ring * segments + (i % segments); };
  int n_rings = 2 * rings;  // bottom hemisphere rings + top hemisphere rings

  // bottom fan
  for (int i = 0; i < segments; ++i) f.push_back({0, ring_vertex(0, i + 1), ring_vertex(0, i)});
  // ring strips (hemispheres and the cylinder wall between ring rings-1 and rings)
  for (int r = 0; r + 1 < n_rings; ++r)
    for (int i = 0; i < segments; ++i) {
      int a = ring_vertex(r, i), b = ring_vertex(r, i + 1);
      int c = ring_vertex(r + 1, i), d = ring_vertex(r + 1, i + 1);
      f.push_back({a, b, c});
      f.push_back({b, d, c});
    }
  // top fan
  (void)top_start;
  for (int i = 0; i < segments; ++i)
    f.push_back({top_pole, ring_vertex(n_rings - 1, i), ring_vertex(n_rings - 1, i + 1)});

  return make_mesh(std::move(v), std::move(f));
}

}  // namespace hoi::geom
