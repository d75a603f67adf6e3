#pragma once

// Triangle meshes: validated construction, OBJ/PLY (ascii) round trips,
// area-weighted surface sampling with reusable barycentric records.

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hoi/common.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::geom {

struct TriMesh {
  std::vector<V3> vertices;
  std::vector<std::array<int, 3>> faces;

  int64_t num_vertices() const { return static_cast<int64_t>(vertices.size()); }
  int64_t num_faces() const { return static_cast<int64_t>(faces.size()); }
};

inline double face_area(const TriMesh& m, int64_t f) {
  const auto& t = m.faces[static_cast<size_t>(f)];
  return 0.5 * norm(cross(m.vertices[t[1]] - m.vertices[t[0]], m.vertices[t[2]] - m.vertices[t[0]]));
}

// Validates vertices/indices and drops degenerate faces (area below the
// threshold).  Raises on out-of-range indices or non-finite coordinates.
inline TriMesh make_mesh(std::vector<V3> vertices, std::vector<std::array<int, 3>> faces,
                         double degenerate_area = 1e-12) {
  int n = static_cast<int>(vertices.size());
  for (size_t i = 0; i < vertices.size(); ++i)
    if (!finite(vertices[i])) fail(str_cat("make_mesh: vertex ", i, " is not finite"));
  TriMesh m;
  m.vertices = std::move(vertices);
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= n)
        fail(str_cat("make_mesh: face ", f, " references vertex ", t[k], " of ", n));
    double area =
        0.5 * norm(cross(m.vertices[t[1]] - m.vertices[t[0]], m.vertices[t[2]] - m.vertices[t[0]]));
    if (area > degenerate_area) m.faces.push_back(t);
  }
  return m;
}

inline double total_area(const TriMesh& m) {
  double a = 0;
  for (int64_t f = 0; f < m.num_faces(); ++f) a += face_area(m, f);
  return a;
}

inline std::pair<V3, V3> bounding_box(const TriMesh& m) {
  if (m.vertices.empty()) fail("bounding_box: empty mesh");
  V3 lo = m.vertices[0], hi = m.vertices[0];
  for (const V3& v : m.vertices) {
    lo = vmin(lo, v);
    hi = vmax(hi, v);
  }
  return {lo, hi};
}

inline TriMesh transformed(const TriMesh& m, const M3& R, const V3& t, double scale = 1.0) {
  TriMesh out = m;
  for (V3& v : out.vertices) v = R * (v * scale) + t;
  return out;
}

inline void append_mesh(TriMesh& dst, const TriMesh& src) {
  int off = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  for (const auto& f : src.faces)
    dst.faces.push_back({f[0] + off, f[1] + off, f[2] + off});
}

// Closed-manifold check via directed-edge pairing: every directed edge must
// appear exactly once and be matched by its reverse.  Holds for disjoint
// unions of closed components.
inline bool is_watertight(const TriMesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : m.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[static_cast<size_t>(e)], b = f[static_cast<size_t>((e + 1) % 3)];
      if (++count[{a, b}] > 1) return false;
    }
  for (const auto& [edge, c] : count) {
    auto rev = count.find({edge.second, edge.first});
    if (rev == count.end() || rev->second != 1) return false;
  }
  return !m.faces.empty();
}

// --------------------------------------------------------------------------
// surface sampling
// --------------------------------------------------------------------------

// Barycentric sample record; positions can be re-materialized against any
// deformed copy of the same topology.
struct SurfaceSample {
  int64_t face = 0;
  double u = 0, v = 0, w = 0;  // weights for the face's three vertices
};

inline V3 sample_position(const TriMesh& m, const SurfaceSample& s) {
  const auto& f = m.faces[static_cast<size_t>(s.face)];
  return m.vertices[f[0]] * s.u + m.vertices[f[1]] * s.v + m.vertices[f[2]] * s.w;
}

// Area-weighted surface samples, deterministic in the rng state.
inline std::vector<SurfaceSample> sample_surface(const TriMesh& m, int64_t count, Rng& rng) {
  if (m.num_faces() == 0) fail("sample_surface: mesh has no faces");
  std::vector<double> cum(static_cast<size_t>(m.num_faces()));
  double acc = 0;
  for (int64_t f = 0; f < m.num_faces(); ++f) {
    acc += face_area(m, f);
    cum[static_cast<size_t>(f)] = acc;
  }
  std::vector<SurfaceSample> out(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    double r = rng.uniform() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), r);
    int64_t face = std::min<int64_t>(static_cast<int64_t>(it - cum.begin()), m.num_faces() - 1);
    double r1 = rng.uniform(), r2 = rng.uniform();
    double s1 = std::sqrt(r1);
    out[static_cast<size_t>(i)] = {face, 1.0 - s1, s1 * (1.0 - r2), s1 * r2};
  }
  return out;
}

inline std::vector<V3> sample_positions(const TriMesh& m, const std::vector<SurfaceSample>& samples) {
  std::vector<V3> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back(sample_position(m, s));
  return pts;
}

// --------------------------------------------------------------------------
// OBJ input / output (vertices and triangular faces; polygons are fanned)
// --------------------------------------------------------------------------

inline void save_obj(const std::string& path, const TriMesh& m) {
  std::ofstream os(path);
  if (!os) fail(str_cat("save_obj: cannot open '", path, "'"));
  os.precision(17);
  for (const V3& v : m.vertices) os << "v " << v.x << " " << v.y << " " << v.z << "\n";
  for (const auto& f : m.faces) os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  if (!os) fail(str_cat("save_obj: write to '", path, "' failed"));
}

inline TriMesh load_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(str_cat("load_obj: cannot open '", path, "'"));
  std::vector<V3> verts;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      V3 v;
      if (!(ls >> v.x >> v.y >> v.z))
        fail(str_cat("load_obj: malformed vertex at ", path, ":", lineno));
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // accept i, i/j, i/j/k, i//k
        size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int i = 0;
        try {
          i = std::stoi(head);
        } catch (...) {
          fail(str_cat("load_obj: malformed face index '", tok, "' at ", path, ":", lineno));
        }
        if (i < 0) i = static_cast<int>(verts.size()) + i + 1;  // negative = relative
        idx.push_back(i - 1);
      }
      if (idx.size() < 3) fail(str_cat("load_obj: face with <3 vertices at ", path, ":", lineno));
      for (size_t k = 2; k < idx.size(); ++k)
        faces.push_back({idx[0], idx[k - 1], idx[k]});
    }
    // all other tags (vn, vt, comments, groups) are ignored
  }
  return make_mesh(std::move(verts), std::move(faces));
}

// --------------------------------------------------------------------------
// PLY input / output (ascii 1.0)
// --------------------------------------------------------------------------

inline void save_ply(const std::string& path, const TriMesh& m) {
  std::ofstream os(path);
  if (!os) fail(str_cat("save_ply: cannot open '", path, "'"));
  os.precision(17);
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << m.num_vertices() << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  os << "element face " << m.num_faces() << "\n";
  os << "property list uchar int vertex_indices\nend_header\n";
  for (const V3& v : m.vertices) os << v.x << " " << v.y << " " << v.z << "\n";
  for (const auto& f : m.faces) os << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
  if (!os) fail(str_cat("save_ply: write to '", path, "' failed"));
}

inline TriMesh load_ply(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(str_cat("load_ply: cannot open '", path, "'"));
  std::string line;
  if (!std::getline(is, line) || line.substr(0, 3) != "ply")
    fail(str_cat("load_ply: '", path, "' is not a PLY file"));
  int64_t n_verts = -1, n_faces = -1;
  bool ascii = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = (fmt == "ascii");
    } else if (tag == "element") {
      std::string what;
      int64_t count;
      ls >> what >> count;
      if (what == "vertex") n_verts = count;
      else if (what == "face") n_faces = count;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!ascii) fail(str_cat("load_ply: '", path, "' is not ascii format (only ascii supported)"));
  if (n_verts < 0 || n_faces < 0) fail(str_cat("load_ply: '", path, "' missing element counts"));
  std::vector<V3> verts(static_cast<size_t>(n_verts));
  for (int64_t i = 0; i < n_verts; ++i) {
    if (!std::getline(is, line)) fail(str_cat("load_ply: truncated vertices in '", path, "'"));
    std::istringstream ls(line);
    if (!(ls >> verts[static_cast<size_t>(i)].x >> verts[static_cast<size_t>(i)].y >>
          verts[static_cast<size_t>(i)].z))
      fail(str_cat("load_ply: malformed vertex ", i, " in '", path, "'"));
  }
  std::vector<std::array<int, 3>> faces;
  for (int64_t i = 0; i < n_faces; ++i) {
    if (!std::getline(is, line)) fail(str_cat("load_ply: truncated faces in '", path, "'"));
    std::istringstream ls(line);
    int cnt;
    if (!(ls >> cnt) || cnt < 3) fail(str_cat("load_ply: malformed face ", i, " in '", path, "'"));
    std::vector<int> idx(static_cast<size_t>(cnt));
    for (int k = 0; k < cnt; ++k)
      if (!(ls >> idx[static_cast<size_t>(k)]))
        fail(str_cat("load_ply: malformed face ", i, " in '", path, "'"));
    for (int k = 2; k < cnt; ++k) faces.push_back({idx[0], idx[static_cast<size_t>(k - 1)], idx[static_cast<size_t>(k)]});
  }
  return make_mesh(std::move(verts), std::move(faces));
}

inline TriMesh load_mesh(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == "obj") return load_obj(path);
  if (ext == "ply") return load_ply(path);
  fail(str_cat("load_mesh: unsupported extension '", ext, "' for '", path, "'"));
}

inline void save_mesh(const std::string& path, const TriMesh& m) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == "obj") return save_obj(path, m);
  if (ext == "ply") return save_ply(path, m);
  fail(str_cat("save_mesh: unsupported extension '", ext, "' for '", path, "'"));
}

}  // namespace hoi::geom
