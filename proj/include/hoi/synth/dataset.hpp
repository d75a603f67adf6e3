#pragma once

// Dataset records and persistence: per-record binary files plus a versioned
// text manifest.  Records are bit-identically recomputable from their seed,
// so the dataset is a reproducible artifact, not a cache.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hoi/field/interfield.hpp"
#include "hoi/synth/perturb.hpp"
#include "hoi/synth/render.hpp"
#include "hoi/synth/scene.hpp"

namespace hoi::synth {

struct DatasetRecord {
  SceneSpec spec;
  InitState init;
  Observation obs;
  field::InterField field_body;  // body -> object, at the 1024 canonical body samples (root frame)
  field::InterField field_obj;   // object -> body, at the 1024 canonical object samples (root frame)
};

inline constexpr double kFieldOmega = 5.0;

// Ground-truth fields in the human-root-relative frame.
inline void compute_gt_fields(const SceneSpec& s, field::InterField& body_field,
                              field::InterField& obj_field) {
  const auto& bm = body::BodyModel::get();
  geom::TriMesh body_root = s.body_mesh_root();
  geom::TriMesh obj_root = s.object_mesh_root();
  geom::Bvh body_bvh(body_root), obj_bvh(obj_root);
  auto body_pts = geom::sample_positions(body_root, bm.canonical_samples(1024));
  auto obj_pts = geom::sample_positions(obj_root, object_canonical_samples(s.object_class));
  body_field = field::compute_interfield(body_pts, obj_bvh, kFieldOmega);
  obj_field = field::compute_interfield(obj_pts, body_bvh, kFieldOmega);
}

inline DatasetRecord make_record(uint64_t seed, ObjectClass oc, InteractionClass ic,
                                 const NoiseConfig& noise = {}) {
  DatasetRecord r;
  r.spec = gen_scene(seed, oc, ic);
  r.obs = render_observation(r.spec);
  r.init = perturb_init(r.spec, noise);
  compute_gt_fields(r.spec, r.field_body, r.field_obj);
  return r;
}

// ---------------------------------------------------------------------------
// binary serialization
// ---------------------------------------------------------------------------

namespace detail {

inline void w_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), 8); }
inline void w_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
inline void w_i32(std::ostream& o, int32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
inline double r_f64(std::istream& i) {
  double v;
  i.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline uint64_t r_u64(std::istream& i) {
  uint64_t v;
  i.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline int32_t r_i32(std::istream& i) {
  int32_t v;
  i.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline void w_v3(std::ostream& o, const geom::V3& v) {
  w_f64(o, v.x);
  w_f64(o, v.y);
  w_f64(o, v.z);
}
inline geom::V3 r_v3(std::istream& i) {
  geom::V3 v;
  v.x = r_f64(i);
  v.y = r_f64(i);
  v.z = r_f64(i);
  return v;
}

inline void w_body(std::ostream& o, const body::BodyParams& p) {
  for (const auto& aa : p.theta) w_v3(o, aa);
  for (double b : p.beta) w_f64(o, b);
  for (double r : p.rot6d) w_f64(o, r);
  w_v3(o, p.trans);
}
inline body::BodyParams r_body(std::istream& i) {
  body::BodyParams p;
  for (auto& aa : p.theta) aa = r_v3(i);
  for (auto& b : p.beta) b = r_f64(i);
  for (auto& r : p.rot6d) r = r_f64(i);
  p.trans = r_v3(i);
  return p;
}

inline void w_objpose(std::ostream& o, const ObjectPose& p) {
  for (double r : p.rot6d) w_f64(o, r);
  w_v3(o, p.trans);
}
inline ObjectPose r_objpose(std::istream& i) {
  ObjectPose p;
  for (auto& r : p.rot6d) r = r_f64(i);
  p.trans = r_v3(i);
  return p;
}

}  // namespace detail

inline void save_record(std::ostream& out, const DatasetRecord& r) {
  using namespace detail;
  out.write("HOIREC01", 8);
  w_u64(out, r.spec.seed);
  w_i32(out, static_cast<int32_t>(r.spec.object_class));
  w_i32(out, static_cast<int32_t>(r.spec.interaction_class));
  w_f64(out, r.spec.camera.fx);
  w_f64(out, r.spec.camera.fy);
  w_f64(out, r.spec.camera.cx);
  w_f64(out, r.spec.camera.cy);
  w_i32(out, r.spec.camera.width);
  w_i32(out, r.spec.camera.height);
  w_body(out, r.spec.body);
  w_objpose(out, r.spec.object_world);
  w_f64(out, r.spec.object_scale);
  w_body(out, r.init.body);
  w_objpose(out, r.init.object_world);
  w_f64(out, r.init.object_scale);
  for (const auto& kp : r.obs.keypoints_px) {
    w_f64(out, kp[0]);
    w_f64(out, kp[1]);
  }
  for (uint8_t v : r.obs.visible) out.put(static_cast<char>(v));
  w_i32(out, r.obs.mask_grid.width);
  w_i32(out, r.obs.mask_grid.height);
  for (double v : r.obs.mask_grid.pix) w_f64(out, v);
  w_f64(out, r.obs.depth_median_body);
  w_f64(out, r.obs.depth_median_obj);
  w_f64(out, r.obs.bbox_h_body_m);
  w_f64(out, r.obs.bbox_h_obj_m);
  field::save_interfield(out, r.field_body);
  field::save_interfield(out, r.field_obj);
}

inline DatasetRecord load_record(std::istream& in) {
  using namespace detail;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "HOIREC01") fail("load_record: bad magic header");
  DatasetRecord r;
  r.spec.seed = r_u64(in);
  r.spec.object_class = static_cast<ObjectClass>(r_i32(in));
  r.spec.interaction_class = static_cast<InteractionClass>(r_i32(in));
  r.spec.camera.fx = r_f64(in);
  r.spec.camera.fy = r_f64(in);
  r.spec.camera.cx = r_f64(in);
  r.spec.camera.cy = r_f64(in);
  r.spec.camera.width = r_i32(in);
  r.spec.camera.height = r_i32(in);
  r.spec.body = r_body(in);
  r.spec.object_world = r_objpose(in);
  r.spec.object_scale = r_f64(in);
  r.init.body = r_body(in);
  r.init.object_world = r_objpose(in);
  r.init.object_scale = r_f64(in);
  for (auto& kp : r.obs.keypoints_px) {
    kp[0] = r_f64(in);
    kp[1] = r_f64(in);
  }
  for (auto& v : r.obs.visible) v = static_cast<uint8_t>(in.get());
  int mw = r_i32(in), mh = r_i32(in);
  r.obs.mask_grid = geom::Image(mw, mh, 0.0);
  for (auto& v : r.obs.mask_grid.pix) v = r_f64(in);
  r.obs.depth_median_body = r_f64(in);
  r.obs.depth_median_obj = r_f64(in);
  r.obs.bbox_h_body_m = r_f64(in);
  r.obs.bbox_h_obj_m = r_f64(in);
  r.field_body = field::load_interfield(in);
  r.field_obj = field::load_interfield(in);
  if (!in) fail("load_record: truncated stream");
  return r;
}

// ---------------------------------------------------------------------------
// manifest + dataset building
// ---------------------------------------------------------------------------

struct ManifestEntry {
  uint64_t index = 0, seed = 0;
  ObjectClass object_class{};
  InteractionClass interaction_class{};
  std::string split, file;
  uint64_t hash = 0;
};

struct Manifest {
  int version = 1;
  uint64_t dataset_seed = 0;
  std::vector<ManifestEntry> entries;

  int64_t count_split(const std::string& s) const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.split == s ? 1 : 0;
    return n;
  }
};

inline uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) fail(str_cat("write_manifest: cannot open ", path.string()));
  out << "hoi-dataset-manifest v" << m.version << "\n";
  out << "dataset_seed " << m.dataset_seed << "\n";
  out << "records " << m.entries.size() << "\n";
  out << "splits train " << m.count_split("train") << " val " << m.count_split("val") << " test "
      << m.count_split("test") << "\n";
  for (const auto& e : m.entries) {
    out << "record " << e.index << " seed=" << e.seed
        << " object=" << object_class_name(e.object_class)
        << " interaction=" << interaction_class_name(e.interaction_class) << " split=" << e.split
        << " file=" << e.file << " hash=" << std::hex << e.hash << std::dec << "\n";
  }
  if (!out) fail(str_cat("write_manifest: write failed for ", path.string()));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(str_cat("load_manifest: cannot open ", path.string()));
  Manifest m;
  std::string header;
  std::getline(in, header);
  if (header != "hoi-dataset-manifest v1")
    fail(str_cat("load_manifest: unrecognized header '", header, "' in ", path.string()));
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "dataset_seed") {
      ls >> m.dataset_seed;
    } else if (tag == "record") {
      ManifestEntry e;
      ls >> e.index;
      std::string kv;
      while (ls >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) fail(str_cat("load_manifest: bad token '", kv, "'"));
        std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "seed") e.seed = std::stoull(v);
        else if (k == "object") e.object_class = parse_object_class(v);
        else if (k == "interaction") e.interaction_class = parse_interaction_class(v);
        else if (k == "split") e.split = v;
        else if (k == "file") e.file = v;
        else if (k == "hash") e.hash = std::stoull(v, nullptr, 16);
        else fail(str_cat("load_manifest: unknown key '", k, "'"));
      }
      m.entries.push_back(e);
    }
  }
  return m;
}

struct SplitRatios {
  double train = 0.8, val = 0.1, test = 0.1;
};

// Build n records under out_dir.  Classes cycle through all 25 combinations
// for exact balance; splits are assigned by ordering the seed hashes, giving
// exact split sizes; everything is deterministic from base_seed.
inline Manifest build_dataset(const std::filesystem::path& out_dir, int64_t n,
                              const SplitRatios& ratios, uint64_t base_seed,
                              const NoiseConfig& noise = {}) {
  if (n <= 0) fail("build_dataset: need a positive record count");
  if (std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    fail("build_dataset: split ratios must sum to 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(str_cat("build_dataset: cannot create ", out_dir.string(), ": ", ec.message()));

  // split assignment by seed-hash order
  std::vector<uint64_t> seeds(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) seeds[static_cast<size_t>(i)] = substream_seed(base_seed, static_cast<uint64_t>(i));
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    uint64_t ha = splitmix64(seeds[static_cast<size_t>(a)]), hb = splitmix64(seeds[static_cast<size_t>(b)]);
    return ha < hb || (ha == hb && a < b);
  });
  int64_t n_train = static_cast<int64_t>(std::llround(ratios.train * static_cast<double>(n)));
  int64_t n_val = static_cast<int64_t>(std::llround(ratios.val * static_cast<double>(n)));
  std::vector<std::string> split(static_cast<size_t>(n));
  for (int64_t rank = 0; rank < n; ++rank)
    split[static_cast<size_t>(order[static_cast<size_t>(rank)])] =
        rank < n_train ? "train" : (rank < n_train + n_val ? "val" : "test");

  Manifest m;
  m.dataset_seed = base_seed;
  m.entries.resize(static_cast<size_t>(n));
  std::vector<std::string> blobs(static_cast<size_t>(n));
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      auto oc = static_cast<ObjectClass>(i % kNumObjectClasses);
      auto ic = static_cast<InteractionClass>((i / kNumObjectClasses) % kNumInteractionClasses);
      DatasetRecord rec = make_record(seeds[static_cast<size_t>(i)], oc, ic, noise);
      std::ostringstream buf;
      save_record(buf, rec);
      blobs[static_cast<size_t>(i)] = buf.str();
      char name[32];
      std::snprintf(name, sizeof(name), "record_%05lld.bin", static_cast<long long>(i));
      ManifestEntry e;
      e.index = static_cast<uint64_t>(i);
      e.seed = seeds[static_cast<size_t>(i)];
      e.object_class = oc;
      e.interaction_class = ic;
      e.split = split[static_cast<size_t>(i)];
      e.file = name;
      e.hash = fnv1a64(blobs[static_cast<size_t>(i)]);
      m.entries[static_cast<size_t>(i)] = e;
    }
  });
  for (const auto& e : m.entries) {
    auto p = out_dir / e.file;
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(str_cat("build_dataset: cannot open ", p.string()));
    const std::string& blob = blobs[e.index];
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(str_cat("build_dataset: write failed for ", p.string()));
  }
  write_manifest(out_dir / "manifest.txt", m);
  return m;
}

inline DatasetRecord load_record_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(str_cat("load_record_file: cannot open ", p.string()));
  return load_record(in);
}

// Load all records of one split, in manifest (index) order.
inline std::vector<DatasetRecord> load_split(const std::filesystem::path& dir, const Manifest& m,
                                             const std::string& split) {
  std::vector<DatasetRecord> out;
  for (const auto& e : m.entries)
    if (e.split == split) out.push_back(load_record_file(dir / e.file));
  return out;
}

}  // namespace hoi::synth
