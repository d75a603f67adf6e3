#pragma once

// Articulated toy body: 22-joint tree (root + 21 posable joints, axis-angle
// per joint), a ~600-vertex capsule-composite template, linear-blend
// skinning with distance-painted weights (at most 4 per vertex, rows sum to
// one), and 10 linear shape directions that also displace the rest joints.
// The template stands in a T-pose, up +y, facing +z, root at the origin,
// about 1.70m tall.
//
// The root joint carries no local rotation: global orientation/translation
// are separate state.  All deformation here is root-relative.

#include <array>
#include <vector>

#include "hoi/diff/tensor.hpp"
#include "hoi/geom/primitives.hpp"
#include "hoi/geom/rotation.hpp"
#include "hoi/geom/trimesh.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::body {

inline constexpr int kNumJoints = 22;   // including the root
inline constexpr int kNumPosable = 21;  // joints 1..21
inline constexpr int kNumShape = 10;
inline constexpr uint64_t kCanonicalSampleSeed = 0x0B0D15A1ull;

enum JointId : int {
  kPelvis = 0,
  kLeftHip, kRightHip, kSpine1,
  kLeftKnee, kRightKnee, kSpine2,
  kLeftAnkle, kRightAnkle, kSpine3,
  kLeftFoot, kRightFoot, kNeck,
  kLeftCollar, kRightCollar, kHead,
  kLeftShoulder, kRightShoulder,
  kLeftElbow, kRightElbow,
  kLeftWrist, kRightWrist,
};

struct PosedBody {
  std::vector<geom::V3> vertices;       // root-relative
  std::array<geom::V3, kNumJoints> joints;
};

// Full body parameterization: 21 posable joints (axis-angle), 10 shape
// coefficients, global rotation (6D) and translation.
struct BodyParams {
  std::vector<geom::V3> theta = std::vector<geom::V3>(kNumPosable, geom::V3{0, 0, 0});
  std::vector<double> beta = std::vector<double>(kNumShape, 0.0);
  std::array<double, 6> rot6d = {1, 0, 0, 0, 1, 0};  // identity
  geom::V3 trans{0, 0, 0};

  geom::M3 rotation() const { return geom::rot6d_to_matrix(rot6d); }
  void set_rotation(const geom::M3& R) {
    auto r6 = geom::matrix_to_rot6d(R);
    for (int i = 0; i < 6; ++i) rot6d[static_cast<size_t>(i)] = r6[static_cast<size_t>(i)];
  }
  void validate() const {
    if (theta.size() != kNumPosable) fail("BodyParams: wrong joint count");
    if (beta.size() != kNumShape) fail("BodyParams: wrong shape count");
    for (size_t j = 0; j < theta.size(); ++j)
      if (geom::norm(theta[j]) >= M_PI)
        fail(str_cat("BodyParams: joint ", j + 1, " axis-angle magnitude ", geom::norm(theta[j]),
                     " outside canonical range [0, pi)"));
    for (double b : beta)
      if (!std::isfinite(b)) fail("BodyParams: non-finite shape coefficient");
    if (!geom::finite(trans)) fail("BodyParams: non-finite translation");
  }
};

class BodyModel {
 public:
  static const BodyModel& get() {
    static BodyModel model;
    return model;
  }

  const std::array<int, kNumJoints>& parents() const { return parents_; }
  const std::array<geom::V3, kNumJoints>& rest_joints() const { return joints0_; }
  const geom::TriMesh& template_mesh() const { return template_mesh_; }
  int64_t num_vertices() const { return template_mesh_.num_vertices(); }
  double height() const { return height_; }

  // canonical surface samples shared by training fields and evaluation
  std::vector<geom::SurfaceSample> canonical_samples(int64_t count) const {
    Rng rng(kCanonicalSampleSeed);
    return geom::sample_surface(template_mesh_, count, rng);
  }

  // ------------------------------------------------------------------
  // plain (non-differentiable) paths
  // ------------------------------------------------------------------

  std::array<geom::V3, kNumJoints> shaped_joints(const std::vector<double>& beta) const {
    check_beta(beta);
    auto joints = joints0_;
    for (int j = 0; j < kNumJoints; ++j)
      for (int s = 0; s < kNumShape; ++s)
        for (int c = 0; c < 3; ++c)
          joints[static_cast<size_t>(j)][c] +=
              joint_shape_[(static_cast<size_t>(j) * 3 + static_cast<size_t>(c)) * kNumShape + static_cast<size_t>(s)] *
              beta[static_cast<size_t>(s)];
    return joints;
  }

  // theta: 21 axis-angle vectors (joints 1..21); returns root-relative verts
  PosedBody pose(const std::vector<geom::V3>& theta, const std::vector<double>& beta) const {
    if (theta.size() != kNumPosable)
      fail(str_cat("BodyModel::pose: expected ", kNumPosable, " joint rotations, got ", theta.size()));
    check_beta(beta);
    auto joints = shaped_joints(beta);

    std::array<geom::M3, kNumJoints> grot;
    std::array<geom::V3, kNumJoints> gpos;
    grot[0] = geom::M3::identity();
    gpos[0] = joints[0];
    for (int j = 1; j < kNumJoints; ++j) {
      int p = parents_[static_cast<size_t>(j)];
      geom::M3 local = geom::rodrigues(theta[static_cast<size_t>(j - 1)]);
      grot[static_cast<size_t>(j)] = grot[static_cast<size_t>(p)] * local;
      gpos[static_cast<size_t>(j)] =
          gpos[static_cast<size_t>(p)] +
          grot[static_cast<size_t>(p)] * (joints[static_cast<size_t>(j)] - joints[static_cast<size_t>(p)]);
    }

    PosedBody out;
    out.joints = gpos;
    int64_t n = num_vertices();
    out.vertices.resize(static_cast<size_t>(n));
    for (int64_t v = 0; v < n; ++v) {
      geom::V3 rest = template_mesh_.vertices[static_cast<size_t>(v)];
      for (int s = 0; s < kNumShape; ++s)
        for (int c = 0; c < 3; ++c)
          rest[c] += vertex_shape_[(static_cast<size_t>(v) * 3 + static_cast<size_t>(c)) * kNumShape + static_cast<size_t>(s)] *
                     beta[static_cast<size_t>(s)];
      geom::V3 acc{0, 0, 0};
      for (const auto& [joint, w] : weights_[static_cast<size_t>(v)]) {
        geom::V3 moved = grot[static_cast<size_t>(joint)] * (rest - joints[static_cast<size_t>(joint)]) +
                         gpos[static_cast<size_t>(joint)];
        acc += moved * w;
      }
      out.vertices[static_cast<size_t>(v)] = acc;
    }
    return out;
  }

  geom::TriMesh posed_mesh(const std::vector<geom::V3>& theta, const std::vector<double>& beta,
                           const geom::M3& Rh = geom::M3::identity(), const geom::V3& th = {}) const {
    PosedBody pb = pose(theta, beta);
    geom::TriMesh m;
    m.vertices.reserve(pb.vertices.size());
    for (const auto& v : pb.vertices) m.vertices.push_back(Rh * v + th);
    m.faces = template_mesh_.faces;
    return m;
  }

  geom::TriMesh pose_body(const BodyParams& p) const {
    p.validate();
    return posed_mesh(p.theta, p.beta, p.rotation(), p.trans);
  }

  std::array<geom::V3, kNumJoints> joint_positions(const BodyParams& p) const {
    p.validate();
    auto pb = pose(p.theta, p.beta);
    geom::M3 R = p.rotation();
    for (auto& j : pb.joints) j = R * j + p.trans;
    return pb.joints;
  }

  // ------------------------------------------------------------------
  // differentiable batched path
  // ------------------------------------------------------------------

  struct LbsResult {
    diff::Tensor vertices;  // [B,N,3] root-relative
    diff::Tensor joints;    // [B,22,3] root-relative
  };

  // theta [B,63] (21 axis-angle triples), beta [B,10]
  LbsResult lbs_batch(const diff::Tensor& theta, const diff::Tensor& beta) const {
    return lbs_core(theta, beta, vertex_base_t_, vertex_shape_t_, weight_col_t_);
  }

  // Skinning restricted to a vertex subset (training-time subsampling of
  // vertex losses); joints are always computed in full.
  LbsResult lbs_batch_subset(const diff::Tensor& theta, const diff::Tensor& beta,
                             const std::vector<int64_t>& verts) const {
    if (verts.empty()) return lbs_batch(theta, beta);
    int64_t N = num_vertices(), V = static_cast<int64_t>(verts.size());
    std::vector<double> vbase(static_cast<size_t>(V) * 3);
    std::vector<double> vshape(static_cast<size_t>(kNumShape * V * 3));
    std::vector<std::vector<double>> wcols(kNumJoints, std::vector<double>(static_cast<size_t>(V), 0.0));
    for (int64_t i = 0; i < V; ++i) {
      int64_t v = verts[static_cast<size_t>(i)];
      if (v < 0 || v >= N)
        fail(str_cat("lbs_batch_subset: vertex index ", v, " out of range [0,", N, ")"));
      const geom::V3& p = template_mesh_.vertices[static_cast<size_t>(v)];
      vbase[static_cast<size_t>(i * 3 + 0)] = p.x;
      vbase[static_cast<size_t>(i * 3 + 1)] = p.y;
      vbase[static_cast<size_t>(i * 3 + 2)] = p.z;
      for (int s = 0; s < kNumShape; ++s)
        for (int c = 0; c < 3; ++c)
          vshape[static_cast<size_t>(s) * static_cast<size_t>(V * 3) + static_cast<size_t>(i * 3 + c)] =
              vertex_shape_[(static_cast<size_t>(v) * 3 + static_cast<size_t>(c)) * kNumShape + static_cast<size_t>(s)];
      for (const auto& [joint, w] : weights_[static_cast<size_t>(v)])
        wcols[static_cast<size_t>(joint)][static_cast<size_t>(i)] = w;
    }
    std::vector<diff::Tensor> wcol_t(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j)
      wcol_t[static_cast<size_t>(j)] = diff::Tensor::from(std::move(wcols[static_cast<size_t>(j)]), {V, 1});
    return lbs_core(theta, beta, diff::Tensor::from(std::move(vbase), {1, V, 3}),
                    diff::Tensor::from(std::move(vshape), {kNumShape, V * 3}), wcol_t);
  }

 private:
  // Shared core: vbase [1,V,3], vshape [10,V*3], wcols per joint [V,1].
  LbsResult lbs_core(const diff::Tensor& theta, const diff::Tensor& beta,
                     const diff::Tensor& vbase, const diff::Tensor& vshape,
                     const std::vector<diff::Tensor>& wcols) const {
    using namespace diff;
    if (theta.ndim() != 2 || theta.size(1) != kNumPosable * 3)
      fail(str_cat("lbs_batch: theta must be [B,63], got ", shape_str(theta.shape())));
    if (beta.ndim() != 2 || beta.size(1) != kNumShape)
      fail(str_cat("lbs_batch: beta must be [B,10], got ", shape_str(beta.shape())));
    if (theta.size(0) != beta.size(0)) fail("lbs_batch: theta/beta batch mismatch");
    int64_t B = theta.size(0);
    int64_t V = vbase.size(1);

    // shaped rest vertices and joints: rest = base + shape_matrix * beta
    Tensor vrest = add(vbase, reshape(matmul(beta, vshape), {B, V, 3}));
    Tensor jrest = add(joint_base_t_, reshape(matmul(beta, joint_shape_t_), {B, kNumJoints, 3}));

    // forward kinematics
    std::vector<Tensor> grot(kNumJoints), gpos(kNumJoints);
    grot[0] = geom::const_matrix_batch(geom::M3::identity(), B);
    gpos[0] = slice(jrest, 1, 0, 1);  // [B,1,3]
    for (int j = 1; j < kNumJoints; ++j) {
      int p = parents_[static_cast<size_t>(j)];
      Tensor local = geom::rodrigues_batch(slice(theta, 1, (j - 1) * 3, 3));
      grot[static_cast<size_t>(j)] = matmul(grot[static_cast<size_t>(p)], local);
      Tensor off = sub(slice(jrest, 1, j, 1), slice(jrest, 1, p, 1));  // [B,1,3]
      // row-vector convention: p' = off * G^T
      Tensor moved = matmul(off, transpose_last2(grot[static_cast<size_t>(p)]));
      gpos[static_cast<size_t>(j)] = add(gpos[static_cast<size_t>(p)], moved);
    }

    // skinning: sum over joints of w_j * ((rest - J_j) R_j^T + G_j)
    Tensor verts;
    for (int j = 0; j < kNumJoints; ++j) {
      Tensor centered = sub(vrest, slice(jrest, 1, j, 1));
      Tensor moved = add(matmul(centered, transpose_last2(grot[static_cast<size_t>(j)])),
                         gpos[static_cast<size_t>(j)]);
      Tensor term = mul(moved, wcols[static_cast<size_t>(j)]);  // [V,1] broadcast
      verts = j == 0 ? term : add(verts, term);
    }

    Tensor joints = concat(gpos, 1);  // [B,22,3]
    return {verts, joints};
  }

 public:
  // World-frame differentiable posing: applies a batched 6D global rotation
  // and translation on top of lbs_batch.
  LbsResult pose_body_batch(const diff::Tensor& theta, const diff::Tensor& beta,
                            const diff::Tensor& rot6d, const diff::Tensor& trans) const {
    using namespace diff;
    if (rot6d.ndim() != 2 || rot6d.size(1) != 6)
      fail(str_cat("pose_body_batch: rot6d must be [B,6], got ", shape_str(rot6d.shape())));
    if (trans.ndim() != 2 || trans.size(1) != 3)
      fail(str_cat("pose_body_batch: trans must be [B,3], got ", shape_str(trans.shape())));
    LbsResult local = lbs_batch(theta, beta);
    int64_t B = theta.size(0);
    Tensor R = geom::rot6d_to_matrix_batch(rot6d);  // [B,3,3]
    Tensor Rt = transpose_last2(R);
    Tensor t = reshape(trans, {B, 1, 3});
    return {add(matmul(local.vertices, Rt), t), add(matmul(local.joints, Rt), t)};
  }

 private:
  std::array<int, kNumJoints> parents_{};
  std::array<geom::V3, kNumJoints> joints0_{};
  geom::TriMesh template_mesh_;
  std::vector<std::vector<std::pair<int, double>>> weights_;  // per vertex, <=4 entries
  std::vector<double> vertex_shape_;  // [N*3, 10]
  std::vector<double> joint_shape_;   // [22*3, 10]
  double height_ = 0;

  // constant tensors for the batched path
  diff::Tensor vertex_base_t_, joint_base_t_;    // [1,N,3], [1,22,3]
  diff::Tensor vertex_shape_t_, joint_shape_t_;  // [10, N*3], [10, 66]
  std::vector<diff::Tensor> weight_col_t_;       // per joint [N,1]

  static void check_beta(const std::vector<double>& beta) {
    if (beta.size() != kNumShape)
      fail(str_cat("BodyModel: expected ", kNumShape, " shape coefficients, got ", beta.size()));
  }

  BodyModel() {
    parents_ = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

    auto J = [&](int id, double x, double y, double z) { joints0_[static_cast<size_t>(id)] = {x, y, z}; };
    J(kPelvis, 0, 0, 0);
    J(kLeftHip, 0.09, -0.06, 0);
    J(kRightHip, -0.09, -0.06, 0);
    J(kSpine1, 0, 0.11, 0);
    J(kLeftKnee, 0.10, -0.50, 0);
    J(kRightKnee, -0.10, -0.50, 0);
    J(kSpine2, 0, 0.24, 0);
    J(kLeftAnkle, 0.10, -0.93, 0);
    J(kRightAnkle, -0.10, -0.93, 0);
    J(kSpine3, 0, 0.37, 0);
    J(kLeftFoot, 0.11, -0.99, 0.12);
    J(kRightFoot, -0.11, -0.99, 0.12);
    J(kNeck, 0, 0.48, 0);
    J(kLeftCollar, 0.05, 0.43, 0);
    J(kRightCollar, -0.05, 0.43, 0);
    J(kHead, 0, 0.60, 0);
    J(kLeftShoulder, 0.17, 0.43, 0);
    J(kRightShoulder, -0.17, 0.43, 0);
    J(kLeftElbow, 0.45, 0.43, 0);
    J(kRightElbow, -0.45, 0.43, 0);
    J(kLeftWrist, 0.70, 0.43, 0);
    J(kRightWrist, -0.70, 0.43, 0);

    build_template();
    build_shape_dirs();
    build_tensors();
  }

  // capsule for each joint's distal bone (to its primary child, or a nub
  // direction for leaves)
  struct BoneSpec {
    geom::V3 a, b;
    double radius;
  };

  BoneSpec bone_spec(int j) const {
    const auto& js = joints0_;
    auto seg = [&](int from, int to, double r) {
      return BoneSpec{js[static_cast<size_t>(from)], js[static_cast<size_t>(to)], r};
    };
    auto nub = [&](int from, geom::V3 dir, double len, double r) {
      return BoneSpec{js[static_cast<size_t>(from)], js[static_cast<size_t>(from)] + dir * len, r};
    };
    switch (j) {
      case kPelvis: return seg(kPelvis, kSpine1, 0.11);
      case kLeftHip: return seg(kLeftHip, kLeftKnee, 0.075);
      case kRightHip: return seg(kRightHip, kRightKnee, 0.075);
      case kSpine1: return seg(kSpine1, kSpine2, 0.115);
      case kLeftKnee: return seg(kLeftKnee, kLeftAnkle, 0.055);
      case kRightKnee: return seg(kRightKnee, kRightAnkle, 0.055);
      case kSpine2: return seg(kSpine2, kSpine3, 0.11);
      case kLeftAnkle: return seg(kLeftAnkle, kLeftFoot, 0.045);
      case kRightAnkle: return seg(kRightAnkle, kRightFoot, 0.045);
      case kSpine3: return seg(kSpine3, kNeck, 0.10);
      case kLeftFoot: return nub(kLeftFoot, {0, 0, 1}, 0.10, 0.035);
      case kRightFoot: return nub(kRightFoot, {0, 0, 1}, 0.10, 0.035);
      case kNeck: return seg(kNeck, kHead, 0.05);
      case kLeftCollar: return seg(kLeftCollar, kLeftShoulder, 0.05);
      case kRightCollar: return seg(kRightCollar, kRightShoulder, 0.05);
      case kHead: return nub(kHead, {0, 1, 0}, 0.07, 0.095);
      case kLeftShoulder: return seg(kLeftShoulder, kLeftElbow, 0.048);
      case kRightShoulder: return seg(kRightShoulder, kRightElbow, 0.048);
      case kLeftElbow: return seg(kLeftElbow, kLeftWrist, 0.042);
      case kRightElbow: return seg(kRightElbow, kRightWrist, 0.042);
      case kLeftWrist: return nub(kLeftWrist, {1, 0, 0}, 0.09, 0.038);
      case kRightWrist: return nub(kRightWrist, {-1, 0, 0}, 0.09, 0.038);
      default: fail("bone_spec: bad joint");
    }
  }

  static double point_segment_dist(const geom::V3& p, const geom::V3& a, const geom::V3& b) {
    geom::V3 ab = b - a;
    double t = geom::dot(p - a, ab) / std::max(1e-12, geom::dot(ab, ab));
    t = std::clamp(t, 0.0, 1.0);
    return geom::norm(p - (a + ab * t));
  }

  void build_template() {
    std::vector<std::array<int, 3>> faces;
    std::vector<geom::V3> verts;
    std::vector<int> vert_capsule;  // owning capsule per vertex

    for (int j = 0; j < kNumJoints; ++j) {
      BoneSpec spec = bone_spec(j);
      geom::V3 dir = spec.b - spec.a;
      double len = geom::norm(dir);
      geom::TriMesh cap = geom::make_capsule(spec.radius, len, 6, 2);
      // rotate +y onto the bone direction
      geom::V3 y{0, 1, 0}, d = dir / len;
      geom::M3 R;
      double c = geom::dot(y, d);
      if (c > 1.0 - 1e-12) {
        R = geom::M3::identity();
      } else if (c < -1.0 + 1e-12) {
        R = geom::rot_x(M_PI);
      } else {
        geom::V3 axis = geom::normalized(geom::cross(y, d));
        R = geom::rodrigues(axis * std::acos(std::clamp(c, -1.0, 1.0)));
      }
      geom::V3 mid = (spec.a + spec.b) / 2.0;
      int off = static_cast<int>(verts.size());
      for (const auto& v : cap.vertices) {
        verts.push_back(R * v + mid);
        vert_capsule.push_back(j);
      }
      for (const auto& f : cap.faces) faces.push_back({f[0] + off, f[1] + off, f[2] + off});
    }
    template_mesh_ = geom::make_mesh(std::move(verts), std::move(faces));

    // children lists for weight candidates
    std::array<std::vector<int>, kNumJoints> children;
    for (int j = 1; j < kNumJoints; ++j) children[static_cast<size_t>(parents_[static_cast<size_t>(j)])].push_back(j);

    weights_.resize(static_cast<size_t>(template_mesh_.num_vertices()));
    for (int64_t v = 0; v < template_mesh_.num_vertices(); ++v) {
      int own = vert_capsule[static_cast<size_t>(v)];
      std::vector<int> candidates = {own};
      if (parents_[static_cast<size_t>(own)] >= 0) candidates.push_back(parents_[static_cast<size_t>(own)]);
      for (int c : children[static_cast<size_t>(own)]) candidates.push_back(c);

      const geom::V3& p = template_mesh_.vertices[static_cast<size_t>(v)];
      std::vector<std::pair<int, double>> scored;
      for (int k : candidates) {
        BoneSpec bs = bone_spec(k);
        double d = point_segment_dist(p, bs.a, bs.b);
        scored.emplace_back(k, 1.0 / (d * d + 1e-3));
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second > b.second || (a.second == b.second && a.first < b.first);
      });
      if (scored.size() > 4) scored.resize(4);
      double total = 0;
      for (const auto& [k, w] : scored) total += w;
      for (auto& [k, w] : scored) w /= total;
      std::sort(scored.begin(), scored.end());  // stable order by joint id
      weights_[static_cast<size_t>(v)] = scored;
    }

    auto [lo, hi] = geom::bounding_box(template_mesh_);
    height_ = hi.y - lo.y;
  }

  void build_shape_dirs() {
    int64_t N = template_mesh_.num_vertices();
    vertex_shape_.assign(static_cast<size_t>(N * 3 * kNumShape), 0.0);
    joint_shape_.assign(static_cast<size_t>(kNumJoints * 3 * kNumShape), 0.0);

    auto vset = [&](int64_t v, int c, int s, double val) {
      vertex_shape_[(static_cast<size_t>(v) * 3 + static_cast<size_t>(c)) * kNumShape + static_cast<size_t>(s)] = val;
    };
    auto jset = [&](int j, int c, int s, double val) {
      joint_shape_[(static_cast<size_t>(j) * 3 + static_cast<size_t>(c)) * kNumShape + static_cast<size_t>(s)] = val;
    };

    // recover per-vertex owning capsule by re-walking construction order
    std::vector<int> vert_capsule;
    for (int j = 0; j < kNumJoints; ++j) {
      BoneSpec spec = bone_spec(j);
      geom::TriMesh cap = geom::make_capsule(spec.radius, geom::norm(spec.b - spec.a), 6, 2);
      for (int64_t i = 0; i < cap.num_vertices(); ++i) vert_capsule.push_back(j);
    }

    auto is_torso = [](int j) { return j == kPelvis || j == kSpine1 || j == kSpine2 || j == kSpine3; };
    auto is_leg = [](int j) {
      return j == kLeftHip || j == kRightHip || j == kLeftKnee || j == kRightKnee;
    };
    auto is_arm = [](int j) {
      return j == kLeftShoulder || j == kRightShoulder || j == kLeftElbow || j == kRightElbow ||
             j == kLeftWrist || j == kRightWrist || j == kLeftCollar || j == kRightCollar;
    };
    auto is_head = [](int j) { return j == kNeck || j == kHead; };
    geom::V3 head_center{0, 0.56, 0};

    for (int64_t v = 0; v < N; ++v) {
      const geom::V3& p = template_mesh_.vertices[static_cast<size_t>(v)];
      int own = vert_capsule[static_cast<size_t>(v)];
      // 0: height
      vset(v, 1, 0, 0.05 * p.y);
      // 1: width
      vset(v, 0, 1, 0.04 * p.x);
      vset(v, 2, 1, 0.04 * p.z);
      // 2: torso length
      vset(v, 1, 2, 0.06 * std::clamp(p.y, 0.0, 0.48));
      // 3: leg length
      vset(v, 1, 3, 0.08 * std::min(p.y + 0.06, 0.0));
      // 4: arm length
      double beyond = std::max(std::fabs(p.x) - 0.17, 0.0);
      vset(v, 0, 4, 0.07 * (p.x >= 0 ? beyond : -beyond));
      // 5: belly
      if (is_torso(own)) {
        double env = std::exp(-std::pow((p.y - 0.15) / 0.25, 2.0));
        vset(v, 0, 5, 0.2 * p.x * env);
        vset(v, 2, 5, 0.2 * p.z * env);
      }
      // 6/7: limb thickness (radial from the owning bone)
      if (is_leg(own) || is_arm(own)) {
        BoneSpec bs = bone_spec(own);
        geom::V3 ab = bs.b - bs.a;
        double t = std::clamp(geom::dot(p - bs.a, ab) / std::max(1e-12, geom::dot(ab, ab)), 0.0, 1.0);
        geom::V3 radial = p - (bs.a + ab * t);
        double rn = geom::norm(radial);
        if (rn > 1e-9) {
          geom::V3 u = radial / rn;
          int mode = is_leg(own) ? 6 : 7;
          double mag = is_leg(own) ? 0.012 : 0.010;
          for (int c = 0; c < 3; ++c) vset(v, c, mode, mag * u[c]);
        }
      }
      // 8: head size
      if (is_head(own))
        for (int c = 0; c < 3; ++c) vset(v, c, 8, 0.3 * (p[c] - head_center[c]));
      // 9: shoulder width
      if (is_arm(own)) vset(v, 0, 9, p.x >= 0 ? 0.04 : -0.04);
    }

    for (int j = 0; j < kNumJoints; ++j) {
      const geom::V3& p = joints0_[static_cast<size_t>(j)];
      jset(j, 1, 0, 0.05 * p.y);
      jset(j, 0, 1, 0.04 * p.x);
      jset(j, 2, 1, 0.04 * p.z);
      jset(j, 1, 2, 0.06 * std::clamp(p.y, 0.0, 0.48));
      jset(j, 1, 3, 0.08 * std::min(p.y + 0.06, 0.0));
      double beyond = std::max(std::fabs(p.x) - 0.17, 0.0);
      jset(j, 0, 4, 0.07 * (p.x >= 0 ? beyond : -beyond));
      if (j == kHead)
        for (int c = 0; c < 3; ++c) jset(j, c, 8, 0.3 * (p[c] - head_center[c]));
      bool arm_joint = j == kLeftCollar || j == kRightCollar || j == kLeftShoulder ||
                       j == kRightShoulder || j == kLeftElbow || j == kRightElbow ||
                       j == kLeftWrist || j == kRightWrist;
      if (arm_joint) jset(j, 0, 9, p.x >= 0 ? 0.04 : -0.04);
    }
    // the root must stay at the origin under all shapes
    for (int c = 0; c < 3; ++c)
      for (int s = 0; s < kNumShape; ++s) jset(kPelvis, c, s, 0.0);
  }

  void build_tensors() {
    using diff::Tensor;
    int64_t N = num_vertices();
    std::vector<double> vb(static_cast<size_t>(N * 3));
    for (int64_t v = 0; v < N; ++v)
      for (int c = 0; c < 3; ++c)
        vb[static_cast<size_t>(v * 3 + c)] = template_mesh_.vertices[static_cast<size_t>(v)][c];
    vertex_base_t_ = Tensor::from(vb, {1, N, 3});

    std::vector<double> jb(kNumJoints * 3);
    for (int j = 0; j < kNumJoints; ++j)
      for (int c = 0; c < 3; ++c) jb[static_cast<size_t>(j * 3 + c)] = joints0_[static_cast<size_t>(j)][c];
    joint_base_t_ = Tensor::from(jb, {1, kNumJoints, 3});

    // transposed shape matrices: beta [B,10] x [10, N*3]
    std::vector<double> vs(static_cast<size_t>(kNumShape * N * 3));
    for (int64_t r = 0; r < N * 3; ++r)
      for (int s = 0; s < kNumShape; ++s)
        vs[static_cast<size_t>(s * N * 3 + r)] = vertex_shape_[static_cast<size_t>(r * kNumShape + s)];
    vertex_shape_t_ = Tensor::from(vs, {kNumShape, N * 3});

    std::vector<double> js(static_cast<size_t>(kNumShape * kNumJoints * 3));
    for (int64_t r = 0; r < kNumJoints * 3; ++r)
      for (int s = 0; s < kNumShape; ++s)
        js[static_cast<size_t>(s * kNumJoints * 3 + r)] = joint_shape_[static_cast<size_t>(r * kNumShape + s)];
    joint_shape_t_ = Tensor::from(js, {kNumShape, kNumJoints * 3});

    weight_col_t_.resize(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j) {
      std::vector<double> col(static_cast<size_t>(N), 0.0);
      for (int64_t v = 0; v < N; ++v)
        for (const auto& [joint, w] : weights_[static_cast<size_t>(v)])
          if (joint == j) col[static_cast<size_t>(v)] = w;
      weight_col_t_[static_cast<size_t>(j)] = Tensor::from(col, {N, 1});
    }
  }

 public:
  const std::vector<std::vector<std::pair<int, double>>>& skin_weights() const { return weights_; }
};

// Mean Euclidean distance over corresponding vertices (meters).
inline double vertex_to_vertex(const geom::TriMesh& a, const geom::TriMesh& b) {
  if (a.num_vertices() != b.num_vertices())
    fail(str_cat("vertex_to_vertex: vertex count mismatch ", a.num_vertices(), " vs ",
                 b.num_vertices()));
  if (a.num_vertices() == 0) fail("vertex_to_vertex: empty meshes");
  double total = 0;
  for (size_t i = 0; i < a.vertices.size(); ++i) total += geom::norm(a.vertices[i] - b.vertices[i]);
  return total / static_cast<double>(a.num_vertices());
}

// Differentiable v2v: mean over batch and vertices of per-vertex Euclidean
// distance between [B,N,3] tensors.  The epsilon keeps the gradient finite
// when two corresponding vertices coincide.
inline diff::Tensor v2v_loss(const diff::Tensor& a, const diff::Tensor& b, double eps = 1e-12) {
  using namespace diff;
  if (a.shape() != b.shape())
    fail(str_cat("v2v_loss: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  Tensor d = sub(a, b);
  return mean(sqrt(add_scalar(sum_last(mul(d, d)), eps)));
}

}  // namespace hoi::body
