#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>

#include "hoi/body/model.hpp"
#include "hoi/diff/gradcheck.hpp"

using namespace hoi;
using body::BodyModel;
using geom::V3;

namespace {

std::vector<double> zeros(size_t n) { return std::vector<double>(n, 0.0); }
std::vector<V3> zero_pose() { return std::vector<V3>(body::kNumPosable, V3{0, 0, 0}); }

// directed-edge pairing: every edge (a,b) must be matched by exactly one (b,a)
bool watertight_by_edge_pairing(const geom::TriMesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : m.faces)
    for (int e = 0; e < 3; ++e) count[{f[e], f[(e + 1) % 3]}]++;
  for (const auto& [edge, c] : count) {
    if (c != 1) return false;
    auto rev = count.find({edge.second, edge.first});
    if (rev == count.end() || rev->second != 1) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("template mesh sanity") {
  const auto& bm = BodyModel::get();
  const auto& mesh = bm.template_mesh();

  REQUIRE(mesh.num_vertices() > 400);
  REQUIRE(mesh.num_vertices() < 800);
  REQUIRE(mesh.num_faces() > 800);
  REQUIRE(watertight_by_edge_pairing(mesh));

  // about 1.7m tall, root at the origin, roughly x-symmetric
  REQUIRE(bm.height() == Catch::Approx(1.70).margin(0.12));
  REQUIRE(bm.rest_joints()[body::kPelvis].x == 0.0);
  REQUIRE(bm.rest_joints()[body::kPelvis].y == 0.0);
  REQUIRE(bm.rest_joints()[body::kPelvis].z == 0.0);

  auto [lo, hi] = geom::bounding_box(mesh);
  REQUIRE(std::fabs(hi.x + lo.x) < 1e-9);  // symmetric in x
  REQUIRE(hi.y > 0.6);                     // head above root
  REQUIRE(lo.y < -0.9);                    // feet below root

  // parents form a tree rooted at 0 with increasing indices
  const auto& par = bm.parents();
  REQUIRE(par[0] == -1);
  for (int j = 1; j < body::kNumJoints; ++j) {
    REQUIRE(par[static_cast<size_t>(j)] >= 0);
    REQUIRE(par[static_cast<size_t>(j)] < j);
  }
}

TEST_CASE("skin weight rows: at most 4 entries, sum to one") {
  const auto& bm = BodyModel::get();
  for (const auto& row : bm.skin_weights()) {
    REQUIRE(!row.empty());
    REQUIRE(row.size() <= 4);
    double total = 0;
    for (const auto& [j, w] : row) {
      REQUIRE(j >= 0);
      REQUIRE(j < body::kNumJoints);
      REQUIRE(w > 0.0);
      REQUIRE(w <= 1.0 + 1e-12);
      total += w;
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("rest pose reproduces the template exactly") {
  const auto& bm = BodyModel::get();
  auto posed = bm.pose(zero_pose(), zeros(body::kNumShape));
  REQUIRE(posed.vertices.size() == static_cast<size_t>(bm.num_vertices()));
  for (size_t v = 0; v < posed.vertices.size(); ++v)
    for (int c = 0; c < 3; ++c)
      REQUIRE(posed.vertices[v][c] == Catch::Approx(bm.template_mesh().vertices[v][c]).margin(1e-13));
  for (int j = 0; j < body::kNumJoints; ++j)
    for (int c = 0; c < 3; ++c)
      REQUIRE(posed.joints[static_cast<size_t>(j)][c] ==
              Catch::Approx(bm.rest_joints()[static_cast<size_t>(j)][c]).margin(1e-13));
}

TEST_CASE("shape directions move vertices and joints as designed") {
  const auto& bm = BodyModel::get();

  SECTION("height mode scales y exactly") {
    std::vector<double> beta = zeros(body::kNumShape);
    beta[0] = 1.0;
    auto posed = bm.pose(zero_pose(), beta);
    for (size_t v = 0; v < posed.vertices.size(); ++v) {
      const V3& t = bm.template_mesh().vertices[v];
      REQUIRE(posed.vertices[v].y == Catch::Approx(1.05 * t.y).margin(1e-12));
      REQUIRE(posed.vertices[v].x == Catch::Approx(t.x).margin(1e-12));
    }
  }

  SECTION("leg length mode lowers the knees") {
    std::vector<double> beta = zeros(body::kNumShape);
    beta[3] = 1.0;
    auto joints = bm.shaped_joints(beta);
    double expect = -0.50 + 0.08 * (-0.50 + 0.06);
    REQUIRE(joints[body::kLeftKnee].y == Catch::Approx(expect).margin(1e-12));
    // root stays pinned at the origin for every shape
    for (int s = 0; s < body::kNumShape; ++s) {
      std::vector<double> b = zeros(body::kNumShape);
      b[static_cast<size_t>(s)] = 2.0;
      auto js = bm.shaped_joints(b);
      REQUIRE(geom::norm(js[body::kPelvis]) == 0.0);
    }
  }
}

TEST_CASE("bone lengths are preserved under pose") {
  const auto& bm = BodyModel::get();
  Rng rng(42);
  std::vector<V3> theta(body::kNumPosable);
  for (auto& t : theta) t = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  std::vector<double> beta(body::kNumShape);
  for (auto& b : beta) b = rng.uniform(-1.5, 1.5);

  auto rest = bm.shaped_joints(beta);
  auto posed = bm.pose(theta, beta);
  for (int j = 1; j < body::kNumJoints; ++j) {
    int p = bm.parents()[static_cast<size_t>(j)];
    double rest_len = geom::norm(rest[static_cast<size_t>(j)] - rest[static_cast<size_t>(p)]);
    double posed_len =
        geom::norm(posed.joints[static_cast<size_t>(j)] - posed.joints[static_cast<size_t>(p)]);
    REQUIRE(posed_len == Catch::Approx(rest_len).margin(1e-10));
  }
}

TEST_CASE("rotating one elbow transforms the forearm rigidly and moves nothing upstream") {
  const auto& bm = BodyModel::get();
  std::vector<V3> theta = zero_pose();
  V3 aa{0.3, -0.7, 0.5};
  theta[body::kLeftElbow - 1] = aa;
  geom::M3 R = geom::rodrigues(aa);
  V3 pivot = bm.rest_joints()[body::kLeftElbow];

  auto posed = bm.pose(theta, zeros(body::kNumShape));

  // upstream joints untouched
  for (int j : {body::kPelvis, body::kSpine3, body::kLeftShoulder, body::kRightWrist, body::kHead}) {
    for (int c = 0; c < 3; ++c)
      REQUIRE(posed.joints[static_cast<size_t>(j)][c] ==
              Catch::Approx(bm.rest_joints()[static_cast<size_t>(j)][c]).margin(1e-13));
  }
  // wrist rotates about the elbow
  V3 expect = R * (bm.rest_joints()[body::kLeftWrist] - pivot) + pivot;
  for (int c = 0; c < 3; ++c)
    REQUIRE(posed.joints[body::kLeftWrist][c] == Catch::Approx(expect[c]).margin(1e-12));

  // vertices fully bound inside the forearm chain follow the same rigid map
  int checked = 0;
  for (size_t v = 0; v < posed.vertices.size(); ++v) {
    double chain_weight = 0;
    for (const auto& [j, w] : bm.skin_weights()[v])
      if (j == body::kLeftElbow || j == body::kLeftWrist) chain_weight += w;
    if (chain_weight < 1.0 - 1e-12) continue;
    ++checked;
    V3 e = R * (bm.template_mesh().vertices[v] - pivot) + pivot;
    for (int c = 0; c < 3; ++c) REQUIRE(posed.vertices[v][c] == Catch::Approx(e[c]).margin(1e-11));
  }
  REQUIRE(checked > 10);
}

TEST_CASE("batched differentiable skinning matches the plain path") {
  const auto& bm = BodyModel::get();
  Rng rng(7);
  int64_t B = 3;
  std::vector<double> theta_flat(static_cast<size_t>(B) * 63), beta_flat(static_cast<size_t>(B) * 10);
  for (auto& t : theta_flat) t = rng.uniform(-1.2, 1.2);
  for (auto& b : beta_flat) b = rng.uniform(-1.5, 1.5);

  auto res = bm.lbs_batch(diff::Tensor::from(theta_flat, {B, 63}),
                          diff::Tensor::from(beta_flat, {B, 10}));
  REQUIRE(res.vertices.shape() == diff::Shape{B, bm.num_vertices(), 3});
  REQUIRE(res.joints.shape() == diff::Shape{B, body::kNumJoints, 3});

  for (int64_t b = 0; b < B; ++b) {
    std::vector<V3> theta(body::kNumPosable);
    for (int j = 0; j < body::kNumPosable; ++j)
      for (int c = 0; c < 3; ++c)
        theta[static_cast<size_t>(j)][c] = theta_flat[static_cast<size_t>(b * 63 + j * 3 + c)];
    std::vector<double> beta(beta_flat.begin() + b * 10, beta_flat.begin() + (b + 1) * 10);
    auto plain = bm.pose(theta, beta);
    for (int64_t v = 0; v < bm.num_vertices(); ++v)
      for (int64_t c = 0; c < 3; ++c)
        REQUIRE(res.vertices.at((b * bm.num_vertices() + v) * 3 + c) ==
                Catch::Approx(plain.vertices[static_cast<size_t>(v)][static_cast<int>(c)]).margin(1e-10));
    for (int64_t j = 0; j < body::kNumJoints; ++j)
      for (int64_t c = 0; c < 3; ++c)
        REQUIRE(res.joints.at((b * body::kNumJoints + j) * 3 + c) ==
                Catch::Approx(plain.joints[static_cast<size_t>(j)][static_cast<int>(c)]).margin(1e-10));
  }
}

TEST_CASE("subset skinning matches the corresponding full-path rows") {
  const auto& bm = BodyModel::get();
  Rng rng(8);
  int64_t B = 2;
  std::vector<double> theta_flat(static_cast<size_t>(B) * 63), beta_flat(static_cast<size_t>(B) * 10);
  for (auto& t : theta_flat) t = rng.uniform(-1.0, 1.0);
  for (auto& b : beta_flat) b = rng.uniform(-1.0, 1.0);
  diff::Tensor theta = diff::Tensor::from(theta_flat, {B, 63});
  diff::Tensor beta = diff::Tensor::from(beta_flat, {B, 10});

  std::vector<int64_t> idx = {0, 17, 5, bm.num_vertices() - 1, 101, 101};
  auto full = bm.lbs_batch(theta, beta);
  auto sub = bm.lbs_batch_subset(theta, beta, idx);
  REQUIRE(sub.vertices.shape() == diff::Shape{B, static_cast<int64_t>(idx.size()), 3});
  for (int64_t b = 0; b < B; ++b)
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t c = 0; c < 3; ++c)
        REQUIRE(sub.vertices.at((b * static_cast<int64_t>(idx.size()) + static_cast<int64_t>(i)) * 3 + c) ==
                Catch::Approx(full.vertices.at((b * bm.num_vertices() + idx[i]) * 3 + c)).margin(1e-12));
  REQUIRE(sub.joints.value() == full.joints.value());

  // empty subset means the full path; bad indices are rejected
  auto all = bm.lbs_batch_subset(theta, beta, {});
  REQUIRE(all.vertices.value() == full.vertices.value());
  REQUIRE_THROWS_WITH(bm.lbs_batch_subset(theta, beta, {bm.num_vertices()}),
                      Catch::Matchers::ContainsSubstring("out of range"));

  // gradients still flow to the pose through the subset path
  diff::Tensor theta_p = diff::Tensor::param(theta_flat, {B, 63});
  auto sub_p = bm.lbs_batch_subset(theta_p, beta, idx);
  diff::backward(diff::mean(diff::mul(sub_p.vertices, sub_p.vertices)));
  double gsum = 0;
  for (double g : theta_p.grad()) gsum += std::fabs(g);
  REQUIRE(gsum > 1e-6);
}

TEST_CASE("skinning gradients match central differences") {
  const auto& bm = BodyModel::get();
  Rng rng(19);
  std::vector<double> probe(static_cast<size_t>(bm.num_vertices()) * 3);
  for (auto& p : probe) p = rng.uniform(-1, 1);
  diff::Tensor probe_t = diff::Tensor::from(probe, {1, bm.num_vertices(), 3});

  std::vector<double> theta0(63);
  for (auto& t : theta0) t = rng.uniform(-0.8, 0.8);
  std::vector<double> beta0(10);
  for (auto& b : beta0) b = rng.uniform(-1, 1);

  SECTION("with respect to pose") {
    auto fn = [&](const diff::Tensor& th) {
      auto res = bm.lbs_batch(th, diff::Tensor::from(beta0, {1, 10}));
      return diff::sum(diff::mul(res.vertices, probe_t));
    };
    auto r = diff::grad_check(fn, theta0, {1, 63}, 1e-5);
    INFO("worst theta coord " << r.worst_index << " analytic " << r.analytic_at_worst
                              << " numeric " << r.numeric_at_worst);
    REQUIRE(r.max_rel_err < 1e-5);
  }

  SECTION("with respect to shape") {
    auto fn = [&](const diff::Tensor& be) {
      auto res = bm.lbs_batch(diff::Tensor::from(theta0, {1, 63}), be);
      return diff::sum(diff::mul(res.vertices, probe_t));
    };
    auto r = diff::grad_check(fn, beta0, {1, 10}, 1e-5);
    REQUIRE(r.max_rel_err < 1e-6);
  }

  SECTION("joint positions with respect to pose") {
    std::vector<double> jprobe(body::kNumJoints * 3);
    for (auto& p : jprobe) p = rng.uniform(-1, 1);
    diff::Tensor jprobe_t = diff::Tensor::from(jprobe, {1, body::kNumJoints, 3});
    auto fn = [&](const diff::Tensor& th) {
      auto res = bm.lbs_batch(th, diff::Tensor::from(beta0, {1, 10}));
      return diff::sum(diff::mul(res.joints, jprobe_t));
    };
    auto r = diff::grad_check(fn, theta0, {1, 63}, 1e-5);
    REQUIRE(r.max_rel_err < 1e-5);
  }
}

TEST_CASE("canonical surface samples are deterministic") {
  const auto& bm = BodyModel::get();
  auto a = bm.canonical_samples(256);
  auto b = bm.canonical_samples(256);
  REQUIRE(a.size() == 256);
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].face == b[i].face);
    REQUIRE(a[i].u == b[i].u);
    REQUIRE(a[i].v == b[i].v);
  }
  // samples hit many distinct faces across the whole body
  std::set<int> faces;
  for (const auto& s : a) faces.insert(s.face);
  REQUIRE(faces.size() > 150);
}

TEST_CASE("body params validation and world-frame posing") {
  const auto& bm = BodyModel::get();
  body::BodyParams p;
  p.validate();  // defaults are valid

  body::BodyParams bad = p;
  bad.theta[4] = {3.0, 1.5, 0.0};  // magnitude > pi
  REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("canonical range"));

  // pure translation shifts every vertex
  p.trans = {0, 0, 1};
  auto world = bm.pose_body(p);
  for (size_t v = 0; v < world.vertices.size(); ++v) {
    REQUIRE(world.vertices[v].z ==
            Catch::Approx(bm.template_mesh().vertices[v].z + 1.0).margin(1e-12));
  }

  // joint positions follow the same rigid map
  p.set_rotation(geom::rot_y(0.6));
  auto joints = bm.joint_positions(p);
  geom::M3 R = geom::rot_y(0.6);
  for (int j = 0; j < body::kNumJoints; ++j) {
    V3 expect = R * bm.rest_joints()[static_cast<size_t>(j)] + p.trans;
    for (int c = 0; c < 3; ++c)
      REQUIRE(joints[static_cast<size_t>(j)][c] == Catch::Approx(expect[c]).margin(1e-12));
  }
}

TEST_CASE("two-link FK against hand computation") {
  const auto& bm = BodyModel::get();
  // bend the left shoulder 90 degrees about z, then the elbow 90 about y
  std::vector<V3> theta = zero_pose();
  theta[body::kLeftShoulder - 1] = {0, 0, M_PI / 2};
  theta[body::kLeftElbow - 1] = {0, M_PI / 2, 0};
  auto posed = bm.pose(theta, zeros(body::kNumShape));

  geom::M3 Rs = geom::rot_z(M_PI / 2), Re = geom::rot_y(M_PI / 2);
  V3 Js = bm.rest_joints()[body::kLeftShoulder];
  V3 Je0 = bm.rest_joints()[body::kLeftElbow];
  V3 Jw0 = bm.rest_joints()[body::kLeftWrist];
  V3 Je = Rs * (Je0 - Js) + Js;                       // elbow after shoulder bend
  V3 Jw = Rs * (Re * (Jw0 - Je0)) + Je;               // wrist after both bends
  for (int c = 0; c < 3; ++c) {
    REQUIRE(posed.joints[body::kLeftElbow][c] == Catch::Approx(Je[c]).margin(1e-12));
    REQUIRE(posed.joints[body::kLeftWrist][c] == Catch::Approx(Jw[c]).margin(1e-12));
  }
}

TEST_CASE("vertex_to_vertex metric") {
  const auto& bm = BodyModel::get();
  auto a = bm.template_mesh();
  REQUIRE(body::vertex_to_vertex(a, a) == 0.0);

  auto b = a;
  for (auto& v : b.vertices) v.z += 0.01;
  REQUIRE(body::vertex_to_vertex(a, b) == Catch::Approx(0.01).margin(1e-14));

  Rng rng(4);
  auto c = a;
  double acc = 0;
  for (auto& v : c.vertices) {
    V3 d{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    v += d;
    acc += geom::norm(d);
  }
  REQUIRE(body::vertex_to_vertex(a, c) ==
          Catch::Approx(acc / static_cast<double>(a.num_vertices())).epsilon(1e-12));

  geom::TriMesh tiny = geom::make_box(1, 1, 1);
  REQUIRE_THROWS_WITH(body::vertex_to_vertex(a, tiny), Catch::Matchers::ContainsSubstring("mismatch"));
}

TEST_CASE("v2v loss gradient through all body parameters") {
  const auto& bm = BodyModel::get();
  Rng rng(91);
  // pack [theta(63), beta(10), rot6d(6), trans(3)] = 82 dims
  std::vector<double> x0(82);
  for (size_t i = 0; i < 63; ++i) x0[i] = rng.uniform(-0.6, 0.6);
  for (size_t i = 63; i < 73; ++i) x0[i] = rng.uniform(-1, 1);
  x0[73] = 1; x0[74] = 0.1; x0[75] = -0.05;  // near-identity 6D rotation
  x0[76] = 0.08; x0[77] = 0.95; x0[78] = 0.1;
  x0[79] = 0.2; x0[80] = -0.1; x0[81] = 2.5;

  // fixed target mesh from a different pose
  std::vector<double> t0(82, 0.0);
  t0[73] = 1; t0[77] = 1;
  auto unpack = [](const diff::Tensor& x, int64_t lo, int64_t len) {
    return diff::slice(x, 1, lo, len);
  };
  auto make_verts = [&](const diff::Tensor& x) {
    return bm.pose_body_batch(unpack(x, 0, 63), unpack(x, 63, 10), unpack(x, 73, 6),
                              unpack(x, 79, 3)).vertices;
  };
  diff::Tensor target = make_verts(diff::Tensor::from(t0, {1, 82}));
  diff::Tensor target_const = diff::Tensor::from(target.value(), target.shape());

  auto fn = [&](const diff::Tensor& x) { return body::v2v_loss(make_verts(x), target_const); };
  auto r = diff::grad_check(fn, x0, {1, 82}, 1e-5);
  INFO("worst coord " << r.worst_index << " analytic " << r.analytic_at_worst << " numeric "
                      << r.numeric_at_worst);
  REQUIRE(r.max_rel_err < 1e-4);
}

TEST_CASE("posed_mesh applies the global transform") {
  const auto& bm = BodyModel::get();
  geom::M3 R = geom::rot_y(0.7);
  V3 t{1.0, 2.0, 3.0};
  auto world = bm.posed_mesh(zero_pose(), zeros(body::kNumShape), R, t);
  for (size_t v = 0; v < world.vertices.size(); ++v) {
    V3 expect = R * bm.template_mesh().vertices[v] + t;
    for (int c = 0; c < 3; ++c) REQUIRE(world.vertices[v][c] == Catch::Approx(expect[c]).margin(1e-12));
  }
}
