#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "hoi/body/model.hpp"
#include "hoi/diff/gradcheck.hpp"
#include "hoi/field/interfield.hpp"
#include "hoi/geom/primitives.hpp"

using namespace hoi;
using geom::V3;

namespace {

std::vector<V3> surface_points(const geom::TriMesh& m, int64_t count, uint64_t seed) {
  Rng rng(seed);
  return geom::sample_positions(m, geom::sample_surface(m, count, rng));
}

double brute_distance(const geom::TriMesh& mesh, const V3& q) {
  return std::sqrt(geom::closest_point_brute(mesh, q).dist2);
}

std::vector<double> tensor_to_vec(const diff::Tensor& t) {
  return t.value();
}

}  // namespace

TEST_CASE("interfield against brute force on offset cubes") {
  auto a = geom::make_box(1, 1, 1);
  auto b = geom::make_box(1, 1, 1);
  b = geom::transformed(b, geom::M3::identity(), {2, 0, 0});
  geom::Bvh bvh(b);

  auto pts = surface_points(a, 200, 11);
  auto f = field::compute_interfield(pts, bvh, 5.0);

  REQUIRE(f.size() == 200);
  for (int64_t i = 0; i < f.size(); ++i) {
    double expect = brute_distance(b, pts[static_cast<size_t>(i)]);
    REQUIRE(f.dist[static_cast<size_t>(i)] == expect);  // same closest-point math, bit-exact
    REQUIRE(f.dist[static_cast<size_t>(i)] >= 1.0);
    REQUIRE(f.dist[static_cast<size_t>(i)] <= 1.0 + std::sqrt(3.0));
    REQUIRE(f.mapped(i) == std::exp(-5.0 * f.dist[static_cast<size_t>(i)]));
  }
}

TEST_CASE("touching surfaces give F=0 and mapped value exactly 1") {
  auto a = geom::make_box(1, 1, 1);  // [-0.5,0.5]^3
  auto b = geom::make_box(1, 1, 1);
  b = geom::transformed(b, geom::M3::identity(), {1, 0, 0});  // touches at x=0.5
  geom::Bvh bvh(b);

  // dyadic-grid coordinates keep the closest-point arithmetic exact
  std::vector<V3> pts = {{0.5, 0.0, 0.0}, {0.5, 0.25, -0.25}, {0.5, -0.5, 0.5}, {-0.5, 0, 0}};
  auto f = field::compute_interfield(pts, bvh, 5.0);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(f.dist[static_cast<size_t>(i)] == 0.0);
    REQUIRE(f.mapped(i) == 1.0);
  }
  REQUIRE(f.dist[3] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("exponential mapping constants") {
  field::InterField f;
  f.omega = 5.0;
  f.points = {{0, 0, 0}};
  f.dist = {0.2};
  REQUIRE(f.mapped(0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
  REQUIRE(f.mapped(0) == Catch::Approx(0.367879441).margin(1e-6));

  // monotonicity: strictly decreasing in F
  f.dist = {0.0, 0.1, 0.3, 1.0, 3.0};
  f.points.resize(5);
  for (int i = 1; i < 5; ++i) REQUIRE(f.mapped(i) < f.mapped(i - 1));
  REQUIRE(f.mapped(0) == 1.0);
  for (int i = 0; i < 5; ++i) {
    REQUIRE(f.mapped(i) > 0.0);
    REQUIRE(f.mapped(i) <= 1.0);
  }
}

TEST_CASE("contact extraction thresholds raw distances") {
  auto a = geom::make_box(1, 1, 1);
  auto b = geom::make_box(1, 1, 1);
  b = geom::transformed(b, geom::M3::identity(), {1.2, 0, 0});
  geom::Bvh bvh(b);
  auto pts = surface_points(a, 300, 5);
  auto f = field::compute_interfield(pts, bvh, 5.0);

  auto none = field::extract_contact(f, 0.0);
  for (bool m : none) REQUIRE(!m);  // gap is 0.2, nothing touches

  auto all = field::extract_contact(f, 1e9);
  for (bool m : all) REQUIRE(m);

  auto at5cm = field::extract_contact(f, 0.05);
  for (size_t i = 0; i < at5cm.size(); ++i) REQUIRE(at5cm[i] == (f.dist[i] <= 0.05));

  REQUIRE_THROWS_WITH(field::extract_contact(f, -0.1), Catch::Matchers::ContainsSubstring("tau"));
}

TEST_CASE("interfield L1 in mapped space") {
  field::InterField gt;
  gt.omega = 5.0;
  gt.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  gt.dist = {0.0, 0.0, 0.0};  // mapped = 1 everywhere

  field::InterField pred = gt;
  REQUIRE(field::interfield_l1(pred, gt) == 0.0);

  // uniform offset of 0.1 in mapped space
  for (auto& d : pred.dist) d = -std::log(0.9) / 5.0;
  REQUIRE(field::interfield_l1(pred, gt) == Catch::Approx(0.1).margin(1e-12));

  // random fields vs direct summation
  Rng rng(3);
  field::InterField x = gt, y = gt;
  double acc = 0;
  for (size_t i = 0; i < 3; ++i) {
    x.dist[i] = rng.uniform(0, 2);
    y.dist[i] = rng.uniform(0, 2);
    acc += std::fabs(std::exp(-5.0 * x.dist[i]) - std::exp(-5.0 * y.dist[i]));
  }
  REQUIRE(field::interfield_l1(x, y) == Catch::Approx(acc / 3.0).epsilon(1e-12));

  field::InterField moved = gt;
  moved.points[1].x += 0.5;
  REQUIRE_THROWS_WITH(field::interfield_l1(moved, gt), Catch::Matchers::ContainsSubstring("point"));
}

TEST_CASE("translation and rotation equivariance of raw distances") {
  auto a = geom::make_icosphere(0.4, 2);
  auto b = geom::make_cylinder(0.3, 0.8, 12);
  b = geom::transformed(b, geom::M3::identity(), {0.9, 0.1, -0.2});
  auto pts = surface_points(a, 128, 77);
  geom::Bvh bvh_b(b);
  auto f0 = field::compute_interfield(pts, bvh_b, 5.0);

  geom::M3 R = geom::rot_y(0.8) * geom::rot_x(-0.3);
  V3 t{0.4, -1.2, 2.0};
  auto a2 = geom::transformed(a, R, t);
  auto b2 = geom::transformed(b, R, t);
  std::vector<V3> pts2(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) pts2[i] = R * pts[i] + t;
  geom::Bvh bvh_b2(b2);
  auto f1 = field::compute_interfield(pts2, bvh_b2, 5.0);

  for (int64_t i = 0; i < f0.size(); ++i)
    REQUIRE(f1.dist[static_cast<size_t>(i)] ==
            Catch::Approx(f0.dist[static_cast<size_t>(i)]).margin(1e-9));
}

TEST_CASE("interfield serialization round trip and CSV export") {
  auto a = geom::make_box(0.5, 0.4, 0.3);
  auto b = geom::make_icosphere(0.3, 1);
  b = geom::transformed(b, geom::M3::identity(), {1, 0, 0});
  geom::Bvh bvh(b);
  auto f = field::compute_interfield(surface_points(a, 64, 9), bvh, 5.0);

  std::stringstream ss;
  field::save_interfield(ss, f);
  auto g = field::load_interfield(ss);
  REQUIRE(g.size() == f.size());
  REQUIRE(g.omega == f.omega);
  for (int64_t i = 0; i < f.size(); ++i) {
    REQUIRE(g.dist[static_cast<size_t>(i)] == f.dist[static_cast<size_t>(i)]);
    REQUIRE(g.points[static_cast<size_t>(i)].x == f.points[static_cast<size_t>(i)].x);
  }

  std::stringstream bad("not a field at all, definitely");
  REQUIRE_THROWS_WITH(field::load_interfield(bad), Catch::Matchers::ContainsSubstring("magic"));

  std::stringstream csv;
  field::export_interfield_csv(csv, f);
  std::string line;
  int64_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  REQUIRE(lines == f.size() + 1);
}

TEST_CASE("differentiable path matches the plain field") {
  auto obj = geom::make_cylinder(0.25, 0.6, 10);
  obj = geom::transformed(obj, geom::rot_z(0.4), {0.7, 0.2, 0.1});
  const auto& bm = body::BodyModel::get();
  auto samples = bm.canonical_samples(128);

  // plain: field at template sample points
  std::vector<V3> pts(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) pts[i] = geom::sample_position(bm.template_mesh(), samples[i]);
  geom::Bvh bvh(obj);
  auto plain = field::compute_interfield(pts, bvh, 5.0);

  // tensor: realize the same samples from the template vertex tensor
  int64_t N = bm.num_vertices();
  std::vector<double> vb(static_cast<size_t>(N) * 3);
  for (int64_t vtx = 0; vtx < N; ++vtx)
    for (int c = 0; c < 3; ++c)
      vb[static_cast<size_t>(vtx * 3 + c)] = bm.template_mesh().vertices[static_cast<size_t>(vtx)][c];
  diff::Tensor verts = diff::Tensor::from(vb, {1, N, 3});
  diff::Tensor P = field::realize_surface_samples(verts, bm.template_mesh().faces, samples);

  int64_t m = obj.num_vertices();
  std::vector<double> ob(static_cast<size_t>(m) * 3);
  for (int64_t vtx = 0; vtx < m; ++vtx)
    for (int c = 0; c < 3; ++c) ob[static_cast<size_t>(vtx * 3 + c)] = obj.vertices[static_cast<size_t>(vtx)][c];
  diff::Tensor overts = diff::Tensor::from(ob, {1, m, 3});

  auto df = field::mapped_distances(P, overts, obj.faces, 5.0);
  REQUIRE(df.raw.shape() == diff::Shape{1, 128});
  auto raw = tensor_to_vec(df.raw);
  auto mapped = tensor_to_vec(df.mapped);
  for (size_t i = 0; i < raw.size(); ++i) {
    REQUIRE(raw[i] == Catch::Approx(plain.dist[i]).margin(1e-9));
    REQUIRE(mapped[i] == Catch::Approx(plain.mapped(static_cast<int64_t>(i))).margin(1e-9));
  }
}

TEST_CASE("field gradients: query points and counterpart vertices") {
  auto obj = geom::make_box(0.5, 0.7, 0.4);
  obj = geom::transformed(obj, geom::rot_y(0.3), {0.6, 0.1, 0.2});
  int64_t m = obj.num_vertices();
  std::vector<double> ob(static_cast<size_t>(m) * 3);
  for (int64_t vtx = 0; vtx < m; ++vtx)
    for (int c = 0; c < 3; ++c) ob[static_cast<size_t>(vtx * 3 + c)] = obj.vertices[static_cast<size_t>(vtx)][c];

  Rng rng(21);
  int64_t n = 12;
  std::vector<double> pts(static_cast<size_t>(n) * 3);
  for (auto& p : pts) p = rng.uniform(-0.4, 0.4);

  SECTION("gradient with respect to query points") {
    auto fn = [&](const diff::Tensor& P) {
      auto df = field::mapped_distances(P, diff::Tensor::from(ob, {1, m, 3}), obj.faces, 5.0);
      return diff::sum(df.mapped);
    };
    auto r = diff::grad_check(fn, pts, {1, n, 3}, 1e-6);
    REQUIRE(r.max_rel_err < 1e-5);
  }

  SECTION("gradient with respect to counterpart vertices") {
    auto fn = [&](const diff::Tensor& Vq) {
      auto df = field::mapped_distances(diff::Tensor::from(pts, {1, n, 3}), Vq, obj.faces, 5.0);
      return diff::sum(df.mapped);
    };
    auto r = diff::grad_check(fn, ob, {1, m, 3}, 1e-6);
    REQUIRE(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("composed skinning + interfield gradient") {
  const auto& bm = body::BodyModel::get();
  auto obj = geom::make_icosphere(0.25, 1);
  obj = geom::transformed(obj, geom::M3::identity(), {0.5, 0.2, 0.35});
  int64_t m = obj.num_vertices();
  std::vector<double> ob(static_cast<size_t>(m) * 3);
  for (int64_t vtx = 0; vtx < m; ++vtx)
    for (int c = 0; c < 3; ++c) ob[static_cast<size_t>(vtx * 3 + c)] = obj.vertices[static_cast<size_t>(vtx)][c];
  diff::Tensor overts = diff::Tensor::from(ob, {1, m, 3});
  auto samples = bm.canonical_samples(64);

  Rng rng(33);
  std::vector<double> theta0(63);
  for (auto& t : theta0) t = rng.uniform(-0.5, 0.5);
  std::vector<double> beta0(10, 0.0);

  auto fn = [&](const diff::Tensor& th) {
    auto lbs = bm.lbs_batch(th, diff::Tensor::from(beta0, {1, 10}));
    auto P = field::realize_surface_samples(lbs.vertices, bm.template_mesh().faces, samples);
    auto df = field::mapped_distances(P, overts, obj.faces, 5.0);
    return diff::mean(df.mapped);
  };
  auto r = diff::grad_check(fn, theta0, {1, 63}, 1e-5);
  INFO("worst coord " << r.worst_index << " analytic " << r.analytic_at_worst << " numeric "
                      << r.numeric_at_worst);
  REQUIRE(r.max_rel_err < 1e-4);
}

TEST_CASE("omega and input validation") {
  auto b = geom::make_box(1, 1, 1);
  geom::Bvh bvh(b);
  std::vector<V3> pts = {{0, 0, 2}};
  REQUIRE_THROWS_WITH(field::compute_interfield(pts, bvh, 0.0), Catch::Matchers::ContainsSubstring("omega"));
  REQUIRE_THROWS_WITH(field::compute_interfield(pts, bvh, -1.0), Catch::Matchers::ContainsSubstring("omega"));

  // empty counterpart: the acceleration structure itself refuses to build
  geom::TriMesh empty;
  REQUIRE_THROWS_WITH(geom::Bvh(empty), Catch::Matchers::ContainsSubstring("no faces"));
}
