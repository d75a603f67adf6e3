#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>

#include "hoi/diff/adamw.hpp"
#include "hoi/diff/checkpoint.hpp"
#include "hoi/diff/gradcheck.hpp"
#include "hoi/diff/tensor.hpp"

using namespace hoi;
using namespace hoi::diff;

namespace {

std::vector<double> rand_vec(Rng& rng, size_t n, double s = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = s * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("matmul matches naive loops in all four modes") {
  Rng rng(7);
  // 2d x 2d
  auto av = rand_vec(rng, 3 * 4), bv = rand_vec(rng, 4 * 5);
  Tensor a = Tensor::from(av, {3, 4}), b = Tensor::from(bv, {4, 5});
  Tensor c = matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += av[i * 4 + k] * bv[k * 5 + j];
      REQUIRE(c.at(i * 5 + j) == Catch::Approx(acc).margin(1e-12));
    }
  // batched x 2d
  auto a3 = rand_vec(rng, 2 * 3 * 4);
  Tensor t3 = Tensor::from(a3, {2, 3, 4});
  Tensor c32 = matmul(t3, b);
  for (int bt = 0; bt < 2; ++bt)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += a3[(bt * 3 + i) * 4 + k] * bv[k * 5 + j];
        REQUIRE(c32.at((bt * 3 + i) * 5 + j) == Catch::Approx(acc).margin(1e-12));
      }
  // 2d x batched
  auto b3 = rand_vec(rng, 2 * 4 * 5);
  Tensor tb3 = Tensor::from(b3, {2, 4, 5});
  Tensor c23 = matmul(a, tb3);
  for (int bt = 0; bt < 2; ++bt)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += av[i * 4 + k] * b3[(bt * 4 + k) * 5 + j];
        REQUIRE(c23.at((bt * 3 + i) * 5 + j) == Catch::Approx(acc).margin(1e-12));
      }
  // batched x batched
  Tensor c33 = matmul(t3, tb3);
  for (int bt = 0; bt < 2; ++bt)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += a3[(bt * 3 + i) * 4 + k] * b3[(bt * 4 + k) * 5 + j];
        REQUIRE(c33.at((bt * 3 + i) * 5 + j) == Catch::Approx(acc).margin(1e-12));
      }
}

TEST_CASE("three-layer MLP gradient matches central differences below 1e-4") {
  Rng rng(11);
  auto w1 = rand_vec(rng, 8 * 16, 0.5), b1 = rand_vec(rng, 16, 0.1);
  auto w2 = rand_vec(rng, 16 * 8, 0.5), b2 = rand_vec(rng, 8, 0.1);
  auto w3 = rand_vec(rng, 8 * 4, 0.5), b3 = rand_vec(rng, 4, 0.1);
  auto target = rand_vec(rng, 2 * 4);

  auto net = [&](const Tensor& x, const Tensor& W1) {
    Tensor h1 = tanh(affine(x, W1, Tensor::from(b1, {16})));
    Tensor h2 = gelu(affine(h1, Tensor::from(w2, {16, 8}), Tensor::from(b2, {8})));
    Tensor out = sigmoid(affine(h2, Tensor::from(w3, {8, 4}), Tensor::from(b3, {4})));
    return mse(out, Tensor::from(target, {2, 4}));
  };

  auto x0 = rand_vec(rng, 2 * 8);
  SECTION("with respect to the input") {
    auto res = grad_check(
        [&](const Tensor& x) { return net(x, Tensor::from(w1, {8, 16})); }, x0, {2, 8}, 1e-5);
    INFO("worst coord " << res.worst_index << " analytic " << res.analytic_at_worst << " numeric "
                        << res.numeric_at_worst);
    REQUIRE(res.max_rel_err < 1e-4);
  }
  SECTION("with respect to a weight matrix") {
    auto res = grad_check(
        [&](const Tensor& W) { return net(Tensor::from(x0, {2, 8}), W); }, w1, {8, 16}, 1e-5);
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(23);
  auto xv = rand_vec(rng, 6);
  auto run = [&](double ca, double cb) {
    Tensor x = Tensor::param(xv, {6});
    Tensor f = mean(mul(sin(x), x));
    Tensor g = sum(exp(mul_scalar(x, 0.3)));
    Tensor combo = add(mul_scalar(f, ca), mul_scalar(g, cb));
    backward(combo);
    return x.grad();
  };
  auto gf = run(1.0, 0.0);
  auto gg = run(0.0, 1.0);
  auto gc = run(3.0, 2.0);
  for (size_t i = 0; i < xv.size(); ++i)
    REQUIRE(gc[i] == Catch::Approx(3.0 * gf[i] + 2.0 * gg[i]).epsilon(1e-12));
}

TEST_CASE("tape evaluation is bitwise deterministic") {
  auto run = [] {
    Rng rng(99);
    Tensor x = Tensor::param(rand_vec(rng, 32), {4, 8});
    Tensor W = Tensor::param(rand_vec(rng, 8 * 8), {8, 8});
    Tensor y = mean(mul(tanh(matmul(x, W)), sigmoid(x)));
    backward(y);
    std::vector<double> out = {y.item()};
    auto gx = x.grad();
    out.insert(out.end(), gx.begin(), gx.end());
    auto gw = W.grad();
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("shape mismatch raises an error naming both shapes") {
  Tensor a = Tensor::zeros({64, 3});
  Tensor b = Tensor::zeros({64, 4});
  try {
    add(a, b);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("[64,3]") != std::string::npos);
    REQUIRE(msg.find("[64,4]") != std::string::npos);
  }
}

TEST_CASE("broadcast add of a bias row and its reduction gradient") {
  Tensor x = Tensor::param({1, 2, 3, 4, 5, 6}, {2, 3});
  Tensor b = Tensor::param({10, 20, 30}, {3});
  Tensor y = sum(add(x, b));
  REQUIRE(y.item() == Catch::Approx(1 + 2 + 3 + 4 + 5 + 6 + 2 * 60));
  backward(y);
  for (double g : x.grad()) REQUIRE(g == 1.0);
  for (double g : b.grad()) REQUIRE(g == 2.0);  // summed over the leading axis
}

TEST_CASE("general broadcasting expands size-1 dims with summed gradients") {
  // [2,3] / [2,1]: per-row normalization pattern
  Tensor x = Tensor::param({2, 4, 6, 3, 6, 9}, {2, 3});
  Tensor n = Tensor::param({2, 3}, {2, 1});
  Tensor y = div(x, n);
  REQUIRE(y.at(0) == Catch::Approx(1.0));
  REQUIRE(y.at(5) == Catch::Approx(3.0));
  backward(sum(y));
  REQUIRE(x.grad()[0] == Catch::Approx(0.5));
  REQUIRE(n.grad()[0] == Catch::Approx(-(2.0 + 4.0 + 6.0) / 4.0));

  // [2,1,1] * [2,2,2]
  Tensor s = Tensor::param({2, 10}, {2, 1, 1});
  Tensor m = Tensor::from({1, 1, 1, 1, 1, 1, 1, 1}, {2, 2, 2});
  Tensor p = mul(s, m);
  REQUIRE(p.at(0) == 2.0);
  REQUIRE(p.at(7) == 10.0);
  backward(sum(p));
  REQUIRE(s.grad()[0] == 4.0);
  REQUIRE(s.grad()[1] == 4.0);

  auto res = grad_check(
      [](const Tensor& t) {
        Tensor d = Tensor::from({1.5, -0.5}, {2, 1});
        return sum(mul(div(t, d), t));
      },
      {1, 2, 3, 4, 5, 6}, {2, 3}, 1e-6);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("relu kink at zero is reported honestly by grad_check") {
  // central difference at the kink sees slope 0.5; analytic subgradient is 0 or 1
  auto res = grad_check([](const Tensor& x) { return sum(relu(x)); }, {0.0}, {1}, 1e-5);
  REQUIRE(res.max_rel_err > 0.1);
}

TEST_CASE("log of a non-positive value aborts with a numeric error") {
  Tensor x = Tensor::from({-1.0}, {1});
  REQUIRE_THROWS_AS(log(x), NumericError);
}

TEST_CASE("grid_sample2d bilinear forward, clamping, and gradients") {
  // 2x2 single-channel plane: values [[0,1],[2,3]]
  Tensor plane = Tensor::param({0, 1, 2, 3}, {2, 2, 1});
  SECTION("center point averages all four corners") {
    Tensor c = Tensor::from({0.0, 0.0}, {1, 2});
    REQUIRE(grid_sample2d(plane, c).item() == Catch::Approx(1.5));
  }
  SECTION("corners map exactly with align-corners semantics") {
    Tensor c = Tensor::from({-1.0, -1.0, 1.0, 1.0}, {2, 2});
    Tensor v = grid_sample2d(plane, c);
    REQUIRE(v.at(0) == Catch::Approx(0.0));
    REQUIRE(v.at(1) == Catch::Approx(3.0));
  }
  SECTION("out-of-range coordinates clamp to the border value") {
    Tensor c = Tensor::from({-5.0, 0.0}, {1, 2});
    Tensor v = grid_sample2d(plane, c);
    REQUIRE(v.item() == Catch::Approx(1.0));  // x clamped to col 0, y center: avg(0,2)
  }
  SECTION("plane gradient matches finite differences") {
    std::vector<double> pv = {0, 1, 2, 3};
    auto res = grad_check(
        [&](const Tensor& p) {
          Tensor c = Tensor::from({0.3, -0.2, -0.7, 0.9}, {2, 2});
          return sum(mul(grid_sample2d(p, c), grid_sample2d(p, c)));
        },
        pv, {2, 2, 1}, 1e-6);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("coords gradient matches finite differences in the interior") {
    auto res = grad_check(
        [&](const Tensor& c) {
          Tensor p = Tensor::from({0, 1, 2, 3}, {2, 2, 1});
          return sum(mul(grid_sample2d(p, c), grid_sample2d(p, c)));
        },
        {0.3, -0.2, -0.6, 0.4}, {2, 2}, 1e-6);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("clamped coordinates get zero gradient") {
    Tensor c = Tensor::param({-5.0, 0.0}, {1, 2});
    Tensor v = sum(grid_sample2d(stop_gradient(plane), c));
    backward(v);
    REQUIRE(c.grad()[0] == 0.0);
  }
}

TEST_CASE("gather ops route gradients by scatter-add") {
  Tensor table = Tensor::param({1, 2, 3, 4, 5, 6}, {3, 2});
  Tensor g = gather_rows(table, {2, 0, 2});
  REQUIRE(g.at(0) == 5.0);
  REQUIRE(g.at(5) == 6.0);
  backward(sum(g));
  REQUIRE(table.grad()[0] == 1.0);  // row 0 used once
  REQUIRE(table.grad()[2] == 0.0);  // row 1 unused
  REQUIRE(table.grad()[4] == 2.0);  // row 2 used twice

  Tensor t3 = Tensor::param({1, 2, 3, 4, 5, 6, 7, 8}, {2, 2, 2});
  Tensor gm = gather_mid(t3, {{1, 1, 0}});
  REQUIRE(gm.shape() == Shape{2, 3, 2});
  REQUIRE(gm.at(0) == 3.0);
  backward(sum(gm));
  REQUIRE(t3.grad()[0] == 1.0);
  REQUIRE(t3.grad()[2] == 2.0);
}

TEST_CASE("reduce_max_axis1 takes the first maximum and routes gradient there") {
  // rows (point index) x columns (channel): {(1,0),(5,7),(5,7),(2,1)}
  Tensor t = Tensor::param({1, 0, 5, 7, 5, 7, 2, 1}, {1, 4, 2});
  Tensor m = reduce_max_axis1(t);
  REQUIRE(m.at(0) == 5.0);
  REQUIRE(m.at(1) == 7.0);
  backward(sum(m));
  auto g = t.grad();
  REQUIRE(g[2] == 1.0);  // first 5 in channel 0 is at row 1
  REQUIRE(g[4] == 0.0);  // duplicate at row 2 gets nothing
  REQUIRE(g[3] == 1.0);  // first 7 in channel 1 is at row 1
  REQUIRE(g[5] == 0.0);
}

TEST_CASE("log_softmax rows sum to one after exponentiation and grads check out") {
  Rng rng(3);
  auto x0 = rand_vec(rng, 2 * 5, 2.0);
  Tensor x = Tensor::from(x0, {2, 5});
  Tensor ls = log_softmax(x);
  for (int r = 0; r < 2; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += std::exp(ls.at(r * 5 + c));
    REQUIRE(s == Catch::Approx(1.0).epsilon(1e-12));
  }
  auto res = grad_check(
      [&](const Tensor& t) {
        return cross_entropy(t, {3, 1});
      },
      x0, {2, 5}, 1e-6);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("stop_gradient cuts the tape and supports straight-through") {
  Tensor z = Tensor::param({1.0, 2.0}, {2});
  // pretend quantized values
  Tensor q = Tensor::from({1.4, 1.6}, {2});
  Tensor ste = add(z, stop_gradient(sub(q, z)));
  REQUIRE(ste.at(0) == Catch::Approx(1.4));
  REQUIRE(ste.at(1) == Catch::Approx(1.6));
  backward(sum(mul(ste, ste)));
  // d/dz of sum(ste^2) with straight-through = 2*ste
  REQUIRE(z.grad()[0] == Catch::Approx(2 * 1.4));
  REQUIRE(z.grad()[1] == Catch::Approx(2 * 1.6));
}

TEST_CASE("sum_last and slice/concat round trips") {
  Tensor x = Tensor::param({1, 2, 3, 4, 5, 6}, {2, 3});
  Tensor s = sum_last(x);
  REQUIRE(s.shape() == Shape{2, 1});
  REQUIRE(s.at(0) == 6.0);
  REQUIRE(s.at(1) == 15.0);

  Tensor a = slice(x, 1, 0, 1);
  Tensor b = slice(x, 1, 1, 2);
  Tensor back = concat({a, b}, 1);
  for (int i = 0; i < 6; ++i) REQUIRE(back.at(i) == x.at(i));
  backward(sum(mul(back, back)));
  for (int i = 0; i < 6; ++i) REQUIRE(x.grad()[i] == Catch::Approx(2.0 * x.at(i)));
}

TEST_CASE("adamw minimizes a quadratic and applies decoupled decay exactly") {
  SECTION("quadratic descent") {
    Tensor p = Tensor::param({5.0, -3.0}, {2});
    AdamWConfig cfg;
    cfg.lr = 0.05;
    AdamW opt({p}, cfg);
    for (int i = 0; i < 800; ++i) {
      opt.zero_grad();
      Tensor target = Tensor::from({1.0, 2.0}, {2});
      Tensor loss = mse(p, target);
      backward(loss);
      opt.step();
    }
    REQUIRE(p.at(0) == Catch::Approx(1.0).margin(1e-3));
    REQUIRE(p.at(1) == Catch::Approx(2.0).margin(1e-3));
  }
  SECTION("weight decay is decoupled from the gradient") {
    Tensor p = Tensor::param({2.0}, {1});
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    AdamW opt({p}, cfg);
    opt.zero_grad();  // gradient stays zero
    opt.step();
    REQUIRE(p.at(0) == Catch::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-15));
  }
}

TEST_CASE("checkpoint round trip is bitwise and rejects foreign files") {
  Rng rng(5);
  Tensor a = Tensor::param(rand_vec(rng, 12), {3, 4});
  Tensor b = Tensor::param(rand_vec(rng, 7), {7});
  std::string path = "ckpt_test.bin";
  save_checkpoint(path, {{"net.a", a}, {"net.b", b}});
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded.at("net.a").shape == Shape{3, 4});
  REQUIRE(std::memcmp(loaded.at("net.a").values.data(), a.value().data(), 12 * sizeof(double)) ==
          0);
  REQUIRE(std::memcmp(loaded.at("net.b").values.data(), b.value().data(), 7 * sizeof(double)) ==
          0);

  Tensor wrong = Tensor::param({0.0}, {1});
  REQUIRE_THROWS(load_into(loaded, "net.missing", wrong));
  REQUIRE_THROWS(load_into(loaded, "net.b", wrong));  // shape mismatch

  std::ofstream bad("ckpt_bad.bin", std::ios::binary);
  bad << "NOTACKPTxxxxxxxxxxxx";
  bad.close();
  REQUIRE_THROWS_WITH(load_checkpoint("ckpt_bad.bin"), Catch::Matchers::ContainsSubstring("magic"));
  std::remove(path.c_str());
  std::remove("ckpt_bad.bin");
}

TEST_CASE("warmup cosine schedule hits its endpoints") {
  REQUIRE(warmup_cosine_lr(0, 1000, 100, 1e-6, 5e-4) == Catch::Approx(1e-6));
  REQUIRE(warmup_cosine_lr(100, 1000, 100, 1e-6, 5e-4) == Catch::Approx(5e-4));
  REQUIRE(warmup_cosine_lr(1000, 1000, 100, 1e-6, 5e-4) == Catch::Approx(0.0).margin(1e-12));
}
