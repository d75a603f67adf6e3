#pragma once

// Reverse-mode automatic differentiation over dense float64 n-d arrays.
// Ops build a node graph; backward() runs the tape in reverse creation
// order.  Dense matmul kernels are backed by Eigen maps; everything else is
// straightforward loops.  All computation is deterministic: node ids come
// from a thread-local counter, and reductions run in fixed index order.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "hoi/common.hpp"

namespace hoi::diff {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Global toggle for NaN/Inf scanning of op outputs.  On by default; the cost
// is one linear pass over freshly written (cache-hot) data.
inline bool& nan_checks_enabled() {
  static bool flag = true;
  return flag;
}

class Tensor;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<Tensor> parents;
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

inline uint64_t next_node_id() {
  thread_local uint64_t counter = 0;
  return ++counter;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(std::vector<double> values, Shape shape) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      fail(str_cat("Tensor::from: ", values.size(), " values do not fill shape ", shape_str(shape)));
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = std::move(shape);
    t.n_->value = std::move(values);
    t.n_->id = next_node_id();
    return t;
  }

  static Tensor zeros(Shape shape) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
    return from(std::move(v), std::move(shape));
  }

  static Tensor full(Shape shape, double x) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), x);
    return from(std::move(v), std::move(shape));
  }

  static Tensor scalar(double x) { return from({x}, {1}); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = stddev * rng.normal();
    return from(std::move(v), std::move(shape));
  }

  // trainable leaf
  static Tensor param(std::vector<double> values, Shape shape) {
    Tensor t = from(std::move(values), std::move(shape));
    t.n_->requires_grad = true;
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t ndim() const { return static_cast<int64_t>(n_->shape.size()); }
  int64_t size(int64_t axis) const { return n_->shape[static_cast<size_t>(axis)]; }
  int64_t numel() const { return n_->numel(); }
  const std::vector<double>& value() const { return n_->value; }
  std::vector<double>& mutable_value() { return n_->value; }
  const std::vector<double>& grad() const {
    if (n_->grad.size() != n_->value.size())
      n_->grad.assign(n_->value.size(), 0.0);
    return n_->grad;
  }
  std::vector<double>& mutable_grad() {
    if (n_->grad.size() != n_->value.size()) n_->grad.assign(n_->value.size(), 0.0);
    return n_->grad;
  }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  double item() const {
    if (numel() != 1) fail(str_cat("Tensor::item: tensor has shape ", shape_str(shape())));
    return n_->value[0];
  }
  double at(int64_t i) const { return n_->value[static_cast<size_t>(i)]; }

  Node* node() const { return n_.get(); }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* op) {
  if (!nan_checks_enabled()) return;
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      fail_numeric(str_cat("op '", op, "' produced non-finite value at flat index ", i));
}

inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                          std::function<void(Node&)> backward_fn, const char* op) {
  check_finite(value, op);
  Tensor t = Tensor::from(std::move(value), std::move(shape));
  Node* n = t.node();
  for (const Tensor& p : parents)
    if (p.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return t;
}

inline void ensure_grad(Node* n) {
  if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
}

// Broadcast kinds for binary elementwise ops.  Fast paths: identical shapes,
// or the smaller operand's shape is a trailing suffix of the larger's
// (scalars, bias rows, per-channel factors).  Everything else falls back to
// general right-aligned broadcasting where size-1 dims expand.
enum class Bc { same, b_suffix, a_suffix, general };

inline Bc resolve_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Bc::same;
  auto is_suffix = [](const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    size_t off = big.size() - small.size();
    for (size_t i = 0; i < small.size(); ++i)
      if (small[i] != big[off + i]) return false;
    return true;
  };
  if (shape_numel(b) == 1 || is_suffix(b, a)) return Bc::b_suffix;
  if (shape_numel(a) == 1 || is_suffix(a, b)) return Bc::a_suffix;
  // general: right-aligned, each dim must match or be 1 on one side
  size_t nd = std::max(a.size(), b.size());
  for (size_t i = 0; i < nd; ++i) {
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      fail(str_cat("op '", op, "': shape mismatch ", shape_str(a), " vs ", shape_str(b)));
  }
  return Bc::general;
}

// Index maps for the general broadcast case: for each flat output index,
// the corresponding flat index into each operand.
struct BcPlan {
  Shape out_shape;
  std::vector<int64_t> ia, ib;
};

inline BcPlan make_broadcast_plan(const Shape& a, const Shape& b) {
  size_t nd = std::max(a.size(), b.size());
  Shape out(nd), sa(nd, 1), sb(nd, 1);
  for (size_t i = 0; i < nd; ++i) {
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    out[nd - 1 - i] = std::max(da, db);
    sa[nd - 1 - i] = da;
    sb[nd - 1 - i] = db;
  }
  // row-major strides with 0 for broadcast dims
  std::vector<int64_t> stra(nd), strb(nd);
  int64_t ra = 1, rb = 1;
  for (size_t i = nd; i-- > 0;) {
    stra[i] = (sa[i] == 1) ? 0 : ra;
    strb[i] = (sb[i] == 1) ? 0 : rb;
    ra *= sa[i];
    rb *= sb[i];
  }
  int64_t total = shape_numel(out);
  BcPlan plan;
  plan.out_shape = out;
  plan.ia.resize(static_cast<size_t>(total));
  plan.ib.resize(static_cast<size_t>(total));
  std::vector<int64_t> coord(nd, 0);
  for (int64_t f = 0; f < total; ++f) {
    int64_t pa = 0, pb = 0;
    for (size_t d = 0; d < nd; ++d) {
      pa += coord[d] * stra[d];
      pb += coord[d] * strb[d];
    }
    plan.ia[static_cast<size_t>(f)] = pa;
    plan.ib[static_cast<size_t>(f)] = pb;
    for (size_t d = nd; d-- > 0;) {
      if (++coord[d] < out[d]) break;
      coord[d] = 0;
    }
  }
  return plan;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

}  // namespace detail

// ---------------------------------------------------------------------------
// binary elementwise ops (with trailing-suffix broadcast)
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  Bc kind = resolve_broadcast(a.shape(), b.shape(), name);

  if (kind == Bc::general) {
    auto plan = std::make_shared<BcPlan>(make_broadcast_plan(a.shape(), b.shape()));
    int64_t total = shape_numel(plan->out_shape);
    std::vector<double> out(static_cast<size_t>(total));
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int64_t i = 0; i < total; ++i)
      out[i] = fwd(av[plan->ia[static_cast<size_t>(i)]], bv[plan->ib[static_cast<size_t>(i)]]);
    auto backward = [plan, bwd](Node& n) {
      Node* pa = n.parents[0].node();
      Node* pb = n.parents[1].node();
      if (pa->requires_grad) ensure_grad(pa);
      if (pb->requires_grad) ensure_grad(pb);
      for (int64_t i = 0; i < n.numel(); ++i) {
        int64_t ia = plan->ia[static_cast<size_t>(i)], ib = plan->ib[static_cast<size_t>(i)];
        double gx, gy;
        bwd(pa->value[ia], pb->value[ib], n.value[i], n.grad[i], gx, gy);
        if (pa->requires_grad) pa->grad[ia] += gx;
        if (pb->requires_grad) pb->grad[ib] += gy;
      }
    };
    return make_result(plan->out_shape, std::move(out), {a, b}, backward, name);
  }

  const Tensor& big = (kind == Bc::a_suffix) ? b : a;
  const Tensor& small = (kind == Bc::a_suffix) ? a : b;
  bool swapped = (kind == Bc::a_suffix);
  int64_t bn = small.numel(), total = big.numel();
  std::vector<double> out(static_cast<size_t>(total));
  const auto& bv = big.value();
  const auto& sv = small.value();
  for (int64_t i = 0; i < total; ++i) {
    double x = swapped ? sv[i % bn] : bv[i];
    double y = swapped ? bv[i] : sv[i % bn];
    out[i] = fwd(x, y);
  }
  auto backward = [swapped, bn, bwd](Node& n) {
    Node* pa = n.parents[0].node();
    Node* pb = n.parents[1].node();
    const auto& av = pa->value;
    const auto& bvv = pb->value;
    bool a_is_small = swapped;
    if (pa->requires_grad) ensure_grad(pa);
    if (pb->requires_grad) ensure_grad(pb);
    int64_t total2 = n.numel();
    for (int64_t i = 0; i < total2; ++i) {
      double g = n.grad[i];
      int64_t ia = a_is_small ? (i % bn) : i;
      int64_t ib = a_is_small ? i : (i % bn);
      double x = av[ia], y = bvv[ib];
      double gx, gy;
      bwd(x, y, n.value[i], g, gx, gy);
      if (pa->requires_grad) pa->grad[ia] += gx;
      if (pb->requires_grad) pb->grad[ib] += gy;
    }
  };
  return make_result(big.shape(), std::move(out), {a, b}, backward, name);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "add", [](double x, double y) { return x + y; },
                           [](double, double, double, double g, double& gx, double& gy) {
                             gx = g;
                             gy = g;
                           });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                           [](double, double, double, double g, double& gx, double& gy) {
                             gx = g;
                             gy = -g;
                           });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                           [](double x, double y, double, double g, double& gx, double& gy) {
                             gx = g * y;
                             gy = g * x;
                           });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "div", [](double x, double y) { return x / y; },
                           [](double x, double y, double, double g, double& gx, double& gy) {
                             gx = g / y;
                             gy = -g * x / (y * y);
                           });
}

// ---------------------------------------------------------------------------
// unary ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
  int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const auto& av = a.value();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  auto backward = [bwd](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    ensure_grad(p);
    const auto& xv = p->value;
    for (int64_t i = 0; i < nd.numel(); ++i) p->grad[i] += nd.grad[i] * bwd(xv[i], nd.value[i]);
  };
  return make_result(a.shape(), std::move(out), {a}, backward, name);
}

}  // namespace detail

inline Tensor neg(const Tensor& a) {
  return detail::unary_op(a, "neg", [](double x) { return -x; },
                          [](double, double) { return -1.0; });
}
inline Tensor exp(const Tensor& a) {
  return detail::unary_op(a, "exp", [](double x) { return std::exp(x); },
                          [](double, double y) { return y; });
}
inline Tensor log(const Tensor& a) {
  return detail::unary_op(a, "log", [](double x) { return std::log(x); },
                          [](double x, double) { return 1.0 / x; });
}
inline Tensor sqrt(const Tensor& a) {
  return detail::unary_op(a, "sqrt", [](double x) { return std::sqrt(x); },
                          [](double, double y) { return 0.5 / y; });
}
inline Tensor sin(const Tensor& a) {
  return detail::unary_op(a, "sin", [](double x) { return std::sin(x); },
                          [](double x, double) { return std::cos(x); });
}
inline Tensor cos(const Tensor& a) {
  return detail::unary_op(a, "cos", [](double x) { return std::cos(x); },
                          [](double x, double) { return -std::sin(x); });
}
inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(a, "tanh", [](double x) { return std::tanh(x); },
                          [](double, double y) { return 1.0 - y * y; });
}
inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                          [](double, double y) { return y * (1.0 - y); });
}
inline Tensor relu(const Tensor& a) {
  return detail::unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}
inline Tensor gelu(const Tensor& a) {
  // exact Gaussian-CDF form
  return detail::unary_op(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return cdf + x * pdf;
      });
}
inline Tensor abs(const Tensor& a) {
  // subgradient 0 at the kink
  return detail::unary_op(a, "abs", [](double x) { return std::fabs(x); },
                          [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}
inline Tensor pow_scalar(const Tensor& a, double p) {
  return detail::unary_op(a, "pow_scalar", [p](double x) { return std::pow(x, p); },
                          [p](double x, double) { return p * std::pow(x, p - 1.0); });
}
inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary_op(a, "add_scalar", [c](double x) { return x + c; },
                          [](double, double) { return 1.0; });
}
inline Tensor mul_scalar(const Tensor& a, double c) {
  return detail::unary_op(a, "mul_scalar", [c](double x) { return x * c; },
                          [c](double, double) { return c; });
}

inline Tensor stop_gradient(const Tensor& a) {
  // forward copy with no parents: gradient flow ends here
  return Tensor::from(a.value(), a.shape());
}

// ---------------------------------------------------------------------------
// matmul (2d, batched 3d, and 2d/3d broadcast)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  using namespace detail;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto bad = [&] {
    fail(str_cat("op 'matmul': incompatible shapes ", shape_str(sa), " vs ", shape_str(sb)));
  };
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3) bad();

  int64_t m, k, n, batch;
  Shape out_shape;
  enum { MM22, MM32, MM23, MM33 } mode;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) bad();
    out_shape = {m, n};
    batch = 1;
    mode = MM22;
  } else if (sa.size() == 3 && sb.size() == 2) {
    batch = sa[0], m = sa[1], k = sa[2], n = sb[1];
    if (sb[0] != k) bad();
    out_shape = {batch, m, n};
    mode = MM32;
  } else if (sa.size() == 2 && sb.size() == 3) {
    batch = sb[0], m = sa[0], k = sa[1], n = sb[2];
    if (sb[1] != k) bad();
    out_shape = {batch, m, n};
    mode = MM23;
  } else {
    batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
    if (sb[0] != batch || sb[1] != k) bad();
    out_shape = {batch, m, n};
    mode = MM33;
  }

  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* pc = out.data();
  switch (mode) {
    case MM22:
      MMap(pc, m, n).noalias() = CMap(pa, m, k) * CMap(pb, k, n);
      break;
    case MM32:
      MMap(pc, batch * m, n).noalias() = CMap(pa, batch * m, k) * CMap(pb, k, n);
      break;
    case MM23:
      for (int64_t i = 0; i < batch; ++i)
        MMap(pc + i * m * n, m, n).noalias() = CMap(pa, m, k) * CMap(pb + i * k * n, k, n);
      break;
    case MM33:
      for (int64_t i = 0; i < batch; ++i)
        MMap(pc + i * m * n, m, n).noalias() =
            CMap(pa + i * m * k, m, k) * CMap(pb + i * k * n, k, n);
      break;
  }

  auto backward = [m, k, n, batch, mode](Node& nd) {
    Node* na = nd.parents[0].node();
    Node* nb = nd.parents[1].node();
    const double* av = na->value.data();
    const double* bv = nb->value.data();
    const double* g = nd.grad.data();
    if (na->requires_grad) ensure_grad(na);
    if (nb->requires_grad) ensure_grad(nb);
    double* ga = na->requires_grad ? na->grad.data() : nullptr;
    double* gb = nb->requires_grad ? nb->grad.data() : nullptr;
    switch (mode) {
      case MM22:
        if (ga) MMap(ga, m, k).noalias() += CMap(g, m, n) * CMap(bv, k, n).transpose();
        if (gb) MMap(gb, k, n).noalias() += CMap(av, m, k).transpose() * CMap(g, m, n);
        break;
      case MM32:
        if (ga)
          MMap(ga, batch * m, k).noalias() += CMap(g, batch * m, n) * CMap(bv, k, n).transpose();
        if (gb)
          MMap(gb, k, n).noalias() += CMap(av, batch * m, k).transpose() * CMap(g, batch * m, n);
        break;
      case MM23:
        for (int64_t i = 0; i < batch; ++i) {
          if (ga)
            MMap(ga, m, k).noalias() +=
                CMap(g + i * m * n, m, n) * CMap(bv + i * k * n, k, n).transpose();
          if (gb)
            MMap(gb + i * k * n, k, n).noalias() +=
                CMap(av, m, k).transpose() * CMap(g + i * m * n, m, n);
        }
        break;
      case MM33:
        for (int64_t i = 0; i < batch; ++i) {
          if (ga)
            MMap(ga + i * m * k, m, k).noalias() +=
                CMap(g + i * m * n, m, n) * CMap(bv + i * k * n, k, n).transpose();
          if (gb)
            MMap(gb + i * k * n, k, n).noalias() +=
                CMap(av + i * m * k, m, k).transpose() * CMap(g + i * m * n, m, n);
        }
        break;
    }
  };
  return detail::make_result(std::move(out_shape), std::move(out), {a, b}, backward, "matmul");
}

// transpose of the last two axes ([m,n] or [B,m,n])
inline Tensor transpose_last2(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 2 && s.size() != 3)
    fail(str_cat("op 'transpose_last2': need 2d or 3d tensor, got ", shape_str(s)));
  int64_t batch = s.size() == 3 ? s[0] : 1;
  int64_t m = s[s.size() - 2], n = s[s.size() - 1];
  Shape out_shape = s;
  out_shape[s.size() - 2] = n;
  out_shape[s.size() - 1] = m;
  std::vector<double> out(static_cast<size_t>(a.numel()));
  const auto& av = a.value();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = av[b * m * n + i * n + j];
  auto backward = [batch, m, n](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          p->grad[b * m * n + i * n + j] += nd.grad[b * m * n + j * m + i];
  };
  return detail::make_result(std::move(out_shape), std::move(out), {a}, backward,
                             "transpose_last2");
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  auto backward = [](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    double g = nd.grad[0];
    for (auto& gx : p->grad) gx += g;
  };
  return detail::make_result({1}, {s}, {a}, backward, "sum");
}

inline Tensor mean(const Tensor& a) {
  int64_t n = a.numel();
  if (n == 0) fail("op 'mean': empty tensor");
  double s = 0.0;
  for (double x : a.value()) s += x;
  auto backward = [n](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    double g = nd.grad[0] / static_cast<double>(n);
    for (auto& gx : p->grad) gx += g;
  };
  return detail::make_result({1}, {s / static_cast<double>(n)}, {a}, backward, "mean");
}

// sum over the last axis, keeping it as size 1
inline Tensor sum_last(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty()) fail("op 'sum_last': scalar input");
  int64_t inner = s.back();
  int64_t outer = a.numel() / inner;
  Shape out_shape = s;
  out_shape.back() = 1;
  std::vector<double> out(static_cast<size_t>(outer));
  const auto& av = a.value();
  for (int64_t i = 0; i < outer; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < inner; ++j) acc += av[i * inner + j];
    out[i] = acc;
  }
  auto backward = [outer, inner](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t i = 0; i < outer; ++i)
      for (int64_t j = 0; j < inner; ++j) p->grad[i * inner + j] += nd.grad[i];
  };
  return detail::make_result(std::move(out_shape), std::move(out), {a}, backward, "sum_last");
}

// max over axis 1 of [B,n,C]; ties resolve to the lowest index
inline Tensor reduce_max_axis1(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 3) fail(str_cat("op 'reduce_max_axis1': need 3d tensor, got ", shape_str(s)));
  int64_t B = s[0], n = s[1], C = s[2];
  if (n == 0) fail("op 'reduce_max_axis1': empty reduction axis");
  std::vector<double> out(static_cast<size_t>(B * C));
  auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C), 0);
  const auto& av = a.value();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      double best = av[b * n * C + c];
      int64_t bi = 0;
      for (int64_t i = 1; i < n; ++i) {
        double x = av[(b * n + i) * C + c];
        if (x > best) {
          best = x;
          bi = i;
        }
      }
      out[b * C + c] = best;
      (*arg)[b * C + c] = bi;
    }
  auto backward = [B, n, C, arg](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        p->grad[(b * n + (*arg)[b * C + c]) * C + c] += nd.grad[b * C + c];
  };
  return detail::make_result({B, C}, std::move(out), {a}, backward, "reduce_max_axis1");
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    fail(str_cat("op 'reshape': cannot view ", shape_str(a.shape()), " as ", shape_str(shape)));
  auto backward = [](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t i = 0; i < nd.numel(); ++i) p->grad[i] += nd.grad[i];
  };
  return detail::make_result(std::move(shape), a.value(), {a}, backward, "reshape");
}

inline Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) fail("op 'concat': no inputs");
  const Shape& s0 = parts[0].shape();
  int64_t nd = static_cast<int64_t>(s0.size());
  if (axis < 0 || axis >= nd) fail(str_cat("op 'concat': bad axis ", axis, " for ", shape_str(s0)));
  Shape out_shape = s0;
  int64_t axis_total = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (static_cast<int64_t>(s.size()) != nd)
      fail(str_cat("op 'concat': rank mismatch ", shape_str(s0), " vs ", shape_str(s)));
    for (int64_t d = 0; d < nd; ++d)
      if (d != axis && s[d] != s0[d])
        fail(str_cat("op 'concat': shape mismatch ", shape_str(s0), " vs ", shape_str(s)));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= s0[d];
  for (int64_t d = axis + 1; d < nd; ++d) inner *= s0[d];
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  int64_t out_stride = axis_total * inner;
  int64_t off = 0;
  for (const Tensor& t : parts) {
    int64_t len = t.size(axis) * inner;
    const auto& tv = t.value();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * out_stride + off, tv.data() + o * len,
                  static_cast<size_t>(len) * sizeof(double));
    off += len;
  }
  auto backward = [outer, inner, out_stride](Node& nd) {
    int64_t off2 = 0;
    for (Tensor& pt : nd.parents) {
      Node* p = pt.node();
      int64_t len = p->numel() / (outer == 0 ? 1 : outer);
      (void)inner;
      if (p->requires_grad) {
        detail::ensure_grad(p);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < len; ++i) p->grad[o * len + i] += nd.grad[o * out_stride + off2 + i];
      }
      off2 += len;
    }
  };
  return detail::make_result(std::move(out_shape), std::move(out), parts, backward, "concat");
}

inline Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  int64_t nd = static_cast<int64_t>(s.size());
  if (axis < 0 || axis >= nd) fail(str_cat("op 'slice': bad axis ", axis, " for ", shape_str(s)));
  if (start < 0 || len < 0 || start + len > s[axis])
    fail(str_cat("op 'slice': range [", start, ",", start + len, ") out of bounds for ",
                 shape_str(s), " axis ", axis));
  Shape out_shape = s;
  out_shape[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= s[d];
  for (int64_t d = axis + 1; d < nd; ++d) inner *= s[d];
  int64_t in_stride = s[axis] * inner;
  int64_t out_len = len * inner;
  std::vector<double> out(static_cast<size_t>(outer * out_len));
  const auto& av = a.value();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_len, av.data() + o * in_stride + start * inner,
                static_cast<size_t>(out_len) * sizeof(double));
  auto backward = [outer, inner, in_stride, out_len, start](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < out_len; ++i)
        p->grad[o * in_stride + start * inner + i] += nd.grad[o * out_len + i];
  };
  return detail::make_result(std::move(out_shape), std::move(out), {a}, backward, "slice");
}

// ---------------------------------------------------------------------------
// gathers
// ---------------------------------------------------------------------------

// rows of a [K,D] table; backward scatter-adds into the table
inline Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& idx) {
  const Shape& s = table.shape();
  if (s.size() != 2) fail(str_cat("op 'gather_rows': need 2d table, got ", shape_str(s)));
  int64_t K = s[0], D = s[1], n = static_cast<int64_t>(idx.size());
  std::vector<double> out(static_cast<size_t>(n * D));
  const auto& tv = table.value();
  for (int64_t i = 0; i < n; ++i) {
    int64_t r = idx[static_cast<size_t>(i)];
    if (r < 0 || r >= K) fail(str_cat("op 'gather_rows': index ", r, " out of range [0,", K, ")"));
    std::memcpy(out.data() + i * D, tv.data() + r * D, static_cast<size_t>(D) * sizeof(double));
  }
  auto ix = std::make_shared<std::vector<int64_t>>(idx);
  auto backward = [ix, D](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (size_t i = 0; i < ix->size(); ++i)
      for (int64_t d = 0; d < D; ++d)
        p->grad[(*ix)[i] * D + d] += nd.grad[static_cast<int64_t>(i) * D + d];
  };
  return detail::make_result({n, D}, std::move(out), {table}, backward, "gather_rows");
}

// batched gather over axis 1 of [B,N,D]; idx is either shared ([n]) or
// per-batch ([B][n]); backward scatter-adds
inline Tensor gather_mid(const Tensor& t, const std::vector<std::vector<int64_t>>& idx) {
  const Shape& s = t.shape();
  if (s.size() != 3) fail(str_cat("op 'gather_mid': need 3d tensor, got ", shape_str(s)));
  int64_t B = s[0], N = s[1], D = s[2];
  if (static_cast<int64_t>(idx.size()) != B && idx.size() != 1)
    fail(str_cat("op 'gather_mid': index batch ", idx.size(), " does not match tensor batch ", B));
  int64_t n = static_cast<int64_t>(idx[0].size());
  std::vector<double> out(static_cast<size_t>(B * n * D));
  const auto& tv = t.value();
  for (int64_t b = 0; b < B; ++b) {
    const auto& row = idx[idx.size() == 1 ? 0 : static_cast<size_t>(b)];
    if (static_cast<int64_t>(row.size()) != n) fail("op 'gather_mid': ragged index rows");
    for (int64_t i = 0; i < n; ++i) {
      int64_t r = row[static_cast<size_t>(i)];
      if (r < 0 || r >= N)
        fail(str_cat("op 'gather_mid': index ", r, " out of range [0,", N, ")"));
      std::memcpy(out.data() + (b * n + i) * D, tv.data() + (b * N + r) * D,
                  static_cast<size_t>(D) * sizeof(double));
    }
  }
  auto ix = std::make_shared<std::vector<std::vector<int64_t>>>(idx);
  auto backward = [ix, B, N, D, n](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t b = 0; b < B; ++b) {
      const auto& row = (*ix)[ix->size() == 1 ? 0 : static_cast<size_t>(b)];
      for (int64_t i = 0; i < n; ++i)
        for (int64_t d = 0; d < D; ++d)
          p->grad[(b * N + row[static_cast<size_t>(i)]) * D + d] += nd.grad[(b * n + i) * D + d];
    }
  };
  return detail::make_result({B, n, D}, std::move(out), {t}, backward, "gather_mid");
}

// per-row gather over the last axis of [B,K]: out[b] = t[b, idx[b]]
inline Tensor gather_last(const Tensor& t, const std::vector<int64_t>& idx) {
  const Shape& s = t.shape();
  if (s.size() != 2) fail(str_cat("op 'gather_last': need 2d tensor, got ", shape_str(s)));
  int64_t B = s[0], K = s[1];
  if (static_cast<int64_t>(idx.size()) != B) fail("op 'gather_last': index count mismatch");
  std::vector<double> out(static_cast<size_t>(B));
  const auto& tv = t.value();
  for (int64_t b = 0; b < B; ++b) {
    int64_t r = idx[static_cast<size_t>(b)];
    if (r < 0 || r >= K) fail(str_cat("op 'gather_last': index ", r, " out of range [0,", K, ")"));
    out[b] = tv[b * K + r];
  }
  auto ix = std::make_shared<std::vector<int64_t>>(idx);
  auto backward = [ix, K](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (size_t b = 0; b < ix->size(); ++b)
      p->grad[static_cast<int64_t>(b) * K + (*ix)[b]] += nd.grad[static_cast<int64_t>(b)];
  };
  return detail::make_result({B, 1}, std::move(out), {t}, backward, "gather_last");
}

// ---------------------------------------------------------------------------
// grid sampling (bilinear, clamped to the border; align-corners semantics:
// coordinate -1 maps to index 0 and +1 to index size-1)
// ---------------------------------------------------------------------------

inline Tensor grid_sample2d(const Tensor& plane, const Tensor& coords) {
  const Shape& ps = plane.shape();
  const Shape& cs = coords.shape();
  bool batched = ps.size() == 4;
  if (!(ps.size() == 3 || ps.size() == 4))
    fail(str_cat("op 'grid_sample2d': plane must be [H,W,C] or [B,H,W,C], got ", shape_str(ps)));
  if (!((batched && cs.size() == 3) || (!batched && cs.size() == 2)) || cs.back() != 2)
    fail(str_cat("op 'grid_sample2d': coords ", shape_str(cs), " do not match plane ",
                 shape_str(ps)));
  int64_t B = batched ? ps[0] : 1;
  int64_t H = ps[batched ? 1 : 0], W = ps[batched ? 2 : 1], C = ps[batched ? 3 : 2];
  int64_t n = cs[batched ? 1 : 0];
  if (batched && cs[0] != B) fail("op 'grid_sample2d': batch mismatch");

  struct Corner {
    int64_t r0, c0, r1, c1;
    double wr, wc;
    bool clamped_x, clamped_y;
  };
  auto corners = std::make_shared<std::vector<Corner>>(static_cast<size_t>(B * n));
  std::vector<double> out(static_cast<size_t>(B * n * C));
  const auto& pv = plane.value();
  const auto& cv = coords.value();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < n; ++i) {
      double x = cv[(b * n + i) * 2 + 0];
      double y = cv[(b * n + i) * 2 + 1];
      Corner& k = (*corners)[static_cast<size_t>(b * n + i)];
      k.clamped_x = x < -1.0 || x > 1.0;
      k.clamped_y = y < -1.0 || y > 1.0;
      double col = (std::clamp(x, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(W - 1);
      double row = (std::clamp(y, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(H - 1);
      k.c0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(col)), 0, W - 1);
      k.r0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(row)), 0, H - 1);
      k.c1 = std::min<int64_t>(k.c0 + 1, W - 1);
      k.r1 = std::min<int64_t>(k.r0 + 1, H - 1);
      k.wc = col - static_cast<double>(k.c0);
      k.wr = row - static_cast<double>(k.r0);
      const double* P = pv.data() + b * H * W * C;
      double* O = out.data() + (b * n + i) * C;
      for (int64_t c = 0; c < C; ++c) {
        double v00 = P[(k.r0 * W + k.c0) * C + c], v01 = P[(k.r0 * W + k.c1) * C + c];
        double v10 = P[(k.r1 * W + k.c0) * C + c], v11 = P[(k.r1 * W + k.c1) * C + c];
        O[c] = (1.0 - k.wr) * ((1.0 - k.wc) * v00 + k.wc * v01) +
               k.wr * ((1.0 - k.wc) * v10 + k.wc * v11);
      }
    }

  Shape out_shape = batched ? Shape{B, n, C} : Shape{n, C};
  auto backward = [corners, B, H, W, C, n](Node& nd) {
    Node* pp = nd.parents[0].node();
    Node* pc = nd.parents[1].node();
    if (pp->requires_grad) detail::ensure_grad(pp);
    if (pc->requires_grad) detail::ensure_grad(pc);
    const auto& pv2 = pp->value;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < n; ++i) {
        const Corner& k = (*corners)[static_cast<size_t>(b * n + i)];
        const double* g = nd.grad.data() + (b * n + i) * C;
        double* GP = pp->requires_grad ? pp->grad.data() + b * H * W * C : nullptr;
        const double* P = pv2.data() + b * H * W * C;
        double dx = 0.0, dy = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          double w00 = (1.0 - k.wr) * (1.0 - k.wc), w01 = (1.0 - k.wr) * k.wc;
          double w10 = k.wr * (1.0 - k.wc), w11 = k.wr * k.wc;
          if (GP) {
            GP[(k.r0 * W + k.c0) * C + c] += w00 * g[c];
            GP[(k.r0 * W + k.c1) * C + c] += w01 * g[c];
            GP[(k.r1 * W + k.c0) * C + c] += w10 * g[c];
            GP[(k.r1 * W + k.c1) * C + c] += w11 * g[c];
          }
          if (pc->requires_grad) {
            double v00 = P[(k.r0 * W + k.c0) * C + c], v01 = P[(k.r0 * W + k.c1) * C + c];
            double v10 = P[(k.r1 * W + k.c0) * C + c], v11 = P[(k.r1 * W + k.c1) * C + c];
            double dcol = (1.0 - k.wr) * (v01 - v00) + k.wr * (v11 - v10);
            double drow = (1.0 - k.wc) * (v10 - v00) + k.wc * (v11 - v01);
            dx += g[c] * dcol;
            dy += g[c] * drow;
          }
        }
        if (pc->requires_grad) {
          // out-of-range coordinates clamp, so their gradient is zero
          if (!k.clamped_x)
            pc->grad[(b * n + i) * 2 + 0] += dx * 0.5 * static_cast<double>(W - 1);
          if (!k.clamped_y)
            pc->grad[(b * n + i) * 2 + 1] += dy * 0.5 * static_cast<double>(H - 1);
        }
      }
  };
  return detail::make_result(std::move(out_shape), std::move(out), {plane, coords}, backward,
                             "grid_sample2d");
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

inline Tensor log_softmax(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty()) fail("op 'log_softmax': scalar input");
  int64_t inner = s.back();
  int64_t outer = a.numel() / inner;
  std::vector<double> out(static_cast<size_t>(a.numel()));
  const auto& av = a.value();
  for (int64_t o = 0; o < outer; ++o) {
    double mx = av[o * inner];
    for (int64_t j = 1; j < inner; ++j) mx = std::max(mx, av[o * inner + j]);
    double lse = 0.0;
    for (int64_t j = 0; j < inner; ++j) lse += std::exp(av[o * inner + j] - mx);
    lse = mx + std::log(lse);
    for (int64_t j = 0; j < inner; ++j) out[o * inner + j] = av[o * inner + j] - lse;
  }
  auto backward = [outer, inner](Node& nd) {
    Node* p = nd.parents[0].node();
    if (!p->requires_grad) return;
    detail::ensure_grad(p);
    for (int64_t o = 0; o < outer; ++o) {
      double gsum = 0.0;
      for (int64_t j = 0; j < inner; ++j) gsum += nd.grad[o * inner + j];
      for (int64_t j = 0; j < inner; ++j)
        p->grad[o * inner + j] += nd.grad[o * inner + j] - std::exp(nd.value[o * inner + j]) * gsum;
    }
  };
  return detail::make_result(a.shape(), std::move(out), {a}, backward, "log_softmax");
}

inline Tensor softmax(const Tensor& a) { return exp(log_softmax(a)); }

// ---------------------------------------------------------------------------
// convenience compositions
// ---------------------------------------------------------------------------

inline Tensor mse(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return mean(mul(d, d));
}

inline Tensor l1(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

inline Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
  return add(matmul(x, W), b);
}

inline Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels) {
  return mul_scalar(mean(gather_last(log_softmax(logits), labels)), -1.0);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    fail(str_cat("backward: loss must be scalar, got shape ", shape_str(loss.shape())));
  if (!loss.requires_grad())
    fail("backward: loss does not depend on any parameter (requires_grad is false)");

  // collect reachable grad-requiring nodes
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const Tensor& p : n->parents) {
      Node* pn = p.node();
      if (pn->requires_grad && !seen.count(pn)) {
        seen.insert(pn);
        stack.push_back(pn);
      }
    }
  }
  // reverse creation order == valid reverse-topological order
  std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->id > b->id; });
  for (Node* n : nodes) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (Node* n : nodes)
    if (n->backward_fn) n->backward_fn(*n);
  if (nan_checks_enabled()) {
    for (Node* n : nodes)
      if (n->parents.empty())
        detail::check_finite(n->grad, "backward(leaf gradient)");
  }
}

}  // namespace hoi::diff
