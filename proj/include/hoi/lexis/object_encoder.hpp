#pragma once

// Object shape encoder: a small point-cloud network (shared per-point MLP +
// channel-wise max-pool) producing a 64-D global descriptor f_O from the
// object's canonical point cloud.  The encoder is pretrained on synthetic
// shape classification over the five object classes, then frozen; downstream
// networks consume its output as a constant conditioning vector.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hoi/common.hpp"
#include "hoi/diff/adamw.hpp"
#include "hoi/diff/tensor.hpp"
#include "hoi/geom/trimesh.hpp"
#include "hoi/synth/objects.hpp"

namespace hoi::lexis {

inline constexpr int64_t kObjectFeatureDim = 64;
inline constexpr int64_t kMinObjectPoints = 32;

class ObjectEncoder {
 public:
  // Random (untrained) encoder; max-pool invariances hold for any weights.
  explicit ObjectEncoder(uint64_t seed = 1) { init(seed); }

  // points [B,n,3] -> descriptors [B,64]: per-point MLP, then max over points
  diff::Tensor forward(const diff::Tensor& points) const {
    using namespace diff;
    if (points.ndim() != 3 || points.size(2) != 3)
      fail(str_cat("object_encoder: points must be [B,n,3], got ", shape_str(points.shape())));
    if (points.size(1) < kMinObjectPoints)
      fail(str_cat("object_encoder: need at least ", kMinObjectPoints, " points, got ",
                   points.size(1)));
    Tensor h = gelu(affine(points, w1_, b1_));
    h = gelu(affine(h, w2_, b2_));
    h = affine(h, w3_, b3_);
    return reduce_max_axis1(h);  // [B,64]
  }

  // single canonical cloud -> plain descriptor
  std::vector<double> encode(const std::vector<geom::V3>& cloud) const {
    int64_t n = static_cast<int64_t>(cloud.size());
    if (n < kMinObjectPoints)
      fail(str_cat("object_encoder: need at least ", kMinObjectPoints, " points, got ", n));
    std::vector<double> flat(static_cast<size_t>(n) * 3);
    for (int64_t i = 0; i < n; ++i) {
      flat[static_cast<size_t>(i * 3 + 0)] = cloud[static_cast<size_t>(i)].x;
      flat[static_cast<size_t>(i * 3 + 1)] = cloud[static_cast<size_t>(i)].y;
      flat[static_cast<size_t>(i * 3 + 2)] = cloud[static_cast<size_t>(i)].z;
    }
    diff::Tensor f = forward(diff::Tensor::from(std::move(flat), {1, n, 3}));
    return f.value();
  }

  std::vector<diff::Tensor> params() { return {w1_, b1_, w2_, b2_, w3_, b3_}; }

  std::vector<std::pair<std::string, diff::Tensor>> named_params() const {
    return {{"objenc.w1", w1_}, {"objenc.b1", b1_}, {"objenc.w2", w2_}, {"objenc.b2", b2_},
            {"objenc.w3", w3_}, {"objenc.b3", b3_}};
  }

  // Drop gradient tracking; the encoder is inference-only afterwards.
  void freeze() {
    for (diff::Tensor* t : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_})
      *t = diff::Tensor::from(t->value(), t->shape());
    frozen_ = true;
  }
  bool frozen() const { return frozen_; }

  void load_values(const std::string& name, const std::vector<double>& v) {
    for (auto& [n, t] : std::vector<std::pair<std::string, diff::Tensor*>>{
             {"objenc.w1", &w1_}, {"objenc.b1", &b1_}, {"objenc.w2", &w2_}, {"objenc.b2", &b2_},
             {"objenc.w3", &w3_}, {"objenc.b3", &b3_}}) {
      if (n != name) continue;
      if (v.size() != t->value().size()) fail(str_cat("object_encoder: bad size for ", name));
      t->mutable_value() = v;
      return;
    }
    fail(str_cat("object_encoder: unknown weight ", name));
  }

 private:
  void init(uint64_t seed) {
    using diff::Tensor;
    Rng rng(substream_seed(seed, 0x0B1EC7ull));
    auto layer = [&](int64_t in, int64_t out) {
      std::vector<double> w(static_cast<size_t>(in * out));
      double s = std::sqrt(2.0 / static_cast<double>(in));
      for (auto& x : w) x = s * rng.normal();
      return Tensor::param(std::move(w), {in, out});
    };
    w1_ = layer(3, 64);
    b1_ = Tensor::param(std::vector<double>(64, 0.0), {64});
    w2_ = layer(64, 64);
    b2_ = Tensor::param(std::vector<double>(64, 0.0), {64});
    w3_ = layer(64, kObjectFeatureDim);
    b3_ = Tensor::param(std::vector<double>(static_cast<size_t>(kObjectFeatureDim), 0.0),
                        {kObjectFeatureDim});
  }

  diff::Tensor w1_, b1_, w2_, b2_, w3_, b3_;
  bool frozen_ = false;
};

namespace detail {

// Augmented training cloud: random subset of the canonical samples plus
// coordinate jitter and a mild uniform rescale.
inline std::vector<double> augmented_cloud(synth::ObjectClass oc, int64_t n, Rng& rng) {
  const auto& samples = synth::object_canonical_samples(oc);
  auto pts = geom::sample_positions(synth::canonical_object(oc), samples);
  double scale = rng.uniform(0.9, 1.1);
  std::vector<double> flat(static_cast<size_t>(n) * 3);
  for (int64_t i = 0; i < n; ++i) {
    const geom::V3& p = pts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pts.size()) - 1))];
    flat[static_cast<size_t>(i * 3 + 0)] = scale * p.x + 0.01 * rng.normal();
    flat[static_cast<size_t>(i * 3 + 1)] = scale * p.y + 0.01 * rng.normal();
    flat[static_cast<size_t>(i * 3 + 2)] = scale * p.z + 0.01 * rng.normal();
  }
  return flat;
}

}  // namespace detail

// Pretrain on synthetic shape classification (five classes), then freeze.
// Deterministic per seed.
inline ObjectEncoder pretrain_object_encoder(uint64_t seed, int64_t iters = 300) {
  using namespace diff;
  constexpr int64_t kBatch = 16, kPoints = 96;
  ObjectEncoder enc(seed);
  Rng rng(substream_seed(seed, 0xC1A55));

  Tensor head_w = Tensor::param(
      [&] {
        std::vector<double> w(static_cast<size_t>(kObjectFeatureDim * synth::kNumObjectClasses));
        for (auto& x : w) x = 0.1 * rng.normal();
        return w;
      }(),
      {kObjectFeatureDim, synth::kNumObjectClasses});
  Tensor head_b =
      Tensor::param(std::vector<double>(synth::kNumObjectClasses, 0.0), {synth::kNumObjectClasses});

  auto params = enc.params();
  params.push_back(head_w);
  params.push_back(head_b);
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  AdamW opt(params, cfg);

  for (int64_t it = 0; it < iters; ++it) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(kBatch * kPoints * 3));
    std::vector<int64_t> labels(static_cast<size_t>(kBatch));
    for (int64_t b = 0; b < kBatch; ++b) {
      int64_t cls = rng.uniform_int(0, synth::kNumObjectClasses - 1);
      labels[static_cast<size_t>(b)] = cls;
      auto cloud = detail::augmented_cloud(static_cast<synth::ObjectClass>(cls), kPoints, rng);
      flat.insert(flat.end(), cloud.begin(), cloud.end());
    }
    Tensor pts = Tensor::from(std::move(flat), {kBatch, kPoints, 3});
    Tensor logits = affine(enc.forward(pts), head_w, head_b);
    Tensor loss = cross_entropy(logits, labels);
    if (!std::isfinite(loss.item()))
      fail(str_cat("pretrain_object_encoder: non-finite loss at iteration ", it));
    backward(loss);
    opt.step();
    opt.zero_grad();
  }
  enc.freeze();
  return enc;
}

// Frozen per-class descriptors of the canonical clouds (what conditioning
// vectors downstream networks see for each object class).
inline std::array<std::vector<double>, synth::kNumObjectClasses> class_features(
    const ObjectEncoder& enc) {
  std::array<std::vector<double>, synth::kNumObjectClasses> out;
  for (int c = 0; c < synth::kNumObjectClasses; ++c) {
    auto oc = static_cast<synth::ObjectClass>(c);
    auto pts = geom::sample_positions(synth::canonical_object(oc),
                                      synth::object_canonical_samples(oc));
    out[static_cast<size_t>(c)] = enc.encode(pts);
  }
  return out;
}

}  // namespace hoi::lexis
