#pragma once

// LEXIS-Net training: dataset preparation (cached ground-truth geometry and
// field supervision per record), minibatch assembly, the AdamW loop with
// dead-codebook-entry reseeding, training-curve CSV, and checkpoint I/O.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hoi/body/model.hpp"
#include "hoi/common.hpp"
#include "hoi/diff/adamw.hpp"
#include "hoi/diff/checkpoint.hpp"
#include "hoi/diff/tensor.hpp"
#include "hoi/lexis/lexisnet.hpp"
#include "hoi/lexis/object_encoder.hpp"
#include "hoi/synth/dataset.hpp"

namespace hoi::lexis {

inline constexpr int64_t kFieldSamples = 1024;  // supervision points per surface

// Everything the trainer needs from one record, precomputed once.
struct TrainingExample {
  std::vector<double> theta;   // [63] ground-truth pose
  std::vector<double> beta;    // [10]
  int cls = 0;                 // object class id
  std::vector<double> verts;   // [N*3] root-relative ground-truth vertices
  std::vector<double> qb, qo;  // [1024*3] sample points, normalized frame
  std::vector<double> fb, fo;  // [1024] mapped ground-truth field values
};

inline TrainingExample prepare_example(const synth::DatasetRecord& r) {
  if (r.field_body.dist.size() != static_cast<size_t>(kFieldSamples) ||
      r.field_obj.dist.size() != static_cast<size_t>(kFieldSamples))
    fail(str_cat("prepare_example: record ", r.spec.seed,
                 " is missing precomputed interaction fields"));
  const auto& bm = body::BodyModel::get();
  TrainingExample ex;
  ex.cls = static_cast<int>(r.spec.object_class);
  ex.theta.resize(static_cast<size_t>(kNumTokens) * 3);
  for (size_t j = 0; j < r.spec.body.theta.size(); ++j) {
    ex.theta[j * 3 + 0] = r.spec.body.theta[j].x;
    ex.theta[j * 3 + 1] = r.spec.body.theta[j].y;
    ex.theta[j * 3 + 2] = r.spec.body.theta[j].z;
  }
  ex.beta = r.spec.body.beta;

  geom::TriMesh body_root = r.spec.body_mesh_root();
  ex.verts.resize(body_root.vertices.size() * 3);
  for (size_t v = 0; v < body_root.vertices.size(); ++v) {
    ex.verts[v * 3 + 0] = body_root.vertices[v].x;
    ex.verts[v * 3 + 1] = body_root.vertices[v].y;
    ex.verts[v * 3 + 2] = body_root.vertices[v].z;
  }

  auto flatten_pts = [](const std::vector<geom::V3>& pts, std::vector<double>& out) {
    out.resize(pts.size() * 3);
    for (size_t i = 0; i < pts.size(); ++i) {
      out[i * 3 + 0] = pts[i].x / kFrameScale;
      out[i * 3 + 1] = pts[i].y / kFrameScale;
      out[i * 3 + 2] = pts[i].z / kFrameScale;
    }
  };
  flatten_pts(geom::sample_positions(body_root, bm.canonical_samples(kFieldSamples)), ex.qb);
  flatten_pts(geom::sample_positions(r.spec.object_mesh_root(),
                                     synth::object_canonical_samples(r.spec.object_class)),
              ex.qo);
  ex.fb = r.field_body.mapped_values();
  ex.fo = r.field_obj.mapped_values();
  return ex;
}

inline std::vector<TrainingExample> prepare_examples(const std::vector<synth::DatasetRecord>& recs) {
  std::vector<TrainingExample> out(recs.size());
  parallel_for(static_cast<int64_t>(recs.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      out[static_cast<size_t>(i)] = prepare_example(recs[static_cast<size_t>(i)]);
  });
  return out;
}

// Assemble constant batch tensors for the chosen records.  Field supervision
// is subsampled to cfg.if_points per record and the vertex loss to
// cfg.recon_points shared template vertices (0 = all).
inline LexisBatch make_batch(const std::vector<TrainingExample>& ex,
                             const std::vector<int64_t>& picks,
                             const std::array<std::vector<double>, synth::kNumObjectClasses>& feats,
                             const LexisConfig& cfg, Rng& rng) {
  using diff::Tensor;
  int64_t B = static_cast<int64_t>(picks.size());
  int64_t N = static_cast<int64_t>(ex.front().verts.size() / 3);
  int64_t P = std::min<int64_t>(cfg.if_points, kFieldSamples);

  LexisBatch b;
  if (cfg.recon_points > 0 && cfg.recon_points < N) {
    b.vert_idx.resize(static_cast<size_t>(cfg.recon_points));
    for (auto& v : b.vert_idx) v = rng.uniform_int(0, N - 1);
  }
  int64_t V = b.vert_idx.empty() ? N : static_cast<int64_t>(b.vert_idx.size());

  std::vector<double> theta, beta, verts, fobj, qb, qo, fb, fo;
  theta.reserve(static_cast<size_t>(B * kNumTokens * 3));
  beta.reserve(static_cast<size_t>(B * body::kNumShape));
  verts.reserve(static_cast<size_t>(B * V * 3));
  fobj.reserve(static_cast<size_t>(B * kObjectFeatureDim));
  qb.reserve(static_cast<size_t>(B * P * 3));
  qo.reserve(static_cast<size_t>(B * P * 3));
  fb.reserve(static_cast<size_t>(B * P));
  fo.reserve(static_cast<size_t>(B * P));

  for (int64_t pick : picks) {
    const TrainingExample& e = ex[static_cast<size_t>(pick)];
    theta.insert(theta.end(), e.theta.begin(), e.theta.end());
    beta.insert(beta.end(), e.beta.begin(), e.beta.end());
    if (b.vert_idx.empty()) {
      verts.insert(verts.end(), e.verts.begin(), e.verts.end());
    } else {
      for (int64_t v : b.vert_idx)
        verts.insert(verts.end(), e.verts.begin() + v * 3, e.verts.begin() + v * 3 + 3);
    }
    const auto& f = feats[static_cast<size_t>(e.cls)];
    fobj.insert(fobj.end(), f.begin(), f.end());
    for (int64_t s = 0; s < P; ++s) {
      int64_t i = (P == kFieldSamples) ? s : rng.uniform_int(0, kFieldSamples - 1);
      qb.insert(qb.end(), e.qb.begin() + i * 3, e.qb.begin() + i * 3 + 3);
      fb.push_back(e.fb[static_cast<size_t>(i)]);
    }
    for (int64_t s = 0; s < P; ++s) {
      int64_t i = (P == kFieldSamples) ? s : rng.uniform_int(0, kFieldSamples - 1);
      qo.insert(qo.end(), e.qo.begin() + i * 3, e.qo.begin() + i * 3 + 3);
      fo.push_back(e.fo[static_cast<size_t>(i)]);
    }
  }

  b.theta = Tensor::from(std::move(theta), {B, kNumTokens * 3});
  b.beta = Tensor::from(std::move(beta), {B, body::kNumShape});
  b.verts_gt = Tensor::from(std::move(verts), {B, V, 3});
  b.f_obj = Tensor::from(std::move(fobj), {B, kObjectFeatureDim});
  b.qb = Tensor::from(std::move(qb), {B, P, 3});
  b.qo = Tensor::from(std::move(qo), {B, P, 3});
  b.fb = Tensor::from(std::move(fb), {B, P});
  b.fo = Tensor::from(std::move(fo), {B, P});
  return b;
}

struct CurveRow {
  int64_t iter = 0;
  LossValues loss;
};

struct TrainResult {
  LexisNet net;
  std::vector<CurveRow> curve;
  std::string checkpoint_path, curve_path;
};

namespace detail {

// Entries unused over the last window are reset to encoder outputs of random
// training poses (a random token row each).
inline void reseed_dead_entries(LexisNet& net, const std::vector<TrainingExample>& ex, Rng& rng) {
  Codebook& cb = net.codebook();
  const int64_t D = cb.dim();
  for (int64_t k = 0; k < cb.k(); ++k) {
    if (cb.usage[static_cast<size_t>(k)] > 0) continue;
    const TrainingExample& e = ex[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(ex.size()) - 1))];
    diff::Tensor z = net.encode_batch(
        diff::Tensor::from(e.theta, {1, kNumTokens * 3}));
    int64_t tokrow = rng.uniform_int(0, kNumTokens - 1);
    auto& entries = cb.entries.mutable_value();
    for (int64_t c = 0; c < D; ++c)
      entries[static_cast<size_t>(k * D + c)] = z.value()[static_cast<size_t>(tokrow * D + c)];
  }
  std::fill(cb.usage.begin(), cb.usage.end(), 0);
}

inline void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve) {
  std::ofstream out(path);
  if (!out) fail(str_cat("train_lexisnet: cannot open ", path));
  out << std::setprecision(17);
  out << "iter,total,recon,if_h,if_o,vq,commit\n";
  for (const auto& row : curve)
    out << row.iter << ',' << row.loss.total << ',' << row.loss.recon << ',' << row.loss.if_h
        << ',' << row.loss.if_o << ',' << row.loss.vq << ',' << row.loss.commit << '\n';
}

}  // namespace detail

// Train on prepared examples.  Deterministic per config seed.  If out_dir is
// non-empty, writes lexis.ckpt (network + object-encoder weights),
// lexis_curve.csv and lexis_config.txt there.
inline TrainResult train_lexisnet_prepared(const std::vector<TrainingExample>& examples,
                                           const LexisConfig& cfg, const ObjectEncoder& enc,
                                           const std::string& out_dir = "") {
  cfg.validate();
  if (examples.empty()) fail("train_lexisnet: empty dataset");
  auto feats = class_features(enc);

  TrainResult res{LexisNet(cfg), {}, "", ""};
  LexisNet& net = res.net;
  diff::AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  diff::AdamW opt(net.params(), ocfg);

  Rng rng(substream_seed(cfg.seed, 0x7EA1ull));
  int64_t n = static_cast<int64_t>(examples.size());
  // Dead-entry detection needs usage counts over a meaningful stretch: at
  // least one pass over the data, and never fewer than 100 iterations.
  int64_t window = std::max<int64_t>((n + cfg.batch - 1) / cfg.batch, 100);
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  res.curve.reserve(static_cast<size_t>(cfg.iters));
  std::vector<int64_t> picks(static_cast<size_t>(std::min(cfg.batch, n)));
  for (int64_t it = 0; it < cfg.iters; ++it) {
    if (cfg.batch >= n) {
      picks.assign(order.begin(), order.end());
    } else {
      // partial Fisher-Yates draw of `batch` distinct records
      for (int64_t i = 0; i < cfg.batch; ++i) {
        int64_t j = rng.uniform_int(i, n - 1);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        picks[static_cast<size_t>(i)] = order[static_cast<size_t>(i)];
      }
    }
    LexisBatch batch = make_batch(examples, picks, feats, cfg, rng);
    LossTerms terms = lexisnet_loss(net, batch);
    if (!std::isfinite(terms.total.item()))
      fail(str_cat("train_lexisnet: non-finite loss at iteration ", it));
    diff::backward(terms.total);
    // Linear warmup over the first 100 iterations: AdamW's bias correction
    // makes the very first steps full-sized, which destabilizes the codebook
    // before usable assignments form.
    opt.set_lr(cfg.lr * std::min(1.0, static_cast<double>(it + 1) / 100.0));
    opt.step();
    opt.zero_grad();
    count_usage(net.codebook(), terms.indices);
    if ((it + 1) % window == 0) detail::reseed_dead_entries(net, examples, rng);
    res.curve.push_back({it, values_of(terms)});
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    res.checkpoint_path = (std::filesystem::path(out_dir) / "lexis.ckpt").string();
    res.curve_path = (std::filesystem::path(out_dir) / "lexis_curve.csv").string();
    auto named = net.named_params();
    for (const auto& p : enc.named_params()) named.push_back(p);
    diff::save_checkpoint(res.checkpoint_path, named);
    detail::write_curve_csv(res.curve_path, res.curve);
    save_lexis_config((std::filesystem::path(out_dir) / "lexis_config.txt").string(), cfg);
  }
  return res;
}

inline TrainResult train_lexisnet(const std::vector<synth::DatasetRecord>& records,
                                  const LexisConfig& cfg, const ObjectEncoder& enc,
                                  const std::string& out_dir = "") {
  return train_lexisnet_prepared(prepare_examples(records), cfg, enc, out_dir);
}

// Convenience overload that pretrains (and freezes) the object encoder from
// the same seed.
inline TrainResult train_lexisnet(const std::vector<synth::DatasetRecord>& records,
                                  const LexisConfig& cfg, const std::string& out_dir = "") {
  ObjectEncoder enc = pretrain_object_encoder(substream_seed(cfg.seed, 0x0BECull));
  return train_lexisnet(records, cfg, enc, out_dir);
}

// Restore a trained network + frozen object encoder from a checkpoint written
// by train_lexisnet (config must match the training config).
struct LoadedLexis {
  LexisNet net;
  ObjectEncoder objenc;
};

inline LoadedLexis load_lexisnet(const std::string& ckpt_path, const LexisConfig& cfg) {
  auto ckpt = diff::load_checkpoint(ckpt_path);
  LoadedLexis out{LexisNet(cfg), ObjectEncoder(cfg.seed)};
  for (auto& [name, t] : out.net.named_params()) {
    diff::Tensor tt = t;
    diff::load_into(ckpt, name, tt);
  }
  for (auto& [name, t] : out.objenc.named_params()) {
    diff::Tensor tt = t;
    diff::load_into(ckpt, name, tt);
  }
  out.objenc.freeze();
  return out;
}

}  // namespace hoi::lexis
