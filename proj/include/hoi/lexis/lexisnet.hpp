#pragma once

// LEXIS-Net: a VQ pose tokenizer plus a shared-trunk decoder.
//
//   encode:  theta (21 axis-angle triples) -> continuous latents zhat [21,D]
//   quantize: per-token nearest codebook entry (ties -> lowest index) with a
//             straight-through gradient back to zhat
//   decode:  tokens -> body pose (pose head) and, conditioned on an object
//            shape descriptor f_O, two TriPlane interaction-field volumes
//            (body-surface field and object-surface field)
//   query:   a TriPlane volume + query point in the normalized interaction
//            frame -> predicted field value in (0,1)
//
// The normalized interaction frame is the human-root-relative frame divided
// by kFrameScale, so the interacting region maps into the [-1,1]^3 cube the
// planes span.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hoi/body/model.hpp"
#include "hoi/common.hpp"
#include "hoi/diff/tensor.hpp"
#include "hoi/lexis/object_encoder.hpp"

namespace hoi::lexis {

inline constexpr int64_t kNumTokens = body::kNumPosable;  // one token per posable joint
inline constexpr double kFrameScale = 1.4;                // meters -> normalized frame

struct LexisConfig {
  int64_t k = 64;              // codebook entries          (full-scale reference: 2048)
  int64_t d = 16;              // latent dim per token      (full-scale reference: 128)
  int64_t triplane_res = 16;   // plane resolution R        (full-scale reference: 64)
  int64_t triplane_chan = 16;  // plane channels C          (full-scale reference: 64)
  double omega = 5.0;          // field mapping exp(-omega * dist)
  double lambda_if_h = 10.0;   // body-field loss weight
  double lambda_if_o = 10.0;   // object-field loss weight
  double lambda_vq = 0.5;
  double lambda_commit = 0.5;
  double lr = 1e-4;
  int64_t iters = 20000;       // (full-scale reference: 60000, batch 1024)
  int64_t batch = 64;
  uint64_t seed = 1;
  int64_t if_points = 256;     // field samples drawn per record per step
  int64_t recon_points = 256;  // vertex subset per step (0 = all vertices)

  void validate() const {
    if (k < 2) fail("LexisConfig: k must be >= 2");
    if (d < 1) fail("LexisConfig: d must be >= 1");
    if (triplane_res < 2) fail("LexisConfig: triplane_res must be >= 2");
    if (triplane_chan < 1) fail("LexisConfig: triplane_chan must be >= 1");
    if (omega <= 0) fail("LexisConfig: omega must be positive");
    if (lr <= 0) fail("LexisConfig: lr must be positive");
    if (iters < 0 || batch < 1) fail("LexisConfig: bad iters/batch");
    if (if_points < 1) fail("LexisConfig: if_points must be >= 1");
    if (recon_points < 0) fail("LexisConfig: recon_points must be >= 0");
  }
};

// --------------------------------------------------------------------------
// config file (one "key value" pair per line; '#' starts a comment)
// --------------------------------------------------------------------------

inline void save_lexis_config(const std::string& path, const LexisConfig& c) {
  std::ofstream out(path);
  if (!out) fail(str_cat("save_lexis_config: cannot open ", path));
  out << std::setprecision(17);
  out << "k " << c.k << "\nd " << c.d << "\ntriplane_res " << c.triplane_res
      << "\ntriplane_chan " << c.triplane_chan << "\nomega " << c.omega << "\nlambda_if_h "
      << c.lambda_if_h << "\nlambda_if_o " << c.lambda_if_o << "\nlambda_vq " << c.lambda_vq
      << "\nlambda_commit " << c.lambda_commit << "\nlr " << c.lr << "\niters " << c.iters
      << "\nbatch " << c.batch << "\nseed " << c.seed << "\nif_points " << c.if_points
      << "\nrecon_points " << c.recon_points << "\n";
}

inline LexisConfig load_lexis_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(str_cat("load_lexis_config: cannot open ", path));
  LexisConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;  // blank line
    bool ok = true;
    if (key == "k") ok = static_cast<bool>(ls >> c.k);
    else if (key == "d") ok = static_cast<bool>(ls >> c.d);
    else if (key == "triplane_res") ok = static_cast<bool>(ls >> c.triplane_res);
    else if (key == "triplane_chan") ok = static_cast<bool>(ls >> c.triplane_chan);
    else if (key == "omega") ok = static_cast<bool>(ls >> c.omega);
    else if (key == "lambda_if_h") ok = static_cast<bool>(ls >> c.lambda_if_h);
    else if (key == "lambda_if_o") ok = static_cast<bool>(ls >> c.lambda_if_o);
    else if (key == "lambda_vq") ok = static_cast<bool>(ls >> c.lambda_vq);
    else if (key == "lambda_commit") ok = static_cast<bool>(ls >> c.lambda_commit);
    else if (key == "lr") ok = static_cast<bool>(ls >> c.lr);
    else if (key == "iters") ok = static_cast<bool>(ls >> c.iters);
    else if (key == "batch") ok = static_cast<bool>(ls >> c.batch);
    else if (key == "seed") ok = static_cast<bool>(ls >> c.seed);
    else if (key == "if_points") ok = static_cast<bool>(ls >> c.if_points);
    else if (key == "recon_points") ok = static_cast<bool>(ls >> c.recon_points);
    else fail(str_cat("load_lexis_config: unknown key '", key, "' at line ", lineno));
    if (!ok) fail(str_cat("load_lexis_config: malformed value for '", key, "' at line ", lineno));
  }
  c.validate();
  return c;
}

// --------------------------------------------------------------------------
// codebook + quantization
// --------------------------------------------------------------------------

struct Codebook {
  diff::Tensor entries;         // [K,D] trainable
  std::vector<int64_t> usage;   // per-entry selection counts (training window)

  int64_t k() const { return entries.size(0); }
  int64_t dim() const { return entries.size(1); }
};

// Brute-force nearest entry per latent row (squared Euclidean, ties -> lowest
// index).  zhat: n rows of dimension D, entries: K rows of dimension D.
inline std::vector<int64_t> nearest_entries(const std::vector<double>& zhat, int64_t n,
                                            const std::vector<double>& entries, int64_t K,
                                            int64_t D) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int64_t arg = 0;
    for (int64_t e = 0; e < K; ++e) {
      double d2 = 0;
      for (int64_t c = 0; c < D; ++c) {
        double diff = zhat[static_cast<size_t>(i * D + c)] - entries[static_cast<size_t>(e * D + c)];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        arg = e;
      }
    }
    idx[static_cast<size_t>(i)] = arg;
  }
  return idx;
}

struct TokenSeq {
  diff::Tensor zhat;            // continuous latents, [...,21,D]
  diff::Tensor z;               // quantized tokens; values are exact codebook
                                // rows, gradient w.r.t. zhat is identity
  diff::Tensor zq;              // same values with the codebook-gradient path
                                // (feeds the VQ loss)
  std::vector<int64_t> indices; // one entry per token, in [0,K)
};

// Per-token quantization.  zhat may be [21,D] or [B,21,D]; indices are in
// row-major token order.
inline TokenSeq quantize(const diff::Tensor& zhat, const Codebook& cb) {
  using namespace diff;
  int64_t D = cb.dim();
  if (zhat.ndim() < 2 || zhat.shape().back() != D)
    fail(str_cat("quantize: latents ", shape_str(zhat.shape()), " do not match codebook dim ", D));
  int64_t n = zhat.numel() / D;
  TokenSeq out;
  out.zhat = zhat;
  out.indices = nearest_entries(zhat.value(), n, cb.entries.value(), cb.k(), D);
  out.zq = reshape(gather_rows(cb.entries, out.indices), zhat.shape());
  // Straight-through with exact values: zq + (zhat - sg(zhat)) adds an exact
  // zero elementwise, so values stay bitwise equal to the codebook rows while
  // the gradient w.r.t. zhat is the identity (and the codebook path is cut).
  out.z = add(stop_gradient(out.zq), sub(zhat, stop_gradient(zhat)));
  return out;
}

inline void count_usage(Codebook& cb, const std::vector<int64_t>& indices) {
  if (cb.usage.size() != static_cast<size_t>(cb.k())) cb.usage.assign(static_cast<size_t>(cb.k()), 0);
  for (int64_t i : indices) cb.usage[static_cast<size_t>(i)] += 1;
}

// --------------------------------------------------------------------------
// TriPlane volumes
// --------------------------------------------------------------------------

struct QueryMlp {
  diff::Tensor w1, b1, w2, b2, w3, b3;  // C->32->16->1
};

struct TriPlaneVolume {
  diff::Tensor xy, xz, yz;  // [B,R,R,C] feature planes
  QueryMlp mlp;             // weight handles shared with the owning network
  double lo = -1.0, hi = 1.0;  // cube extent in the normalized frame
};

// Batched field query.  q: [B,P,3] points in the normalized frame (points
// outside the extent behave as if clamped to the boundary).  Returns [B,P]
// values in (0,1).
inline diff::Tensor query_field_batch(const TriPlaneVolume& vol, const diff::Tensor& q) {
  using namespace diff;
  if (q.ndim() != 3 || q.size(2) != 3)
    fail(str_cat("query_field: points must be [B,P,3], got ", shape_str(q.shape())));
  if (q.size(0) != vol.xy.size(0)) fail("query_field: batch mismatch with planes");
  int64_t B = q.size(0), P = q.size(1);
  Tensor x = slice(q, 2, 0, 1), y = slice(q, 2, 1, 1), z = slice(q, 2, 2, 1);
  Tensor feats = add(add(grid_sample2d(vol.xy, concat({x, y}, 2)),
                         grid_sample2d(vol.xz, concat({x, z}, 2))),
                     grid_sample2d(vol.yz, concat({y, z}, 2)));  // [B,P,C]
  Tensor h = gelu(affine(feats, vol.mlp.w1, vol.mlp.b1));
  h = gelu(affine(h, vol.mlp.w2, vol.mlp.b2));
  Tensor v = sigmoid(affine(h, vol.mlp.w3, vol.mlp.b3));  // [B,P,1]
  return reshape(v, {B, P});
}

// Single-point convenience wrapper (volume with batch size 1).
inline double query_field(const TriPlaneVolume& vol, const geom::V3& q) {
  diff::Tensor qt = diff::Tensor::from({q.x, q.y, q.z}, {1, 1, 3});
  return query_field_batch(vol, qt).item();
}

// Axis-angle wrapped to the canonical range (same rotation, |aa| < pi).
inline geom::V3 wrap_axis_angle(const geom::V3& aa) {
  double m = geom::norm(aa);
  if (m < 1e-12) return aa;
  double w = std::remainder(m, 2.0 * M_PI);  // (-pi, pi]
  if (std::abs(w) >= M_PI - 1e-9) w = std::copysign(M_PI - 1e-9, w);
  return aa * (w / m);
}

// --------------------------------------------------------------------------
// the network
// --------------------------------------------------------------------------

class LexisNet {
 public:
  explicit LexisNet(const LexisConfig& cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    init();
  }

  const LexisConfig& config() const { return cfg_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // ---- batched core ------------------------------------------------------

  // theta [B,63] -> latents [B,21,d]
  diff::Tensor encode_batch(const diff::Tensor& theta) const {
    using namespace diff;
    if (theta.ndim() != 2 || theta.size(1) != kNumTokens * 3)
      fail(str_cat("encode: theta must be [B,63], got ", shape_str(theta.shape())));
    Tensor h = gelu(affine(theta, enc_w1_, enc_b1_));
    h = gelu(affine(h, enc_w2_, enc_b2_));
    return reshape(affine(h, enc_w3_, enc_b3_), {theta.size(0), kNumTokens, cfg_.d});
  }

  struct Volumes {
    TriPlaneVolume body, object;
  };
  struct Decoded {
    diff::Tensor theta;  // [B,63] raw axis-angle
    Volumes vols;
  };

  // tokens [B,21,d] -> pose head only (no object conditioning)
  diff::Tensor decode_pose_batch(const diff::Tensor& tokens) const {
    return diff::affine(trunk(tokens), pose_w_, pose_b_);
  }

  // tokens [B,21,d] + object descriptors [B,64] -> both TriPlane volumes
  Volumes decode_triplanes_batch(const diff::Tensor& tokens, const diff::Tensor& f_obj) const {
    return planes_from(trunk(tokens), f_obj);
  }

  // shared-trunk decode of pose and volumes in one pass (training path)
  Decoded decode_batch(const diff::Tensor& tokens, const diff::Tensor& f_obj) const {
    diff::Tensor h = trunk(tokens);
    return {diff::affine(h, pose_w_, pose_b_), planes_from(h, f_obj)};
  }

  // ---- single-instance wrappers ------------------------------------------

  // 21 axis-angle vectors -> latents [21,d]
  diff::Tensor encode(const std::vector<geom::V3>& theta) const {
    if (theta.size() != static_cast<size_t>(kNumTokens))
      fail(str_cat("encode: expected ", kNumTokens, " joint rotations, got ", theta.size()));
    std::vector<double> flat(static_cast<size_t>(kNumTokens) * 3);
    for (size_t j = 0; j < theta.size(); ++j) {
      flat[j * 3 + 0] = theta[j].x;
      flat[j * 3 + 1] = theta[j].y;
      flat[j * 3 + 2] = theta[j].z;
    }
    diff::Tensor z = encode_batch(diff::Tensor::from(std::move(flat), {1, kNumTokens * 3}));
    return diff::reshape(z, {kNumTokens, cfg_.d});
  }

  TokenSeq tokenize(const std::vector<geom::V3>& theta) const {
    return lexis::quantize(encode(theta), codebook_);
  }

  // tokens -> both field volumes (batch size 1 planes)
  Volumes decode_triplanes(const TokenSeq& tok, const std::vector<double>& f_obj) const {
    if (f_obj.size() != static_cast<size_t>(kObjectFeatureDim))
      fail(str_cat("decode_triplanes: f_O must have ", kObjectFeatureDim, " dims, got ",
                   f_obj.size()));
    diff::Tensor t = diff::reshape(tok.z, {1, kNumTokens, cfg_.d});
    diff::Tensor f = diff::Tensor::from(f_obj, {1, kObjectFeatureDim});
    return decode_triplanes_batch(t, f);
  }

  // tokens -> decoded pose, wrapped to the canonical axis-angle range
  std::vector<geom::V3> decode_pose(const TokenSeq& tok) const {
    diff::Tensor t = diff::reshape(tok.z, {1, kNumTokens, cfg_.d});
    std::vector<double> raw = decode_pose_batch(t).value();
    std::vector<geom::V3> out(static_cast<size_t>(kNumTokens));
    for (int64_t j = 0; j < kNumTokens; ++j)
      out[static_cast<size_t>(j)] = wrap_axis_angle(
          {raw[static_cast<size_t>(j * 3 + 0)], raw[static_cast<size_t>(j * 3 + 1)],
           raw[static_cast<size_t>(j * 3 + 2)]});
    return out;
  }

  // ---- parameters ----------------------------------------------------------

  std::vector<diff::Tensor> params() {
    std::vector<diff::Tensor> out = {enc_w1_, enc_b1_, enc_w2_, enc_b2_, enc_w3_, enc_b3_,
                                     codebook_.entries, trunk_w1_, trunk_b1_, trunk_w2_,
                                     trunk_b2_, pose_w_, pose_b_};
    for (auto* h : all_plane_heads()) {
      out.push_back(h->w);
      out.push_back(h->b);
    }
    for (auto* m : {&query_body_, &query_obj_}) {
      out.push_back(m->w1);
      out.push_back(m->b1);
      out.push_back(m->w2);
      out.push_back(m->b2);
      out.push_back(m->w3);
      out.push_back(m->b3);
    }
    return out;
  }

  std::vector<std::pair<std::string, diff::Tensor>> named_params() const {
    std::vector<std::pair<std::string, diff::Tensor>> out = {
        {"lexis.enc.w1", enc_w1_}, {"lexis.enc.b1", enc_b1_}, {"lexis.enc.w2", enc_w2_},
        {"lexis.enc.b2", enc_b2_}, {"lexis.enc.w3", enc_w3_}, {"lexis.enc.b3", enc_b3_},
        {"lexis.codebook", codebook_.entries},
        {"lexis.trunk.w1", trunk_w1_}, {"lexis.trunk.b1", trunk_b1_},
        {"lexis.trunk.w2", trunk_w2_}, {"lexis.trunk.b2", trunk_b2_},
        {"lexis.pose.w", pose_w_},     {"lexis.pose.b", pose_b_}};
    const char* names[6] = {"body.xy", "body.xz", "body.yz", "obj.xy", "obj.xz", "obj.yz"};
    auto heads = all_plane_heads();
    for (size_t i = 0; i < heads.size(); ++i) {
      out.emplace_back(str_cat("lexis.plane.", names[i], ".w"), heads[i]->w);
      out.emplace_back(str_cat("lexis.plane.", names[i], ".b"), heads[i]->b);
    }
    const char* qn[2] = {"body", "obj"};
    const QueryMlp* qs[2] = {&query_body_, &query_obj_};
    for (int i = 0; i < 2; ++i) {
      out.emplace_back(str_cat("lexis.query.", qn[i], ".w1"), qs[i]->w1);
      out.emplace_back(str_cat("lexis.query.", qn[i], ".b1"), qs[i]->b1);
      out.emplace_back(str_cat("lexis.query.", qn[i], ".w2"), qs[i]->w2);
      out.emplace_back(str_cat("lexis.query.", qn[i], ".b2"), qs[i]->b2);
      out.emplace_back(str_cat("lexis.query.", qn[i], ".w3"), qs[i]->w3);
      out.emplace_back(str_cat("lexis.query.", qn[i], ".b3"), qs[i]->b3);
    }
    return out;
  }

 private:
  struct PlaneHead {
    diff::Tensor w, b;  // [128+64, r0*r0*C]
  };

  std::array<PlaneHead*, 6> all_plane_heads() {
    return {&plane_body_[0], &plane_body_[1], &plane_body_[2],
            &plane_obj_[0], &plane_obj_[1], &plane_obj_[2]};
  }
  std::array<const PlaneHead*, 6> all_plane_heads() const {
    return {&plane_body_[0], &plane_body_[1], &plane_body_[2],
            &plane_obj_[0], &plane_obj_[1], &plane_obj_[2]};
  }

  // tokens [B,21,d] -> shared feature [B,128]
  diff::Tensor trunk(const diff::Tensor& tokens) const {
    using namespace diff;
    if (tokens.ndim() != 3 || tokens.size(1) != kNumTokens || tokens.size(2) != cfg_.d)
      fail(str_cat("decode: tokens must be [B,21,", cfg_.d, "], got ", shape_str(tokens.shape())));
    Tensor x = reshape(tokens, {tokens.size(0), kNumTokens * cfg_.d});
    Tensor h = gelu(affine(x, trunk_w1_, trunk_b1_));
    return gelu(affine(h, trunk_w2_, trunk_b2_));
  }

  // trunk feature + f_O -> six upsampled, tanh-bounded planes
  Volumes planes_from(const diff::Tensor& h, const diff::Tensor& f_obj) const {
    using namespace diff;
    if (f_obj.ndim() != 2 || f_obj.size(1) != kObjectFeatureDim)
      fail(str_cat("decode: f_O must be [B,", kObjectFeatureDim, "], got ",
                   shape_str(f_obj.shape())));
    if (f_obj.size(0) != h.size(0)) fail("decode: f_O batch mismatch");
    int64_t B = h.size(0), R = cfg_.triplane_res, C = cfg_.triplane_chan;
    Tensor cond = concat({h, f_obj}, 1);  // [B,192]
    Tensor coords = upsample_coords(B);
    auto make_plane = [&](const PlaneHead& head) {
      Tensor lo = tanh(affine(cond, head.w, head.b));  // bounded features
      Tensor grid = reshape(lo, {B, r0_, r0_, C});
      return reshape(grid_sample2d(grid, coords), {B, R, R, C});
    };
    Volumes v;
    v.body = {make_plane(plane_body_[0]), make_plane(plane_body_[1]), make_plane(plane_body_[2]),
              query_body_};
    v.object = {make_plane(plane_obj_[0]), make_plane(plane_obj_[1]), make_plane(plane_obj_[2]),
                query_obj_};
    return v;
  }

  // align-corners positions of the R x R output grid, replicated per batch row
  diff::Tensor upsample_coords(int64_t B) const {
    int64_t R = cfg_.triplane_res;
    std::vector<double> c(static_cast<size_t>(B * R * R * 2));
    for (int64_t i = 0; i < R; ++i)
      for (int64_t j = 0; j < R; ++j) {
        c[static_cast<size_t>((i * R + j) * 2 + 0)] = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(R - 1);
        c[static_cast<size_t>((i * R + j) * 2 + 1)] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(R - 1);
      }
    for (int64_t b = 1; b < B; ++b)
      std::copy_n(c.begin(), R * R * 2, c.begin() + b * R * R * 2);
    return diff::Tensor::from(std::move(c), {B, R * R, 2});
  }

  void init() {
    using diff::Tensor;
    Rng rng(substream_seed(cfg_.seed, 0x1E715ull));
    auto layer = [&](int64_t in, int64_t out, double gain) {
      std::vector<double> w(static_cast<size_t>(in * out));
      double s = gain * std::sqrt(2.0 / static_cast<double>(in));
      for (auto& x : w) x = s * rng.normal();
      return Tensor::param(std::move(w), {in, out});
    };
    auto bias = [&](int64_t n) { return Tensor::param(std::vector<double>(static_cast<size_t>(n), 0.0), {n}); };

    int64_t zdim = kNumTokens * cfg_.d;
    enc_w1_ = layer(kNumTokens * 3, 128, 1.0);
    enc_b1_ = bias(128);
    enc_w2_ = layer(128, 128, 1.0);
    enc_b2_ = bias(128);
    enc_w3_ = layer(128, zdim, 0.7);
    enc_b3_ = bias(zdim);

    {
      std::vector<double> e(static_cast<size_t>(cfg_.k * cfg_.d));
      for (auto& x : e) x = 0.3 * rng.normal();
      codebook_.entries = Tensor::param(std::move(e), {cfg_.k, cfg_.d});
      codebook_.usage.assign(static_cast<size_t>(cfg_.k), 0);
    }

    trunk_w1_ = layer(zdim, 128, 1.0);
    trunk_b1_ = bias(128);
    trunk_w2_ = layer(128, 128, 1.0);
    trunk_b2_ = bias(128);
    pose_w_ = layer(128, kNumTokens * 3, 0.01);
    pose_b_ = bias(kNumTokens * 3);

    r0_ = std::max<int64_t>(2, cfg_.triplane_res / 2);
    int64_t cond = 128 + kObjectFeatureDim;
    for (auto* group : {&plane_body_, &plane_obj_})
      for (auto& head : *group) {
        head.w = layer(cond, r0_ * r0_ * cfg_.triplane_chan, 0.1);
        head.b = bias(r0_ * r0_ * cfg_.triplane_chan);
      }
    for (auto* m : {&query_body_, &query_obj_}) {
      m->w1 = layer(cfg_.triplane_chan, 32, 1.0);
      m->b1 = bias(32);
      m->w2 = layer(32, 16, 1.0);
      m->b2 = bias(16);
      m->w3 = layer(16, 1, 1.0);
      m->b3 = bias(1);
    }
  }

  LexisConfig cfg_;
  int64_t r0_ = 8;  // plane-head resolution before bilinear upsampling

  diff::Tensor enc_w1_, enc_b1_, enc_w2_, enc_b2_, enc_w3_, enc_b3_;
  Codebook codebook_;
  diff::Tensor trunk_w1_, trunk_b1_, trunk_w2_, trunk_b2_;
  diff::Tensor pose_w_, pose_b_;
  std::array<PlaneHead, 3> plane_body_, plane_obj_;  // xy, xz, yz
  QueryMlp query_body_, query_obj_;
};

// --------------------------------------------------------------------------
// training loss
// --------------------------------------------------------------------------

// A training batch: ground-truth pose/shape/vertices plus field supervision
// sampled on both surfaces (points in the normalized frame, field values in
// mapped exp(-omega*dist) units).
struct LexisBatch {
  diff::Tensor theta;            // [B,63]
  diff::Tensor beta;             // [B,10]
  diff::Tensor verts_gt;         // [B,V,3] root-relative
  std::vector<int64_t> vert_idx; // template-vertex subset for verts_gt (empty = all)
  diff::Tensor f_obj;            // [B,64]
  diff::Tensor qb, qo;           // [B,P,3]
  diff::Tensor fb, fo;           // [B,P]
};

struct LossTerms {
  diff::Tensor total;
  diff::Tensor recon, if_h, if_o, vq, commit;  // unweighted components
  std::vector<int64_t> indices;                // token assignments (usage tracking)
};

struct LossValues {
  double total = 0, recon = 0, if_h = 0, if_o = 0, vq = 0, commit = 0;
};

inline LossValues values_of(const LossTerms& t) {
  return {t.total.item(), t.recon.item(), t.if_h.item(),
          t.if_o.item(),  t.vq.item(),    t.commit.item()};
}

// total = recon + l_h*if_h + l_o*if_o + l_vq*vq + l_c*commit, summed in this
// exact left-to-right order.
inline diff::Tensor combine_loss(const diff::Tensor& recon, const diff::Tensor& if_h,
                                 const diff::Tensor& if_o, const diff::Tensor& vq,
                                 const diff::Tensor& commit, const LexisConfig& cfg) {
  using namespace diff;
  Tensor t = add(recon, mul_scalar(if_h, cfg.lambda_if_h));
  t = add(t, mul_scalar(if_o, cfg.lambda_if_o));
  t = add(t, mul_scalar(vq, cfg.lambda_vq));
  return add(t, mul_scalar(commit, cfg.lambda_commit));
}

inline LossTerms lexisnet_loss(const LexisNet& net, const LexisBatch& batch) {
  using namespace diff;
  if (!batch.qb.defined() || !batch.qo.defined() || !batch.fb.defined() || !batch.fo.defined() ||
      batch.qb.numel() == 0 || batch.qo.numel() == 0)
    fail("lexisnet_loss: batch is missing ground-truth interaction fields");
  const LexisConfig& cfg = net.config();

  Tensor zhat = net.encode_batch(batch.theta);
  TokenSeq tok = quantize(zhat, net.codebook());
  LexisNet::Decoded dec = net.decode_batch(tok.z, batch.f_obj);

  auto pred = body::BodyModel::get().lbs_batch_subset(dec.theta, batch.beta, batch.vert_idx);
  LossTerms out;
  out.indices = tok.indices;
  out.recon = body::v2v_loss(pred.vertices, batch.verts_gt);
  out.if_h = l1(query_field_batch(dec.vols.body, batch.qb), batch.fb);
  out.if_o = l1(query_field_batch(dec.vols.object, batch.qo), batch.fo);
  out.vq = mse(stop_gradient(zhat), tok.zq);
  out.commit = mse(zhat, stop_gradient(tok.zq));
  out.total = combine_loss(out.recon, out.if_h, out.if_o, out.vq, out.commit, cfg);
  return out;
}

}  // namespace hoi::lexis
