#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "h4vdm/adam.hpp"
#include "h4vdm/gop_record.hpp"
#include "h4vdm/rng.hpp"
#include "h4vdm/vit.hpp"

namespace h4vdm {

using nn::Mat;

struct ModelConfig {
  std::string preset = "B";
  int l = 8, h = 224, w = 224, p = 16;
  int d_vit1 = 256, vit1_depth = 8, vit1_heads = 8;
  int d_vit2 = 64, vit2_depth = 4, vit2_heads = 4;
  int d_t = 256;
  int d_r = 1024;
  int joint_depth = 8, joint_heads = 8;
  int ft_vocab = 3, mb_vocab = 256, mb_dim = 3;
  // Dedicated per-frame weight sets for the DF/M/L branches (the presets'
  // parameter budgets require this); when false one shared ViT per branch
  // processes all L frames.
  bool per_frame_branch_weights = true;

  int tokens() const { return 4 * l + 5; }

  nn::ViTConfig vit1_cfg() const {
    return {h, w, 3, p, d_vit1, vit1_depth, vit1_heads, d_t};
  }
  nn::ViTConfig vit2_m_cfg() const {
    return {h, w, mb_dim, p, d_vit2, vit2_depth, vit2_heads, d_t};
  }
  nn::ViTConfig vit2_l_cfg() const {
    return {h, w, 1, p, d_vit2, vit2_depth, vit2_heads, d_t};
  }
};

// Named presets: "S", "B", "L" (Table-3 scale) and "tiny" (test scale).
ModelConfig preset_config(const std::string& name);

// Enumerate (name, rows, cols) of every parameter in canonical visit order
// without constructing a model.  Kept in sync with FeatureExtractor by the
// shape-drift unit test.
void for_each_param_shape(const ModelConfig& cfg,
                          const std::function<void(const std::string&, int, int)>& fn);
size_t param_count_for(const ModelConfig& cfg);

// ---------------------------------------------------------------- features

// s(r1, r2) = 1 - tanh(||r1 - r2||_2), in [0, 1], symmetric.
template <typename T>
double similarity(std::span<const T> r1, std::span<const T> r2) {
  if (r1.size() != r2.size())
    throw DimensionMismatch("similarity: feature lengths differ");
  double sq = 0.0;
  for (size_t i = 0; i < r1.size(); ++i) {
    double d = double(r1[i]) - double(r2[i]);
    sq += d * d;
  }
  return 1.0 - std::tanh(std::sqrt(sq));
}

template <typename T>
double similarity(const std::vector<T>& r1, const std::vector<T>& r2) {
  return similarity(std::span<const T>(r1), std::span<const T>(r2));
}

inline constexpr double kPairLossEps = 1e-7;

// Binary cross-entropy on the similarity score (negated log-likelihood);
// s is clamped to [eps, 1-eps] so the loss is always finite for finite
// features. A non-finite similarity (broken weights/inputs) propagates as a
// NaN loss rather than being masked by the clamp.
template <typename T>
double pair_loss(const std::vector<T>& r1, const std::vector<T>& r2, int y) {
  double s = similarity(r1, r2);
  if (!std::isfinite(s)) return std::numeric_limits<double>::quiet_NaN();
  double sc = std::min(1.0 - kPairLossEps, std::max(kPairLossEps, s));
  return -(y * std::log(sc) + (1 - y) * std::log(1.0 - sc));
}

// Loss plus gradients w.r.t. both features.  Where the clamp is active (or
// the distance is zero) the gradient is zero.
template <typename T>
double pair_loss_grad(const std::vector<T>& r1, const std::vector<T>& r2, int y,
                      std::vector<T>& dr1, std::vector<T>& dr2) {
  double s = similarity(r1, r2);
  if (!std::isfinite(s)) {
    dr1.assign(r1.size(), T(0));
    dr2.assign(r2.size(), T(0));
    return std::numeric_limits<double>::quiet_NaN();
  }
  double sc = std::min(1.0 - kPairLossEps, std::max(kPairLossEps, s));
  double loss = -(y * std::log(sc) + (1 - y) * std::log(1.0 - sc));
  dr1.assign(r1.size(), T(0));
  dr2.assign(r2.size(), T(0));
  if (s <= kPairLossEps || s >= 1.0 - kPairLossEps) return loss;
  double sq = 0.0;
  for (size_t i = 0; i < r1.size(); ++i) {
    double d = double(r1[i]) - double(r2[i]);
    sq += d * d;
  }
  double dist = std::sqrt(sq);
  if (dist == 0.0) return loss;
  double dl_ds = -(y / sc - (1 - y) / (1.0 - sc));
  double th = 1.0 - s;  // tanh(dist)
  double ds_ddist = -(1.0 - th * th);
  double coef = dl_ds * ds_ddist / dist;
  for (size_t i = 0; i < r1.size(); ++i) {
    T g = T(coef * (double(r1[i]) - double(r2[i])));
    dr1[i] = g;
    dr2[i] = -g;
  }
  return loss;
}

// The H4VDM feature extractor: I/DF/FT/M/L processing branches, learnable
// separator vectors, joint transformer with positional embeddings, and the
// flatten-then-project output head.
//
// Backward discipline: every layer caches only its latest forward; shared
// branch weights run L times per sample, so backward() re-runs each
// sub-forward immediately before the matching sub-backward.  extract() and
// backward() therefore never rely on each other's caches.
template <typename T>
struct FeatureExtractor {
  ModelConfig cfg;
  nn::ViT<T> vit_i;
  std::vector<nn::ViT<T>> vit_df;
  nn::Embedding<T> ft_table;
  nn::Embedding<T> mb_table;
  std::vector<nn::ViT<T>> vit_m;
  std::vector<nn::ViT<T>> vit_l;
  nn::Param<T> specials;   // rows s1..s4
  nn::Param<T> joint_pos;  // tokens x d_t
  std::vector<nn::TransformerLayer<T>> joint;
  nn::LayerNorm<T> joint_ln;
  nn::Dense<T> out_proj;

  explicit FeatureExtractor(const ModelConfig& c)
      : cfg(c),
        vit_i("vit_i", c.vit1_cfg()),
        ft_table("ft_table", c.ft_vocab, c.d_t),
        mb_table("mb_table", c.mb_vocab, c.mb_dim),
        specials("specials", 4, c.d_t, nn::Init::Normal),
        joint_pos("joint_pos", c.tokens(), c.d_t, nn::Init::Normal),
        joint_ln("joint.ln", c.d_t),
        out_proj("out_proj", c.tokens() * c.d_t, c.d_r, true, nn::Init::Uniform002) {
    int sets = c.per_frame_branch_weights ? c.l : 1;
    vit_df.reserve(sets);
    vit_m.reserve(sets);
    vit_l.reserve(sets);
    for (int i = 0; i < sets; ++i) {
      vit_df.emplace_back("vit_df" + std::to_string(i), c.vit1_cfg());
      vit_m.emplace_back("vit_m" + std::to_string(i), c.vit2_m_cfg());
      vit_l.emplace_back("vit_l" + std::to_string(i), c.vit2_l_cfg());
    }
    joint.reserve(c.joint_depth);
    for (int i = 0; i < c.joint_depth; ++i)
      joint.emplace_back("joint.l" + std::to_string(i), c.d_t, c.joint_heads);
  }

  nn::ViT<T>& df_vit(int k) { return vit_df[cfg.per_frame_branch_weights ? k : 0]; }
  nn::ViT<T>& m_vit(int k) { return vit_m[cfg.per_frame_branch_weights ? k : 0]; }
  nn::ViT<T>& l_vit(int k) { return vit_l[cfg.per_frame_branch_weights ? k : 0]; }

  // Token rows: 0 t1 | 1 s1 | 2..L+1 DF | L+2 s2 | L+3..2L+2 FT |
  // 2L+3 s3 | 2L+4..3L+3 M | 3L+4 s4 | 3L+5..4L+4 L-Proc.
  Mat<T> assemble_tokens(const ModelInput<T>& in) {
    if (in.l != cfg.l || in.h != cfg.h || in.w != cfg.w)
      throw ShapeMismatch("model input dims do not match config");
    int L = cfg.l, D = cfg.d_t;
    Mat<T> tok(cfg.tokens(), D);
    auto set_row = [&](int r, const std::vector<T>& v) {
      std::copy(v.begin(), v.end(), tok.data() + size_t(r) * D);
    };
    set_row(0, vit_i.forward(in.i_frame.data()));
    tok.map().row(1) = specials.w.map().row(0);
    for (int k = 0; k < L; ++k)
      set_row(2 + k, df_vit(k).forward(in.frame_diffs[k].data()));
    tok.map().row(L + 2) = specials.w.map().row(1);
    Mat<T> ft = ft_table.forward(in.frame_type_ids);
    tok.map().block(L + 3, 0, L, D) = ft.map();
    tok.map().row(2 * L + 3) = specials.w.map().row(2);
    for (int k = 0; k < L; ++k) {
      Mat<T> emb = mb_table.forward(in.mb_type_maps[k]);
      set_row(2 * L + 4 + k, m_vit(k).forward(emb.data()));
    }
    tok.map().row(3 * L + 4) = specials.w.map().row(3);
    for (int k = 0; k < L; ++k)
      set_row(3 * L + 5 + k, l_vit(k).forward(in.luma_qp_maps[k].data()));
    return tok;
  }

  // GOP feature vector r (length d_r).
  std::vector<T> extract(const ModelInput<T>& in) {
    Mat<T> z = assemble_tokens(in);
    z += joint_pos.w;
    for (auto& layer : joint) z = layer.forward(z);
    z = joint_ln.forward(z);
    Mat<T> flat(1, cfg.tokens() * cfg.d_t);
    std::copy(z.v.begin(), z.v.end(), flat.data());
    return out_proj.forward(flat).v;
  }

  // Accumulates parameter gradients of (dr . r) for this input; recomputes
  // all forward state itself, so callers need no prior extract() call.
  void backward(const ModelInput<T>& in, const std::vector<T>& dr) {
    int L = cfg.l, D = cfg.d_t;
    Mat<T> tok = assemble_tokens(in);
    Mat<T> z = tok;
    z += joint_pos.w;
    for (auto& layer : joint) z = layer.forward(z);
    z = joint_ln.forward(z);
    Mat<T> flat(1, cfg.tokens() * D);
    std::copy(z.v.begin(), z.v.end(), flat.data());
    out_proj.forward(flat);

    Mat<T> dy(1, cfg.d_r);
    std::copy(dr.begin(), dr.end(), dy.data());
    Mat<T> dflat = out_proj.backward(dy);
    Mat<T> dz(cfg.tokens(), D);
    std::copy(dflat.v.begin(), dflat.v.end(), dz.data());
    dz = joint_ln.backward(dz);
    for (auto it = joint.rbegin(); it != joint.rend(); ++it) dz = it->backward(dz);
    joint_pos.g += dz;

    auto row_vec = [&](int r) {
      return std::vector<T>(dz.data() + size_t(r) * D, dz.data() + size_t(r + 1) * D);
    };
    specials.g.map().row(0) += dz.map().row(1);
    specials.g.map().row(1) += dz.map().row(L + 2);
    specials.g.map().row(2) += dz.map().row(2 * L + 3);
    specials.g.map().row(3) += dz.map().row(3 * L + 4);

    vit_i.forward(in.i_frame.data());
    vit_i.backward(row_vec(0));
    for (int k = 0; k < L; ++k) {
      auto& v = df_vit(k);
      v.forward(in.frame_diffs[k].data());
      v.backward(row_vec(2 + k));
    }
    {
      Mat<T> dft(L, D);
      dft.map() = dz.map().block(L + 3, 0, L, D);
      ft_table.forward(in.frame_type_ids);
      ft_table.backward(dft);
    }
    for (int k = 0; k < L; ++k) {
      Mat<T> emb = mb_table.forward(in.mb_type_maps[k]);
      auto& v = m_vit(k);
      v.forward(emb.data());
      Mat<T> demb(emb.rows, emb.cols);
      demb.fill(T(0));
      v.backward(row_vec(2 * L + 4 + k), demb.data());
      mb_table.backward(demb);
    }
    for (int k = 0; k < L; ++k) {
      auto& v = l_vit(k);
      v.forward(in.luma_qp_maps[k].data());
      v.backward(row_vec(3 * L + 5 + k));
    }
  }

  void visit_params(const nn::ParamVisitor<T>& fn) {
    vit_i.visit(fn);
    for (auto& v : vit_df) v.visit(fn);
    ft_table.visit(fn);
    mb_table.visit(fn);
    for (auto& v : vit_m) v.visit(fn);
    for (auto& v : vit_l) v.visit(fn);
    fn(specials);
    fn(joint_pos);
    for (auto& layer : joint) layer.visit(fn);
    joint_ln.visit(fn);
    out_proj.visit(fn);
  }

  void zero_grad() {
    visit_params([](nn::Param<T>& p) { p.zero_grad(); });
  }

  size_t param_count() {
    size_t n = 0;
    visit_params([&](nn::Param<T>& p) { n += p.size(); });
    return n;
  }

  // Deterministic initialization: one RNG stream consumed in visit order.
  void init(uint64_t seed) {
    Rng rng(seed);
    visit_params([&](nn::Param<T>& p) {
      switch (p.init) {
        case nn::Init::TruncNormal:
          for (auto& x : p.w.v) x = T(rng.truncated_normal(0.02, 0.04));
          break;
        case nn::Init::Normal:
          for (auto& x : p.w.v) x = T(rng.normal() * 0.02);
          break;
        case nn::Init::Uniform002:
          for (auto& x : p.w.v) x = T(rng.uniform(-0.002, 0.002));
          break;
        case nn::Init::One:
          p.w.fill(T(1));
          break;
        case nn::Init::Zero:
          p.w.fill(T(0));
          break;
      }
      p.zero_grad();
    });
  }
};

}  // namespace h4vdm
