#include "h4vdm/model.hpp"

namespace h4vdm {

ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  c.preset = name;
  if (name == "S") {
    c.d_vit1 = 192;
    c.d_t = 192;
  } else if (name == "B") {
    c.d_vit1 = 256;
    c.d_t = 256;
  } else if (name == "L") {
    c.d_vit1 = 320;
    c.d_t = 320;
  } else if (name == "tiny") {
    c.l = 4;
    c.h = c.w = 64;
    c.p = 16;
    c.d_vit1 = 32;
    c.vit1_depth = 4;
    c.vit1_heads = 4;
    c.d_vit2 = 16;
    c.vit2_depth = 2;
    c.vit2_heads = 2;
    c.d_t = 32;
    c.d_r = 64;
    c.joint_depth = 4;
    c.joint_heads = 4;
    c.per_frame_branch_weights = false;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return c;
}

namespace {

using ShapeFn = std::function<void(const std::string&, int, int)>;

void layer_shapes(const std::string& name, int d, const ShapeFn& fn) {
  fn(name + ".ln1.g", 1, d);
  fn(name + ".ln1.b", 1, d);
  fn(name + ".msa.u", d, 3 * d);
  fn(name + ".msa.v.w", d, d);
  fn(name + ".msa.v.b", 1, d);
  fn(name + ".ln2.g", 1, d);
  fn(name + ".ln2.b", 1, d);
  fn(name + ".fc1.w", d, 4 * d);
  fn(name + ".fc1.b", 1, 4 * d);
  fn(name + ".fc2.w", 4 * d, d);
  fn(name + ".fc2.b", 1, d);
}

void vit_shapes(const std::string& name, const nn::ViTConfig& c, const ShapeFn& fn) {
  fn(name + ".patch.w", c.patch_len(), c.dim);
  fn(name + ".patch.b", 1, c.dim);
  fn(name + ".cls", 1, c.dim);
  fn(name + ".pos", c.tokens(), c.dim);
  for (int i = 0; i < c.depth; ++i) layer_shapes(name + ".l" + std::to_string(i), c.dim, fn);
  fn(name + ".ln.g", 1, c.dim);
  fn(name + ".ln.b", 1, c.dim);
  fn(name + ".head.w", c.dim, c.out_dim);
  fn(name + ".head.b", 1, c.out_dim);
}

}  // namespace

void for_each_param_shape(const ModelConfig& cfg, const ShapeFn& fn) {
  vit_shapes("vit_i", cfg.vit1_cfg(), fn);
  int sets = cfg.per_frame_branch_weights ? cfg.l : 1;
  for (int i = 0; i < sets; ++i) vit_shapes("vit_df" + std::to_string(i), cfg.vit1_cfg(), fn);
  fn("ft_table", cfg.ft_vocab, cfg.d_t);
  fn("mb_table", cfg.mb_vocab, cfg.mb_dim);
  for (int i = 0; i < sets; ++i) vit_shapes("vit_m" + std::to_string(i), cfg.vit2_m_cfg(), fn);
  for (int i = 0; i < sets; ++i) vit_shapes("vit_l" + std::to_string(i), cfg.vit2_l_cfg(), fn);
  fn("specials", 4, cfg.d_t);
  fn("joint_pos", cfg.tokens(), cfg.d_t);
  for (int i = 0; i < cfg.joint_depth; ++i)
    layer_shapes("joint.l" + std::to_string(i), cfg.d_t, fn);
  fn("joint.ln.g", 1, cfg.d_t);
  fn("joint.ln.b", 1, cfg.d_t);
  fn("out_proj.w", cfg.tokens() * cfg.d_t, cfg.d_r);
  fn("out_proj.b", 1, cfg.d_r);
}

size_t param_count_for(const ModelConfig& cfg) {
  size_t n = 0;
  for_each_param_shape(cfg, [&](const std::string&, int r, int c) { n += size_t(r) * c; });
  return n;
}

}  // namespace h4vdm
