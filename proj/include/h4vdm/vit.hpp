#pragma once

#include <string>
#include <vector>

#include "h4vdm/nn.hpp"

namespace h4vdm::nn {

struct ViTConfig {
  int img_h = 224, img_w = 224, channels = 1;
  int patch = 16;
  int dim = 192, depth = 8, heads = 8;
  int out_dim = 192;

  int grid_rows() const { return img_h / patch; }
  int grid_cols() const { return img_w / patch; }
  int k() const { return grid_rows() * grid_cols(); }          // patch count
  int tokens() const { return k() + 1; }                       // + class token
  int patch_len() const { return patch * patch * channels; }
};

// Image layout: row-major H x W with C interleaved channels, i.e. element
// (r, c, ch) lives at (r*W + c)*C + ch.  Output row p (patch-grid row-major)
// holds that patch's pixels in row-major order, channels interleaved.
template <typename T>
Mat<T> patchify(const T* image, const ViTConfig& cfg) {
  Mat<T> out(cfg.k(), cfg.patch_len());
  int P = cfg.patch, C = cfg.channels, W = cfg.img_w;
  for (int pr = 0; pr < cfg.grid_rows(); ++pr)
    for (int pc = 0; pc < cfg.grid_cols(); ++pc) {
      T* dst = out.data() + size_t(pr * cfg.grid_cols() + pc) * cfg.patch_len();
      for (int rr = 0; rr < P; ++rr) {
        const T* src = image + (size_t(pr * P + rr) * W + size_t(pc) * P) * C;
        std::copy_n(src, size_t(P) * C, dst);
        dst += size_t(P) * C;
      }
    }
  return out;
}

// Scatter patch-space gradients back onto an H x W x C image buffer (+=).
template <typename T>
void unpatchify_add(const Mat<T>& patches, const ViTConfig& cfg, T* image) {
  if (patches.rows != cfg.k() || patches.cols != cfg.patch_len())
    throw ShapeMismatch("unpatchify_add: patch matrix shape mismatch");
  int P = cfg.patch, C = cfg.channels, W = cfg.img_w;
  for (int pr = 0; pr < cfg.grid_rows(); ++pr)
    for (int pc = 0; pc < cfg.grid_cols(); ++pc) {
      const T* src = patches.data() + size_t(pr * cfg.grid_cols() + pc) * cfg.patch_len();
      for (int rr = 0; rr < P; ++rr) {
        T* dst = image + (size_t(pr * P + rr) * W + size_t(pc) * P) * C;
        for (int i = 0; i < P * C; ++i) dst[i] += src[i];
        src += size_t(P) * C;
      }
    }
}

// ViT encoder: linear patch embedding, a learnable class token, learnable
// position embeddings, `depth` pre-norm transformer layers, a final
// layer norm, and a linear head applied to the class-token row.
template <typename T>
struct ViT {
  ViTConfig cfg;
  Dense<T> patch_proj;
  Param<T> cls, pos;
  std::vector<TransformerLayer<T>> layers;
  LayerNorm<T> final_ln;
  Dense<T> head;

  ViT() = default;
  ViT(const std::string& name, const ViTConfig& c)
      : cfg(c),
        patch_proj(name + ".patch", c.patch_len(), c.dim),
        cls(name + ".cls", 1, c.dim, Init::Normal),
        pos(name + ".pos", c.tokens(), c.dim, Init::Normal),
        final_ln(name + ".ln", c.dim),
        head(name + ".head", c.dim, c.out_dim) {
    if (c.img_h % c.patch != 0 || c.img_w % c.patch != 0)
      throw ShapeMismatch(name + ": patch size must divide image dims");
    layers.reserve(c.depth);
    for (int i = 0; i < c.depth; ++i)
      layers.emplace_back(name + ".l" + std::to_string(i), c.dim, c.heads);
  }

  std::vector<T> forward(const T* image) {
    Mat<T> tok = patch_proj.forward(patchify(image, cfg));
    Mat<T> z(cfg.tokens(), cfg.dim);
    z.map().row(0) = cls.w.map().row(0);
    z.map().bottomRows(cfg.k()) = tok.map();
    z += pos.w;
    for (auto& layer : layers) z = layer.forward(z);
    z = final_ln.forward(z);
    Mat<T> row0(1, cfg.dim);
    row0.map().row(0) = z.map().row(0);
    Mat<T> out = head.forward(row0);
    return out.v;
  }

  // Requires warm caches from an immediately preceding forward() on the
  // same input.  Accumulates into parameter grads; optionally scatters the
  // image gradient into d_image (+=).
  void backward(const std::vector<T>& dout, T* d_image = nullptr) {
    Mat<T> dy(1, cfg.out_dim);
    std::copy(dout.begin(), dout.end(), dy.data());
    Mat<T> drow0 = head.backward(dy);
    Mat<T> dz(cfg.tokens(), cfg.dim);
    dz.fill(T(0));
    dz.map().row(0) = drow0.map().row(0);
    dz = final_ln.backward(dz);
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) dz = it->backward(dz);
    pos.g += dz;
    cls.g.map().row(0) += dz.map().row(0);
    Mat<T> dtok(cfg.k(), cfg.dim);
    dtok.map() = dz.map().bottomRows(cfg.k());
    Mat<T> dpatches = patch_proj.backward(dtok);
    if (d_image) unpatchify_add(dpatches, cfg, d_image);
  }

  void visit(const ParamVisitor<T>& fn) {
    patch_proj.visit(fn);
    fn(cls);
    fn(pos);
    for (auto& layer : layers) layer.visit(fn);
    final_ln.visit(fn);
    head.visit(fn);
  }
};

}  // namespace h4vdm::nn
