#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "h4vdm/mat.hpp"

namespace h4vdm::nn {

// How init_params fills a parameter; assigned at layer construction.
enum class Init { TruncNormal, Normal, Uniform002, One, Zero };

template <typename T>
struct Param {
  std::string name;
  Init init = Init::TruncNormal;
  Mat<T> w, g;

  Param() = default;
  Param(std::string n, int r, int c, Init i) : name(std::move(n)), init(i), w(r, c), g(r, c) {}
  size_t size() const { return w.size(); }
  void zero_grad() { g.fill(T(0)); }
};

template <typename T>
using ParamVisitor = std::function<void(Param<T>&)>;

// ------------------------------------------------------------------ softmax

template <typename T>
void softmax_rows_inplace(Mat<T>& x) {
  for (int r = 0; r < x.rows; ++r) {
    T* row = x.data() + size_t(r) * x.cols;
    T mx = row[0];
    for (int c = 1; c < x.cols; ++c) mx = std::max(mx, row[c]);
    T sum = T(0);
    for (int c = 0; c < x.cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < x.cols; ++c) row[c] /= sum;
  }
}

template <typename T>
Mat<T> softmax_rows(const Mat<T>& x) {
  Mat<T> y = x;
  softmax_rows_inplace(y);
  return y;
}

// y is the softmax output; dx_j = y_j * (dy_j - sum_k dy_k y_k)
template <typename T>
Mat<T> softmax_rows_backward(const Mat<T>& y, const Mat<T>& dy) {
  y.require_same_shape(dy, "softmax backward");
  Mat<T> dx(y.rows, y.cols);
  for (int r = 0; r < y.rows; ++r) {
    const T* yr = y.data() + size_t(r) * y.cols;
    const T* dyr = dy.data() + size_t(r) * y.cols;
    T dot = T(0);
    for (int c = 0; c < y.cols; ++c) dot += yr[c] * dyr[c];
    T* dxr = dx.data() + size_t(r) * y.cols;
    for (int c = 0; c < y.cols; ++c) dxr[c] = yr[c] * (dyr[c] - dot);
  }
  return dx;
}

// -------------------------------------------------------------------- GELU

template <typename T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad_scalar(T x) {
  T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);  // 1/sqrt(2*pi)
  return cdf + x * pdf;
}

template <typename T>
Mat<T> gelu(const Mat<T>& x) {
  Mat<T> y(x.rows, x.cols);
  for (size_t i = 0; i < x.size(); ++i) y.v[i] = gelu_scalar(x.v[i]);
  return y;
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  x.require_same_shape(dy, "gelu backward");
  Mat<T> dx(x.rows, x.cols);
  for (size_t i = 0; i < x.size(); ++i) dx.v[i] = dy.v[i] * gelu_grad_scalar(x.v[i]);
  return dx;
}

// -------------------------------------------------------------------- Dense

template <typename T>
struct Dense {
  Param<T> w;  // in x out
  Param<T> b;  // 1 x out when biased
  bool has_bias = true;
  Mat<T> x_cache;

  Dense() = default;
  Dense(const std::string& name, int in, int out, bool bias = true,
        Init weight_init = Init::TruncNormal)
      : w(name + ".w", in, out, weight_init),
        b(name + ".b", bias ? 1 : 0, bias ? out : 0, Init::Zero),
        has_bias(bias) {}

  Mat<T> forward(const Mat<T>& x) {
    if (x.cols != w.w.rows)
      throw ShapeMismatch(w.name + ": input cols " + std::to_string(x.cols) + " != " +
                          std::to_string(w.w.rows));
    x_cache = x;
    Mat<T> y(x.rows, w.w.cols);
    y.map().noalias() = x.map() * w.w.map();
    if (has_bias) y.map().rowwise() += b.w.map().row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    w.g.map().noalias() += x_cache.map().transpose() * dy.map();
    if (has_bias) b.g.map().row(0) += dy.map().colwise().sum();
    Mat<T> dx(x_cache.rows, w.w.rows);
    dx.map().noalias() = dy.map() * w.w.map().transpose();
    return dx;
  }

  void visit(const ParamVisitor<T>& fn) {
    fn(w);
    if (has_bias) fn(b);
  }
};

// ---------------------------------------------------------------- LayerNorm

template <typename T>
struct LayerNorm {
  Param<T> gamma, beta;
  T eps = T(1e-5);
  Mat<T> x_cache;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int d)
      : gamma(name + ".g", 1, d, Init::One), beta(name + ".b", 1, d, Init::Zero) {}

  Mat<T> forward(const Mat<T>& x) {
    if (x.cols != gamma.w.cols) throw ShapeMismatch(gamma.name + ": layernorm width mismatch");
    x_cache = x;
    Mat<T> y(x.rows, x.cols);
    int d = x.cols;
    for (int r = 0; r < x.rows; ++r) {
      const T* xr = x.data() + size_t(r) * d;
      T* yr = y.data() + size_t(r) * d;
      T mu = T(0);
      for (int c = 0; c < d; ++c) mu += xr[c];
      mu /= T(d);
      T var = T(0);
      for (int c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
      var /= T(d);
      T inv = T(1) / std::sqrt(var + eps);
      for (int c = 0; c < d; ++c)
        yr[c] = (xr[c] - mu) * inv * gamma.w.v[c] + beta.w.v[c];
    }
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    const Mat<T>& x = x_cache;
    x.require_same_shape(dy, "layernorm backward");
    Mat<T> dx(x.rows, x.cols);
    int d = x.cols;
    for (int r = 0; r < x.rows; ++r) {
      const T* xr = x.data() + size_t(r) * d;
      const T* dyr = dy.data() + size_t(r) * d;
      T* dxr = dx.data() + size_t(r) * d;
      T mu = T(0);
      for (int c = 0; c < d; ++c) mu += xr[c];
      mu /= T(d);
      T var = T(0);
      for (int c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
      var /= T(d);
      T inv = T(1) / std::sqrt(var + eps);
      // dxhat, plus parameter grads
      T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
      for (int c = 0; c < d; ++c) {
        T xhat = (xr[c] - mu) * inv;
        T dxhat = dyr[c] * gamma.w.v[c];
        gamma.g.v[c] += dyr[c] * xhat;
        beta.g.v[c] += dyr[c];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
      }
      mean_dxhat /= T(d);
      mean_dxhat_xhat /= T(d);
      for (int c = 0; c < d; ++c) {
        T xhat = (xr[c] - mu) * inv;
        T dxhat = dyr[c] * gamma.w.v[c];
        dxr[c] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
      }
    }
    return dx;
  }

  void visit(const ParamVisitor<T>& fn) {
    fn(gamma);
    fn(beta);
  }
};

// ---------------------------------------------------------------- Embedding

template <typename T>
struct Embedding {
  Param<T> table;  // vocab x dim
  std::vector<int> ids_cache;

  Embedding() = default;
  Embedding(const std::string& name, int vocab, int dim)
      : table(name, vocab, dim, Init::Normal) {}

  // Accepts any range of integral ids (int, uint8_t, ...).
  template <typename Ids>
  Mat<T> forward(const Ids& ids) {
    Mat<T> y(int(std::size(ids)), table.w.cols);
    ids_cache.clear();
    ids_cache.reserve(std::size(ids));
    size_t i = 0;
    for (auto raw : ids) {
      int id = int(raw);
      if (id < 0 || id >= table.w.rows)
        throw IndexOutOfRange(table.name + ": id " + std::to_string(id) + " outside vocab " +
                              std::to_string(table.w.rows));
      std::copy_n(table.w.data() + size_t(id) * table.w.cols, table.w.cols,
                  y.data() + i * table.w.cols);
      ids_cache.push_back(id);
      ++i;
    }
    return y;
  }

  void backward(const Mat<T>& dy) {
    for (size_t i = 0; i < ids_cache.size(); ++i) {
      T* grow = table.g.data() + size_t(ids_cache[i]) * table.g.cols;
      const T* dyr = dy.data() + i * dy.cols;
      for (int c = 0; c < dy.cols; ++c) grow[c] += dyr[c];
    }
  }

  void visit(const ParamVisitor<T>& fn) { fn(table); }
};

// ---------------------------------------------------- multi-head attention

// Per head i, columns [3*dh*i, 3*dh*(i+1)) of U hold the packed [q|k|v]
// projection; outputs are concatenated and projected by V (biased).
template <typename T>
struct MultiHeadAttention {
  int d = 0, heads = 0, dh = 0;
  Param<T> u;     // d x 3d, no bias
  Dense<T> proj;  // d x d

  Mat<T> z_cache, qkv_cache;
  std::vector<Mat<T>> attn_cache;  // per-head row-softmax outputs

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int d_, int heads_)
      : d(d_), heads(heads_), dh(d_ / heads_),
        u(name + ".u", d_, 3 * d_, Init::TruncNormal),
        proj(name + ".v", d_, d_) {
    if (heads_ <= 0 || d_ % heads_ != 0)
      throw ShapeMismatch(name + ": heads must divide model dim");
  }

  // Single-head attention over precomputed qkv columns; exposed for tests.
  static Mat<T> head_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, Mat<T>* attn) {
    T scale = T(1) / std::sqrt(T(q.cols));
    Mat<T> logits(q.rows, k.rows);
    logits.map().noalias() = q.map() * k.map().transpose() * scale;
    softmax_rows_inplace(logits);
    if (attn) *attn = logits;
    Mat<T> out(q.rows, v.cols);
    out.map().noalias() = logits.map() * v.map();
    return out;
  }

  Mat<T> forward(const Mat<T>& z) {
    if (z.cols != d) throw ShapeMismatch(u.name + ": attention width mismatch");
    z_cache = z;
    int n = z.rows;
    qkv_cache = Mat<T>(n, 3 * d);
    qkv_cache.map().noalias() = z.map() * u.w.map();
    attn_cache.assign(heads, Mat<T>());
    Mat<T> concat(n, d);
    T scale = T(1) / std::sqrt(T(dh));
    for (int i = 0; i < heads; ++i) {
      auto q = qkv_cache.map().block(0, 3 * dh * i, n, dh);
      auto k = qkv_cache.map().block(0, 3 * dh * i + dh, n, dh);
      auto v = qkv_cache.map().block(0, 3 * dh * i + 2 * dh, n, dh);
      Mat<T>& a = attn_cache[i];
      a = Mat<T>(n, n);
      a.map().noalias() = q * k.transpose() * scale;
      softmax_rows_inplace(a);
      concat.map().block(0, dh * i, n, dh).noalias() = a.map() * v;
    }
    return proj.forward(concat);
  }

  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> dconcat = proj.backward(dy);
    int n = z_cache.rows;
    T scale = T(1) / std::sqrt(T(dh));
    Mat<T> dqkv(n, 3 * d);
    for (int i = 0; i < heads; ++i) {
      auto q = qkv_cache.map().block(0, 3 * dh * i, n, dh);
      auto k = qkv_cache.map().block(0, 3 * dh * i + dh, n, dh);
      auto v = qkv_cache.map().block(0, 3 * dh * i + 2 * dh, n, dh);
      auto dO = dconcat.map().block(0, dh * i, n, dh);
      const Mat<T>& a = attn_cache[i];

      Mat<T> da(n, n);
      da.map().noalias() = dO * v.transpose();
      Mat<T> dlogits = softmax_rows_backward(a, da);
      dqkv.map().block(0, 3 * dh * i, n, dh).noalias() = dlogits.map() * k * scale;
      dqkv.map().block(0, 3 * dh * i + dh, n, dh).noalias() =
          dlogits.map().transpose() * q * scale;
      dqkv.map().block(0, 3 * dh * i + 2 * dh, n, dh).noalias() = a.map().transpose() * dO;
    }
    u.g.map().noalias() += z_cache.map().transpose() * dqkv.map();
    Mat<T> dz(n, d);
    dz.map().noalias() = dqkv.map() * u.w.map().transpose();
    return dz;
  }

  void visit(const ParamVisitor<T>& fn) {
    fn(u);
    proj.visit(fn);
  }
};

// ------------------------------------------------------- transformer layer

// Pre-norm residual block: Z + MSA(LN1(Z)), then + MLP(LN2(.)) with GELU and
// hidden width 4D.
template <typename T>
struct TransformerLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> msa;
  Dense<T> fc1, fc2;
  Mat<T> h_cache;  // pre-GELU hidden

  TransformerLayer() = default;
  TransformerLayer(const std::string& name, int d, int heads)
      : ln1(name + ".ln1", d), ln2(name + ".ln2", d), msa(name + ".msa", d, heads),
        fc1(name + ".fc1", d, 4 * d), fc2(name + ".fc2", 4 * d, d) {}

  Mat<T> forward(const Mat<T>& z) {
    Mat<T> z1 = z;
    z1 += msa.forward(ln1.forward(z));
    h_cache = fc1.forward(ln2.forward(z1));
    Mat<T> out = z1;
    out += fc2.forward(gelu(h_cache));
    return out;
  }

  Mat<T> backward(const Mat<T>& dout) {
    Mat<T> dh = gelu_backward(h_cache, fc2.backward(dout));
    Mat<T> dz1 = dout;
    dz1 += ln2.backward(fc1.backward(dh));
    Mat<T> dz = dz1;
    dz += ln1.backward(msa.backward(dz1));
    return dz;
  }

  void visit(const ParamVisitor<T>& fn) {
    ln1.visit(fn);
    msa.visit(fn);
    ln2.visit(fn);
    fc1.visit(fn);
    fc2.visit(fn);
  }
};

}  // namespace h4vdm::nn
