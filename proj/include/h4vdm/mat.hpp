#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "h4vdm/errors.hpp"

namespace h4vdm::nn {

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-major 2D tensor over a flat buffer. All NN ops run on these; images
// enter as patchified matrices, vectors as 1xN rows.
template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * c, T(0)) {}
  Mat(int r, int c, std::vector<T> data) : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != size_t(r) * c) throw ShapeMismatch("Mat data does not match shape");
  }

  size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T& at(int r, int c) { return v[size_t(r) * cols + c]; }
  T at(int r, int c) const { return v[size_t(r) * cols + c]; }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  Eigen::Map<EigenRowMat<T>> map() { return {v.data(), rows, cols}; }
  Eigen::Map<const EigenRowMat<T>> map() const { return {v.data(), rows, cols}; }

  Mat& operator+=(const Mat& o) {
    require_same_shape(o, "+=");
    map() += o.map();
    return *this;
  }

  void require_same_shape(const Mat& o, const std::string& what) const {
    if (rows != o.rows || cols != o.cols)
      throw ShapeMismatch("shape mismatch in " + what + ": " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " vs " + std::to_string(o.rows) + "x" +
                          std::to_string(o.cols));
  }
};

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows)
    throw ShapeMismatch("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                        " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  Mat<T> c(a.rows, b.cols);
  c.map().noalias() = a.map() * b.map();
  return c;
}

}  // namespace h4vdm::nn
