#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "dlr/errors.hpp"
#include "dlr/rng.hpp"

namespace dlr {

// ============================================================================
// Dense row-major tensor
// ============================================================================
//
// The smallest storage type that supports the tiny transformer and the
// routers: row-major data, no views, no broadcasting beyond the trailing-axis
// bias add. T is float in the default pipeline and double in test mode, where
// gradient checks against finite differences are meaningful.

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(element_count(shape)), T(0));
  }

  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(element_count(shape)) != data.size()) {
      throw DimensionError("tensor data length does not match shape");
    }
  }

  static long long element_count(const std::vector<int>& s) {
    long long n = 1;
    for (int dim : s) n *= dim;
    return n;
  }

  long long size() const { return static_cast<long long>(data.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  static Tensor zeros(int r, int c) { return Tensor({r, c}); }

  static Tensor full(std::vector<int> s, T value) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  static Tensor identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// ============================================================================
// Forward operations
// ============================================================================

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    throw DimensionError("matmul: inner dimensions disagree (" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
  }
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out({m, n});
  // ikj order keeps the inner loop contiguous in both b and out.
  for (int i = 0; i < m; ++i) {
    const T* arow = &a.data[static_cast<std::size_t>(i) * k];
    T* orow = &out.data[static_cast<std::size_t>(i) * n];
    for (int kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      if (aik == T(0)) continue;
      const T* brow = &b.data[static_cast<std::size_t>(kk) * n];
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.shape.size() != 2) throw DimensionError("transpose: rank-2 tensor required");
  Tensor<T> out({a.shape[1], a.shape[0]});
  for (int i = 0; i < a.shape[0]; ++i)
    for (int j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

// Standard normal CDF; the exact Phi, not the tanh approximation.
template <typename T>
T gauss_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gauss_pdf(T x) {
  return std::exp(-x * x / T(2)) / std::sqrt(T(2) * T(3.14159265358979323846));
}

template <typename T>
T gelu_scalar(T x) {
  return x * gauss_cdf(x);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (T& v : out.data) v = gelu_scalar(v);
  return out;
}

// Row-wise softmax with the usual max shift.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Tensor<T> out = x;
  const int r = x.rows(), c = x.cols();
  for (int i = 0; i < r; ++i) {
    T mx = out.at(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
    T sum = T(0);
    for (int j = 0; j < c; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& v, int axis) {
  if (v.shape.size() == 1) {
    Tensor<T> row({1, v.shape[0]});
    row.data = v.data;
    Tensor<T> sm = softmax_rows(row);
    Tensor<T> out = v;
    out.data = sm.data;
    return out;
  }
  if (axis == 1 || axis == -1) return softmax_rows(v);
  Tensor<T> t = softmax_rows(transpose(v));
  return transpose(t);
}

// Per-row layer normalization: zero mean, unit variance over the trailing
// axis, then scale/shift. A constant row normalizes to zeros before gamma.
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5)) {
  const int r = x.rows(), c = x.cols();
  Tensor<T> out({r, c});
  for (int i = 0; i < r; ++i) {
    T mean = T(0);
    for (int j = 0; j < c; ++j) mean += x.at(i, j);
    mean /= T(c);
    T var = T(0);
    for (int j = 0; j < c; ++j) {
      const T d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= T(c);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      out.at(i, j) = (x.at(i, j) - mean) * inv * gamma.data[j] + beta.data[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

// Trailing-axis bias add: bias has one row, broadcast over the rows of a.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  if (static_cast<int>(bias.data.size()) != a.cols()) {
    throw DimensionError("add_bias: bias length must equal trailing axis");
  }
  Tensor<T> out = a;
  const int r = a.rows(), c = a.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) += bias.data[j];
  return out;
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  const int r = a.rows(), c = a.cols();
  Tensor<T> out({1, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.data[j] += a.at(i, j);
  for (T& v : out.data) v /= T(r);
  return out;
}

template <typename T>
void fill_xavier_uniform(Tensor<T>& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (T& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace dlr
