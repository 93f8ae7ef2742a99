#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nsm/error.hpp"

namespace nsm {

using Vec = std::vector<double>;

/// Dense row-major tensor of doubles (rank 1 or 2 in practice).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims)
      : shape(std::move(dims)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), 0.0) {}

  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor vector(std::size_t n) { return Tensor({n}); }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data).subspan(r * cols(), cols()); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void fill_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& x : data) x = u(rng);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace kernel {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// out = W x, W of shape [rows, cols].
inline void matvec(const Tensor& w, std::span<const double> x, std::span<double> out) {
  if (w.shape.size() != 2 || w.cols() != x.size() || w.rows() != out.size())
    throw ContractError("matvec shape mismatch");
  const std::size_t cols = w.cols();
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(std::span<const double>(w.data).subspan(r * cols, cols), x);
}

/// gx += W^T g.
inline void matvec_transpose_acc(const Tensor& w, std::span<const double> g, std::span<double> gx) {
  const std::size_t cols = w.cols();
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* wr = w.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) gx[c] += wr[c] * gr;
  }
}

/// gW += g x^T.
inline void outer_acc(std::span<const double> g, std::span<const double> x, Tensor& gw) {
  const std::size_t cols = gw.cols();
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = gw.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

/// Numerically stable softmax.
inline Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("softmax of empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += out[i] = std::exp(logits[i] - mx);
  for (auto& p : out) p /= z;
  return out;
}

/// Log-softmax restricted to `mask`; masked entries are -infinity.
inline Vec masked_log_softmax(std::span<const double> logits, const std::vector<bool>& mask) {
  if (mask.size() != logits.size()) throw ContractError("mask length differs from logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) mx = std::max(mx, logits[i]);
  if (mx == -std::numeric_limits<double>::infinity()) throw ContractError("masked softmax with no valid entry");
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) z += std::exp(logits[i] - mx);
  const double log_z = mx + std::log(z);
  Vec out(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) out[i] = logits[i] - log_z;
  return out;
}

}  // namespace kernel

/// Softmax over the entries where `mask` is true. Masked entries are exactly
/// 0; the rest are normalized after subtracting the largest valid logit.
inline Vec masked_softmax(std::span<const double> logits, const std::vector<bool>& mask) {
  if (mask.size() != logits.size()) throw ContractError("mask length differs from logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) mx = std::max(mx, logits[i]);
  if (mx == -std::numeric_limits<double>::infinity()) throw ContractError("masked softmax with no valid entry");
  Vec out(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) z += out[i] = std::exp(logits[i] - mx);
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) out[i] /= z;
  return out;
}

}  // namespace nsm
