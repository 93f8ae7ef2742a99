#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/tensor.hpp"

namespace nsm {

/// Forward values of a computation plus, when recording, the reverse pass
/// that accumulates gradients into bound parameter tensors.
///
/// Every op computes its value eagerly. A non-recording tape is a plain
/// evaluator: inference and training share the same arithmetic, so their
/// forward values agree bit for bit.
class Tape {
 public:
  using Id = std::size_t;
  using Binding = std::vector<std::pair<const Tensor*, Tensor*>>;

  /// Non-recording evaluator.
  Tape() = default;

  /// Recording tape; `binding` maps each parameter to its gradient tensor.
  explicit Tape(const Binding& binding) : record_(true) {
    for (const auto& [p, g] : binding) grads_of_.emplace(p, g);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  const Vec& value(Id id) const { return values_[id]; }
  double scalar(Id id) const { return values_[id][0]; }
  std::size_t size() const { return values_.size(); }

  Id constant(Vec v) { return push(std::move(v)); }

  /// Row `r` of a parameter matrix (embedding lookup).
  Id param_row(const Tensor& table, std::size_t r) {
    auto row = table.row(r);
    const Id out = push(Vec(row.begin(), row.end()));
    if (record_) {
      Tensor* g = grad_of(table);
      on_backward([this, out, g, r] {
        auto gr = g->row(r);
        const auto& go = grads_[out];
        for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += go[i];
      });
    }
    return out;
  }

  /// A whole rank-1 parameter (bias).
  Id param(const Tensor& bias) {
    const Id out = push(bias.data);
    if (record_) {
      Tensor* g = grad_of(bias);
      on_backward([this, out, g] {
        const auto& go = grads_[out];
        for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i];
      });
    }
    return out;
  }

  Id matvec(const Tensor& w, Id x) {
    Vec y(w.rows());
    kernel::matvec(w, values_[x], y);
    const Id out = push(std::move(y));
    if (record_) {
      Tensor* g = grad_of(w);
      on_backward([this, out, x, g, &w] {
        const auto& go = grads_[out];
        kernel::outer_acc(go, values_[x], *g);
        kernel::matvec_transpose_acc(w, go, grad(x));
      });
    }
    return out;
  }

  Id add(Id a, Id b) {
    check_same(a, b);
    Vec y(values_[a].size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = values_[a][i] + values_[b][i];
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a, b] {
        const auto& go = grads_[out];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        auto& gb = grad(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      });
    return out;
  }

  Id mul(Id a, Id b) {
    check_same(a, b);
    Vec y(values_[a].size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = values_[a][i] * values_[b][i];
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a, b] {
        const auto& go = grads_[out];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * values_[b][i];
        auto& gb = grad(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * values_[a][i];
      });
    return out;
  }

  Id sigmoid(Id a) {
    Vec y(values_[a].size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = kernel::sigmoid(values_[a][i]);
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a] {
        const auto& go = grads_[out];
        const auto& y = values_[out];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
      });
    return out;
  }

  Id tanh(Id a) {
    Vec y(values_[a].size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(values_[a][i]);
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a] {
        const auto& go = grads_[out];
        const auto& y = values_[out];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
      });
    return out;
  }

  /// 1 - a, elementwise.
  Id one_minus(Id a) {
    Vec y(values_[a].size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 - values_[a][i];
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a] {
        const auto& go = grads_[out];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] -= go[i];
      });
    return out;
  }

  Id concat(Id a, Id b) {
    Vec y = values_[a];
    y.insert(y.end(), values_[b].begin(), values_[b].end());
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a, b] {
        const auto& go = grads_[out];
        const std::size_t na = values_[a].size();
        auto& ga = grad(a);
        for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
        auto& gb = grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[na + i];
      });
    return out;
  }

  /// Scalar a . b.
  Id dot(Id a, Id b) {
    check_same(a, b);
    const Id out = push(Vec{kernel::dot(values_[a], values_[b])});
    if (record_)
      on_backward([this, out, a, b] {
        const double go = grads_[out][0];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * values_[b][i];
        auto& gb = grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go * values_[a][i];
      });
    return out;
  }

  /// Concatenates scalars into one vector.
  Id stack(const std::vector<Id>& scalars) {
    Vec y;
    y.reserve(scalars.size());
    for (Id s : scalars) y.push_back(values_[s][0]);
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, scalars] {
        const auto& go = grads_[out];
        for (std::size_t i = 0; i < scalars.size(); ++i) grad(scalars[i])[0] += go[i];
      });
    return out;
  }

  Id softmax(Id a) {
    const Id out = push(kernel::softmax(values_[a]));
    if (record_)
      on_backward([this, out, a] {
        const auto& go = grads_[out];
        const auto& y = values_[out];
        const double s = kernel::dot(go, y);
        auto& ga = grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += y[i] * (go[i] - s);
      });
    return out;
  }

  /// sum_i w[i] * xs[i].
  Id weighted_sum(Id weights, const std::vector<Id>& xs) {
    if (xs.empty() || values_[weights].size() != xs.size()) throw ContractError("weighted_sum size mismatch");
    Vec y(values_[xs[0]].size(), 0.0);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      const double w = values_[weights][t];
      const auto& x = values_[xs[t]];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += w * x[i];
    }
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, weights, xs] {
        const auto& go = grads_[out];
        for (std::size_t t = 0; t < xs.size(); ++t) {
          grad(weights)[t] += kernel::dot(go, values_[xs[t]]);
          const double w = values_[weights][t];
          auto& gx = grad(xs[t]);
          for (std::size_t i = 0; i < go.size(); ++i) gx[i] += w * go[i];
        }
      });
    return out;
  }

  Id mean(const std::vector<Id>& xs) {
    if (xs.empty()) throw ContractError("mean of no vectors");
    Vec y(values_[xs[0]].size(), 0.0);
    for (Id x : xs)
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += values_[x][i];
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (auto& v : y) v *= inv;
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, xs, inv] {
        const auto& go = grads_[out];
        for (Id x : xs) {
          auto& gx = grad(x);
          for (std::size_t i = 0; i < go.size(); ++i) gx[i] += inv * go[i];
        }
      });
    return out;
  }

  /// Scalar log p(index) under the softmax of `logits` restricted to `mask`.
  Id log_prob(Id logits, const std::vector<bool>& mask, std::size_t index) {
    if (index >= mask.size() || !mask[index]) throw ContractError("log_prob of a masked entry");
    const Vec logp = kernel::masked_log_softmax(values_[logits], mask);
    const Id out = push(Vec{logp[index]});
    if (record_)
      on_backward([this, out, logits, mask, index, logp] {
        const double go = grads_[out][0];
        auto& gl = grad(logits);
        for (std::size_t i = 0; i < gl.size(); ++i)
          if (mask[i]) gl[i] -= go * std::exp(logp[i]);
        gl[index] += go;
      });
    return out;
  }

  Id sum(const std::vector<Id>& scalars) {
    double s = 0.0;
    for (Id x : scalars) s += values_[x][0];
    const Id out = push(Vec{s});
    if (record_)
      on_backward([this, out, scalars] {
        const double go = grads_[out][0];
        for (Id x : scalars) grad(x)[0] += go;
      });
    return out;
  }

  Id scale(Id a, double k) {
    Vec y = values_[a];
    for (auto& v : y) v *= k;
    const Id out = push(std::move(y));
    if (record_)
      on_backward([this, out, a, k] {
        const auto& go = grads_[out];
        auto& ga = grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += k * go[i];
      });
    return out;
  }

  /// Reverse pass from scalar `root` with d(objective)/d(root) = `seed`,
  /// adding into the bound gradient tensors. May be called once.
  void backward(Id root, double seed = 1.0) {
    if (!record_) throw ContractError("backward on a non-recording tape");
    if (done_) throw ContractError("backward called twice");
    done_ = true;
    if (values_[root].size() != 1) throw ContractError("backward root must be a scalar");
    grads_.resize(values_.size());
    grad(root)[0] = seed;
    for (std::size_t i = backward_.size(); i-- > 0;) {
      const auto& [node, fn] = backward_[i];
      if (node > root) continue;
      if (grads_[node].empty()) continue;  // no gradient reached this node
      fn();
    }
  }

 private:
  Id push(Vec v) {
    values_.push_back(std::move(v));
    return values_.size() - 1;
  }

  void on_backward(std::function<void()> fn) { backward_.emplace_back(values_.size() - 1, std::move(fn)); }

  Vec& grad(Id id) {
    auto& g = grads_[id];
    if (g.empty()) g.assign(values_[id].size(), 0.0);
    return g;
  }

  Tensor* grad_of(const Tensor& p) {
    auto it = grads_of_.find(&p);
    if (it == grads_of_.end()) throw ContractError("tensor is not bound to this tape");
    return it->second;
  }

  void check_same(Id a, Id b) const {
    if (values_[a].size() != values_[b].size()) throw ContractError("shape mismatch between tape nodes");
  }

  bool record_ = false;
  bool done_ = false;
  std::vector<Vec> values_;
  std::vector<Vec> grads_;
  std::vector<std::pair<Id, std::function<void()>>> backward_;
  std::unordered_map<const Tensor*, Tensor*> grads_of_;
};

}  // namespace nsm
