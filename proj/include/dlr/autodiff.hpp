#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dlr/tensor.hpp"

namespace dlr {

// ============================================================================
// Reverse-mode autodiff over a fixed operation set
// ============================================================================
//
// A Graph records every operation applied through it and replays the chain
// rule in reverse creation order, which is already topological. Nodes are
// addressed by index (Var); values are dense tensors. A Graph is confined to
// one worker for its lifetime; forward-only helpers in tensor.hpp stay free
// of any recording.

template <typename T>
class Graph {
 public:
  using Var = int;

  Var input(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), {}, nullptr, requires_grad);
  }

  const Tensor<T>& value(Var v) const { return nodes_[v].value; }
  const Tensor<T>& grad_of(Var v) const { return nodes_[v].grad; }

  T scalar(Var v) const {
    if (nodes_[v].value.size() != 1) throw DimensionError("scalar: node is not scalar");
    return nodes_[v].value.data[0];
  }

  Var add(Var a, Var b) {
    Tensor<T> out = dlr::add(value(a), value(b));
    return push(std::move(out), {a, b}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      g.accumulate(n.parents[0], n.grad);
      g.accumulate(n.parents[1], n.grad);
    });
  }

  Var add_bias(Var a, Var bias) {
    Tensor<T> out = dlr::add_bias(value(a), value(bias));
    return push(std::move(out), {a, bias}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      g.accumulate(n.parents[0], n.grad);
      Tensor<T>& bg = g.nodes_[n.parents[1]].grad;
      const int r = n.grad.rows(), c = n.grad.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) bg.data[j] += n.grad.at(i, j);
    });
  }

  Var mul(Var a, Var b) {
    if (!value(a).same_shape(value(b))) throw DimensionError("mul: shape mismatch");
    Tensor<T> out = value(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
    return push(std::move(out), {a, b}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      const Tensor<T>& av = g.value(n.parents[0]);
      const Tensor<T>& bv = g.value(n.parents[1]);
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      Tensor<T>& bg = g.nodes_[n.parents[1]].grad;
      for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
        ag.data[i] += n.grad.data[i] * bv.data[i];
        bg.data[i] += n.grad.data[i] * av.data[i];
      }
    });
  }

  Var scale(Var a, T c) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v *= c;
    return push(std::move(out), {a}, [c](Graph& g, int id) {
      auto& n = g.nodes_[id];
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      for (std::size_t i = 0; i < n.grad.data.size(); ++i) ag.data[i] += n.grad.data[i] * c;
    });
  }

  Var matmul(Var a, Var b) {
    Tensor<T> out = dlr::matmul(value(a), value(b));
    return push(std::move(out), {a, b}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      const Tensor<T>& av = g.value(n.parents[0]);
      const Tensor<T>& bv = g.value(n.parents[1]);
      g.accumulate_tensor(n.parents[0], dlr::matmul(n.grad, dlr::transpose(bv)));
      g.accumulate_tensor(n.parents[1], dlr::matmul(dlr::transpose(av), n.grad));
    });
  }

  Var transpose(Var a) {
    return push(dlr::transpose(value(a)), {a}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      g.accumulate_tensor(n.parents[0], dlr::transpose(n.grad));
    });
  }

  Var gelu(Var a) {
    return push(dlr::gelu(value(a)), {a}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      const Tensor<T>& x = g.value(n.parents[0]);
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T xi = x.data[i];
        ag.data[i] += n.grad.data[i] * (gauss_cdf(xi) + xi * gauss_pdf(xi));
      }
    });
  }

  Var softmax_rows(Var a) {
    return push(dlr::softmax_rows(value(a)), {a}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      const Tensor<T>& y = n.value;
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      const int r = y.rows(), c = y.cols();
      for (int i = 0; i < r; ++i) {
        T dot = T(0);
        for (int j = 0; j < c; ++j) dot += n.grad.at(i, j) * y.at(i, j);
        for (int j = 0; j < c; ++j) {
          ag.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
        }
      }
    });
  }

  Var layer_norm_rows(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Tensor<T>& xv = value(x);
    const int r = xv.rows(), c = xv.cols();
    // Cache mean and inverse stddev per row for the backward pass.
    auto stats = std::make_shared<std::vector<std::pair<T, T>>>();
    stats->reserve(r);
    Tensor<T> out({r, c});
    for (int i = 0; i < r; ++i) {
      T mean = T(0);
      for (int j = 0; j < c; ++j) mean += xv.at(i, j);
      mean /= T(c);
      T var = T(0);
      for (int j = 0; j < c; ++j) {
        const T d = xv.at(i, j) - mean;
        var += d * d;
      }
      var /= T(c);
      const T inv = T(1) / std::sqrt(var + eps);
      stats->emplace_back(mean, inv);
      for (int j = 0; j < c; ++j) {
        out.at(i, j) = (xv.at(i, j) - mean) * inv * value(gamma).data[j] + value(beta).data[j];
      }
    }
    return push(std::move(out), {x, gamma, beta}, [stats](Graph& g, int id) {
      auto& n = g.nodes_[id];
      const Tensor<T>& xv = g.value(n.parents[0]);
      const Tensor<T>& gv = g.value(n.parents[1]);
      Tensor<T>& xg = g.nodes_[n.parents[0]].grad;
      Tensor<T>& gg = g.nodes_[n.parents[1]].grad;
      Tensor<T>& bg = g.nodes_[n.parents[2]].grad;
      const int r = xv.rows(), c = xv.cols();
      for (int i = 0; i < r; ++i) {
        const T mean = (*stats)[i].first;
        const T inv = (*stats)[i].second;
        // dnorm = upstream * gamma; then the standard layernorm reduction.
        T sum_dn = T(0), sum_dn_xhat = T(0);
        for (int j = 0; j < c; ++j) {
          const T xhat = (xv.at(i, j) - mean) * inv;
          const T go = n.grad.at(i, j);
          gg.data[j] += go * xhat;
          bg.data[j] += go;
          const T dn = go * gv.data[j];
          sum_dn += dn;
          sum_dn_xhat += dn * xhat;
        }
        for (int j = 0; j < c; ++j) {
          const T xhat = (xv.at(i, j) - mean) * inv;
          const T dn = n.grad.at(i, j) * gv.data[j];
          xg.at(i, j) += inv * (dn - sum_dn / T(c) - xhat * sum_dn_xhat / T(c));
        }
      }
    });
  }

  Var slice_cols(Var a, int c0, int c1) {
    const Tensor<T>& av = value(a);
    const int r = av.rows();
    Tensor<T> out({r, c1 - c0});
    for (int i = 0; i < r; ++i)
      for (int j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
    return push(std::move(out), {a}, [c0, c1](Graph& g, int id) {
      auto& n = g.nodes_[id];
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      const int r = n.grad.rows();
      for (int i = 0; i < r; ++i)
        for (int j = c0; j < c1; ++j) ag.at(i, j) += n.grad.at(i, j - c0);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    int r = value(parts[0]).rows(), c = 0;
    for (Var p : parts) c += value(p).cols();
    Tensor<T> out({r, c});
    int off = 0;
    for (Var p : parts) {
      const Tensor<T>& pv = value(p);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
      off += pv.cols();
    }
    return push(std::move(out), parts, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      int off = 0;
      for (int p : n.parents) {
        Tensor<T>& pg = g.nodes_[p].grad;
        const int r = pg.rows(), c = pg.cols();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) pg.at(i, j) += n.grad.at(i, off + j);
        off += c;
      }
    });
  }

  Var mean_rows(Var a) {
    return push(dlr::mean_rows(value(a)), {a}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      const int r = ag.rows(), c = ag.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ag.at(i, j) += n.grad.data[j] / T(r);
    });
  }

  Var sum_all(Var a) {
    T s = T(0);
    for (T v : value(a).data) s += v;
    Tensor<T> out({1, 1});
    out.data[0] = s;
    return push(std::move(out), {a}, [](Graph& g, int id) {
      auto& n = g.nodes_[id];
      Tensor<T>& ag = g.nodes_[n.parents[0]].grad;
      for (T& v : ag.data) v += n.grad.data[0];
    });
  }

  // Gather embedding rows for a token sequence.
  Var embedding(Var table, const std::vector<int>& tokens) {
    const Tensor<T>& tv = value(table);
    const int d = tv.cols();
    Tensor<T> out({static_cast<int>(tokens.size()), d});
    for (std::size_t t = 0; t < tokens.size(); ++t)
      for (int j = 0; j < d; ++j) out.at(static_cast<int>(t), j) = tv.at(tokens[t], j);
    auto toks = std::make_shared<std::vector<int>>(tokens);
    return push(std::move(out), {table}, [toks](Graph& g, int id) {
      auto& n = g.nodes_[id];
      Tensor<T>& tg = g.nodes_[n.parents[0]].grad;
      const int d = tg.cols();
      for (std::size_t t = 0; t < toks->size(); ++t)
        for (int j = 0; j < d; ++j)
          tg.at((*toks)[t], j) += n.grad.at(static_cast<int>(t), j);
    });
  }

  // Mean token-level cross entropy over positions whose target is >= 0.
  // Fused log-softmax keeps the backward pass the usual (p - onehot) / n.
  Var cross_entropy(Var logits, const std::vector<int>& targets) {
    const Tensor<T>& lv = value(logits);
    const int r = lv.rows(), c = lv.cols();
    auto probs = std::make_shared<Tensor<T>>(dlr::softmax_rows(lv));
    auto tgt = std::make_shared<std::vector<int>>(targets);
    int active = 0;
    T loss = T(0);
    for (int i = 0; i < r; ++i) {
      if ((*tgt)[i] < 0) continue;
      ++active;
      loss -= std::log(std::max(probs->at(i, (*tgt)[i]), T(1e-30)));
    }
    if (active == 0) throw InputError("cross_entropy: no active targets");
    Tensor<T> out({1, 1});
    out.data[0] = loss / T(active);
    const T inv_active = T(1) / T(active);
    return push(std::move(out), {logits}, [probs, tgt, inv_active, c](Graph& g, int id) {
      auto& n = g.nodes_[id];
      Tensor<T>& lg = g.nodes_[n.parents[0]].grad;
      const T go = n.grad.data[0] * inv_active;
      for (int i = 0; i < probs->rows(); ++i) {
        if ((*tgt)[i] < 0) continue;
        for (int j = 0; j < c; ++j) {
          T p = probs->at(i, j);
          if (j == (*tgt)[i]) p -= T(1);
          lg.at(i, j) += go * p;
        }
      }
    });
  }

  // Focal loss over probability rows (one row per layer position):
  //   -(1/L) * sum_l alpha_{y_l} * (1 - p_{l,y_l})^gamma * log p_{l,y_l}
  // The probability at the label is clamped at 1e-12 inside the log; in the
  // clamped region the log term is treated as constant.
  Var focal_loss(Var probs, const std::vector<int>& labels, const std::vector<T>& alphas,
                 T gamma) {
    const Tensor<T>& pv = value(probs);
    const int r = pv.rows();
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto alf = std::make_shared<std::vector<T>>(alphas);
    const T clamp = T(1e-12);
    T loss = T(0);
    for (int i = 0; i < r; ++i) {
      const T p = pv.at(i, (*lab)[i]);
      const T a = (*alf)[(*lab)[i]];
      loss -= a * std::pow(T(1) - p, gamma) * std::log(std::max(p, clamp));
    }
    Tensor<T> out({1, 1});
    out.data[0] = loss / T(r);
    return push(std::move(out), {probs}, [lab, alf, gamma, clamp](Graph& g, int id) {
      auto& n = g.nodes_[id];
      const Tensor<T>& pv = g.value(n.parents[0]);
      Tensor<T>& pg = g.nodes_[n.parents[0]].grad;
      const int r = pv.rows();
      const T go = n.grad.data[0] / T(r);
      for (int i = 0; i < r; ++i) {
        const int y = (*lab)[i];
        const T p = pv.at(i, y);
        const T a = (*alf)[y];
        const T pc = std::max(p, clamp);
        T d = T(0);
        if (gamma != T(0)) {
          d += a * gamma * std::pow(T(1) - p, gamma - T(1)) * std::log(pc);
        }
        if (p >= clamp) d -= a * std::pow(T(1) - p, gamma) / pc;
        pg.at(i, y) += go * d;
      }
    });
  }

  void backward(Var loss) {
    if (nodes_[loss].value.size() != 1) throw DimensionError("backward: loss must be scalar");
    for (auto& n : nodes_) {
      n.grad = Tensor<T>(n.value.shape);
    }
    nodes_[loss].grad.data[0] = T(1);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      if (nodes_[id].backward_fn) nodes_[id].backward_fn(*this, id);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> parents;
    std::function<void(Graph&, int)> backward_fn;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, std::vector<int> parents,
           std::function<void(Graph&, int)> backward_fn, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward_fn = std::move(backward_fn);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Tensor<T>& dst = nodes_[v].grad;
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
  }

  void accumulate_tensor(Var v, Tensor<T>&& g) { accumulate(v, g); }

  std::vector<Node> nodes_;
};

// ============================================================================
// Gradient check
// ============================================================================

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

// Compares the reverse-mode gradient of f at x against central finite
// differences, coordinate by coordinate. f receives a fresh graph and the
// input Var and must return a scalar Var. Relative error is
// |ad - fd| / max(1, |ad|, |fd|), so near-zero gradients are judged on the
// absolute scale.
template <typename T, typename F>
GradCheckResult grad_check(F f, const Tensor<T>& x, T h) {
  Graph<T> g;
  auto vx = g.input(x, true);
  auto loss = f(g, vx);
  g.backward(loss);
  Tensor<T> ad = g.grad_of(vx);

  auto eval = [&](const Tensor<T>& p) -> T {
    Graph<T> gf;
    auto v = gf.input(p);
    return gf.scalar(f(gf, v));
  };

  GradCheckResult res;
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const T orig = probe.data[i];
    probe.data[i] = orig + h;
    const T fp = eval(probe);
    probe.data[i] = orig - h;
    const T fm = eval(probe);
    probe.data[i] = orig;
    const double fd = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * h);
    const double a = static_cast<double>(ad.data[i]);
    const double abs_err = std::abs(a - fd);
    const double rel = abs_err / std::max({1.0, std::abs(a), std::abs(fd)});
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  return res;
}

}  // namespace dlr
