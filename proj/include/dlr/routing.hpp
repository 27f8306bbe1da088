#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dlr/autodiff.hpp"
#include "dlr/backbone.hpp"
#include "dlr/checkpoint.hpp"
#include "dlr/path.hpp"
#include "dlr/rng.hpp"
#include "dlr/tensor.hpp"

namespace dlr {

// ============================================================================
// Per-layer routers over windowed mean-pooled hidden states
// ============================================================================

// Splits the first W*floor(T/W) tokens into W contiguous equal windows and
// returns the per-window means; trailing remainder tokens are excluded. W is
// clamped to the sequence length.
template <typename T>
Tensor<T> window_pool(const Tensor<T>& h, int windows) {
  const int rows = h.rows();
  if (rows < 1) throw InputError("window_pool: empty sequence");
  if (windows < 1) throw InputError("window_pool: window count must be positive");
  const int w_eff = std::min(windows, rows);
  const int win = rows / w_eff;
  const int d = h.cols();
  Tensor<T> out({w_eff, d});
  for (int w = 0; w < w_eff; ++w) {
    for (int r = w * win; r < (w + 1) * win; ++r) {
      for (int j = 0; j < d; ++j) out.at(w, j) += h.at(r, j);
    }
    for (int j = 0; j < d; ++j) out.at(w, j) /= T(win);
  }
  return out;
}

// Bottleneck MLP (Linear-GELU-Linear) emitting one logit triple per window,
// ordered (skip, execute, repeat).
template <typename T>
struct Router {
  Tensor<T> w_in, b_in;    // d x h, 1 x h
  Tensor<T> w_out, b_out;  // h x 3, 1 x 3

  Router() = default;

  Router(int dim, int hidden, Rng& rng)
      : w_in({dim, hidden}),
        b_in({1, hidden}),
        w_out({hidden, 3}),
        b_out({1, 3}) {
    fill_xavier_uniform(w_in, dim, hidden, rng);
    fill_xavier_uniform(w_out, hidden, 3, rng);
  }

  Tensor<T> logits(const Tensor<T>& pooled) const {
    return add_bias(matmul(gelu(add_bias(matmul(pooled, w_in), b_in)), w_out), b_out);
  }

  // Same computation through the autodiff graph; params become leaves.
  typename Graph<T>::Var logits_graph(
      Graph<T>& g, const Tensor<T>& pooled,
      std::vector<std::pair<Tensor<T>*, typename Graph<T>::Var>>& param_vars) {
    auto reg = [&](Tensor<T>& t) {
      auto v = g.input(t, true);
      param_vars.push_back({&t, v});
      return v;
    };
    auto x = g.input(pooled);
    auto hmid = g.gelu(g.add_bias(g.matmul(x, reg(w_in)), reg(b_in)));
    return g.add_bias(g.matmul(hmid, reg(w_out)), reg(b_out));
  }
};

struct Decision {
  Action action = kExecute;
  std::array<double, 3> probs = {0, 0, 0};
};

// Argmax with the documented tie-break: prefer execute when it is among the
// maxima, otherwise the lowest index among tied maxima.
inline Action decide(const std::array<double, 3>& probs) {
  const double mx = std::max({probs[0], probs[1], probs[2]});
  if (probs[kExecute] == mx) return kExecute;
  for (int c = 0; c < 3; ++c) {
    if (probs[c] == mx) return static_cast<Action>(c);
  }
  return kExecute;
}

// Votes are aggregated by averaging logits over windows, then softmax.
template <typename T>
Decision route_layer(const Router<T>& router, const Tensor<T>& pooled) {
  if (pooled.rows() < 1) throw InputError("route_layer: no pooled windows");
  Tensor<T> z = mean_rows(router.logits(pooled));
  Tensor<T> p = softmax_rows(z);
  Decision d;
  for (int c = 0; c < 3; ++c) d.probs[c] = static_cast<double>(p.data[c]);
  d.action = decide(d.probs);
  return d;
}

enum class RouterInput { kPrevLayer, kFirstLayer };

template <typename T>
struct RouterStack {
  std::vector<Router<T>> routers;
  int windows = 8;
  int hidden = 128;
  RouterInput input_mode = RouterInput::kPrevLayer;

  RouterStack() = default;

  RouterStack(int num_layers, int dim, int hidden_width, int window_count, std::uint64_t seed,
              RouterInput mode = RouterInput::kPrevLayer)
      : windows(window_count), hidden(hidden_width), input_mode(mode) {
    Rng rng(derive_seed(seed, "router/init"));
    routers.reserve(num_layers);
    for (int l = 0; l < num_layers; ++l) routers.emplace_back(dim, hidden_width, rng);
  }

  int num_layers() const { return static_cast<int>(routers.size()); }

  // Optional bias initialization from empirical class frequencies; off by
  // default (zero biases train more stably).
  void init_frequency_bias(const std::array<double, 3>& fractions) {
    for (auto& r : routers) {
      for (int c = 0; c < 3; ++c) {
        r.b_out.data[c] = static_cast<T>(std::log(std::max(fractions[c], 1e-6)));
      }
    }
  }
};

// Piecewise-linear interpolation of router probabilities against the one-hot
// skip / execute / repeat anchors under a scalar control p in [-1, 1]:
//   p in [-1,-0.5]:  (1-t) skip   + t router,  t = (p+1)/0.5
//   p in (-0.5,0.5]: (1-t) router + t execute, t = (p+0.5)/1
//   p in (0.5,1]:    (1-t) execute + t repeat, t = (p-0.5)/0.5
inline std::array<double, 3> control_interpolate(const std::array<double, 3>& router_probs,
                                                 double p) {
  if (p < -1.0 || p > 1.0) throw InputError("control parameter outside [-1, 1]");
  const std::array<double, 3> one_skip = {1, 0, 0};
  const std::array<double, 3> one_exec = {0, 1, 0};
  const std::array<double, 3> one_repeat = {0, 0, 1};
  auto blend = [](const std::array<double, 3>& a, const std::array<double, 3>& b, double t) {
    std::array<double, 3> out;
    for (int c = 0; c < 3; ++c) out[c] = (1.0 - t) * a[c] + t * b[c];
    return out;
  };
  if (p <= -0.5) return blend(one_skip, router_probs, (p + 1.0) / 0.5);
  if (p <= 0.5) return blend(router_probs, one_exec, (p + 0.5) / 1.0);
  return blend(one_exec, one_repeat, (p - 0.5) / 0.5);
}

template <class Model>
struct RoutedResult {
  using T = typename Model::Scalar;
  std::string answer;
  RoutingLabels decisions;               // y in {0,1,2}^L
  std::vector<std::array<double, 3>> probs;  // router probabilities per layer
  int executed_layers = 0;               // sum of decisions
};

// Greedy routed inference. Routers read the state actually entering their
// layer (or the first-layer state in kFirstLayer mode); skip keeps the state,
// execute applies the block once, repeat twice. No control: pass std::nan.
template <class Model>
RoutedResult<Model> routed_forward(const Model& model,
                                   const RouterStack<typename Model::Scalar>& stack,
                                   const std::vector<int>& tokens,
                                   double control = std::numeric_limits<double>::quiet_NaN()) {
  using T = typename Model::Scalar;
  if (stack.num_layers() != model.num_layers()) {
    throw InputError("routed_forward: stack size does not match backbone");
  }
  RoutedResult<Model> result;
  auto h = model.embed(tokens);
  const Tensor<T> first_pooled = window_pool(h, stack.windows);
  for (int layer = 1; layer <= model.num_layers(); ++layer) {
    const Tensor<T> pooled = stack.input_mode == RouterInput::kFirstLayer
                                 ? first_pooled
                                 : window_pool(h, stack.windows);
    Decision d = route_layer(stack.routers[layer - 1], pooled);
    if (!std::isnan(control)) {
      d.probs = control_interpolate(d.probs, control);
      d.action = decide(d.probs);
    }
    result.decisions.push_back(d.action);
    result.probs.push_back(d.probs);
    result.executed_layers += static_cast<int>(d.action);
    for (int rep = 0; rep < static_cast<int>(d.action); ++rep) {
      h = model.apply_layer(layer, h);
    }
  }
  result.answer = model.answer_text(h);
  return result;
}

// ---- checkpoint append (names "router.{l}.{param}") ----

template <typename T>
void append_routers(Checkpoint& ck, const RouterStack<T>& stack) {
  ck.add_scalar("router.meta.windows", stack.windows);
  ck.add_scalar("router.meta.hidden", stack.hidden);
  ck.add_scalar("router.meta.input_mode", static_cast<double>(stack.input_mode));
  for (int l = 0; l < stack.num_layers(); ++l) {
    const std::string p = "router." + std::to_string(l) + ".";
    ck.add(p + "w_in", stack.routers[l].w_in);
    ck.add(p + "b_in", stack.routers[l].b_in);
    ck.add(p + "w_out", stack.routers[l].w_out);
    ck.add(p + "b_out", stack.routers[l].b_out);
  }
}

template <typename T>
RouterStack<T> routers_from_checkpoint(const Checkpoint& ck, int num_layers) {
  RouterStack<T> stack;
  stack.windows = static_cast<int>(ck.require("router.meta.windows").data[0]);
  stack.hidden = static_cast<int>(ck.require("router.meta.hidden").data[0]);
  stack.input_mode =
      static_cast<RouterInput>(static_cast<int>(ck.require("router.meta.input_mode").data[0]));
  for (int l = 0; l < num_layers; ++l) {
    const std::string p = "router." + std::to_string(l) + ".";
    Router<T> r;
    r.w_in = ck.require(p + "w_in").cast<T>();
    r.b_in = ck.require(p + "b_in").cast<T>();
    r.w_out = ck.require(p + "w_out").cast<T>();
    r.b_out = ck.require(p + "b_out").cast<T>();
    stack.routers.push_back(std::move(r));
  }
  return stack;
}

}  // namespace dlr
