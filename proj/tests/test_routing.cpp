#include <doctest.h>

#include <cstring>

#include "dlr/backbone.hpp"
#include "dlr/checkpoint.hpp"
#include "dlr/counter_model.hpp"
#include "dlr/routing.hpp"
#include "dlr/tasks.hpp"
#include "dlr/transformer.hpp"

using namespace dlr;

namespace {

RouterStack<float> force_action_stack(int layers, int dim, Action action) {
  RouterStack<float> stack(layers, dim, 8, 8, 1);
  for (auto& r : stack.routers) {
    std::fill(r.w_in.data.begin(), r.w_in.data.end(), 0.0f);
    std::fill(r.w_out.data.begin(), r.w_out.data.end(), 0.0f);
    std::fill(r.b_in.data.begin(), r.b_in.data.end(), 0.0f);
    r.b_out.data = {-10.0f, -10.0f, -10.0f};
    r.b_out.data[action] = 10.0f;
  }
  return stack;
}

}  // namespace

TEST_CASE("window_pool: identity when every token is its own window") {
  Tensor<float> h({8, 3});
  Rng rng(2);
  for (auto& v : h.data) v = static_cast<float>(rng.normal());
  auto pooled = window_pool(h, 8);
  CHECK(pooled.rows() == 8);
  CHECK(pooled.data == h.data);
}

TEST_CASE("window_pool: constant rows pool to the constant") {
  auto h = Tensor<float>::full({12, 4}, 2.5f);
  auto pooled = window_pool(h, 5);
  CHECK(pooled.rows() == 5);
  for (float v : pooled.data) CHECK(v == doctest::Approx(2.5f));
}

TEST_CASE("window_pool: hand-computed means, remainder excluded") {
  // Contiguous windows {[1,1],[3,3]} and {[5,5],[7,7]}: means (1+3)/2 and
  // (5+7)/2 per coordinate.
  Tensor<float> h({4, 2}, {1, 1, 3, 3, 5, 5, 7, 7});
  auto pooled = window_pool(h, 2);
  REQUIRE(pooled.rows() == 2);
  CHECK(pooled.at(0, 0) == doctest::Approx(2.0f));
  CHECK(pooled.at(0, 1) == doctest::Approx(2.0f));
  CHECK(pooled.at(1, 0) == doctest::Approx(6.0f));
  CHECK(pooled.at(1, 1) == doctest::Approx(6.0f));

  // T=5, W=2: floor(5/2)=2 -> the 5th row is excluded.
  Tensor<float> h5({5, 1}, {2, 4, 6, 8, 100});
  auto p5 = window_pool(h5, 2);
  CHECK(p5.at(0, 0) == doctest::Approx(3.0f));
  CHECK(p5.at(1, 0) == doctest::Approx(7.0f));
}

TEST_CASE("window_pool: clamped by sequence length; empty input rejected") {
  Tensor<float> h({3, 2}, {1, 2, 3, 4, 5, 6});
  auto pooled = window_pool(h, 8);
  CHECK(pooled.rows() == 3);
  Tensor<float> empty({0, 2});
  CHECK_THROWS_AS(window_pool(empty, 4), InputError);
  CHECK_THROWS_AS(window_pool(h, 0), InputError);
}

TEST_CASE("window_pool: invariant to permuting tokens within a window") {
  Tensor<float> a({6, 2}, {1, 9, 2, 8, 3, 7, 4, 6, 5, 5, 6, 4});
  Tensor<float> b({6, 2}, {2, 8, 3, 7, 1, 9, 6, 4, 4, 6, 5, 5});  // windows permuted
  auto pa = window_pool(a, 2);
  auto pb = window_pool(b, 2);
  for (std::size_t i = 0; i < pa.data.size(); ++i) {
    CHECK(pa.data[i] == doctest::Approx(pb.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("route_layer: all-zero router gives uniform probabilities and execute tie-break") {
  Router<float> r;
  r.w_in = Tensor<float>::zeros(4, 3);
  r.b_in = Tensor<float>::zeros(1, 3);
  r.w_out = Tensor<float>::zeros(3, 3);
  r.b_out = Tensor<float>::zeros(1, 3);
  Tensor<float> pooled({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto d = route_layer(r, pooled);
  for (double p : d.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-6));
  CHECK(d.action == kExecute);
}

TEST_CASE("route_layer: single window yields that window's raw logits") {
  Rng rng(5);
  Router<float> r(6, 8, rng);
  Tensor<float> pooled({1, 6});
  for (auto& v : pooled.data) v = static_cast<float>(rng.normal());
  auto direct = softmax_rows(r.logits(pooled));
  auto d = route_layer(r, pooled);
  for (int c = 0; c < 3; ++c) {
    CHECK(d.probs[c] == doctest::Approx(static_cast<double>(direct.data[c])).epsilon(1e-7));
  }
}

TEST_CASE("route_layer: documented tie-break on logit means (skip over repeat)") {
  // Two windows engineered to produce logits exactly (v,0,0) and (0,0,v)
  // with the identical floating-point value v, so the mean ties skip and
  // repeat; execute is not among the maxima, so the lowest index wins.
  const float s = 2.0f, a = 3.0f;
  const float g = gelu_scalar(s * a);
  Router<float> r;
  r.w_in = Tensor<float>::zeros(3, 3);
  r.w_in.at(0, 0) = s;
  r.w_in.at(1, 1) = s;
  r.w_in.at(2, 2) = s;
  r.b_in = Tensor<float>::zeros(1, 3);
  r.w_out = Tensor<float>::zeros(3, 3);
  r.w_out.at(0, 0) = 1.0f / g;
  r.w_out.at(2, 2) = 1.0f / g;
  r.b_out = Tensor<float>::zeros(1, 3);

  Tensor<float> windows({2, 3}, {a, 0, 0, 0, 0, a});
  auto d = route_layer(r, windows);
  CHECK(d.probs[0] == d.probs[2]);
  CHECK(d.probs[0] > d.probs[1]);
  CHECK(d.action == kSkip);
}

TEST_CASE("route_layer aggregates mean-of-logits, not logits-of-mean-input") {
  Rng rng(9);
  Router<float> r(5, 16, rng);
  Tensor<float> windows({2, 5});
  for (auto& v : windows.data) v = static_cast<float>(rng.normal(0.0, 2.0));

  auto d = route_layer(r, windows);
  // mean of per-window logits
  auto mean_logits = mean_rows(r.logits(windows));
  auto expected = softmax_rows(mean_logits);
  for (int c = 0; c < 3; ++c) {
    CHECK(d.probs[c] == doctest::Approx(static_cast<double>(expected.data[c])).epsilon(1e-7));
  }
  // logits of the pooled mean differ on a nonlinear router
  auto logits_of_mean = r.logits(mean_rows(windows));
  double diff = 0;
  for (int c = 0; c < 3; ++c) {
    diff += std::abs(static_cast<double>(logits_of_mean.data[c] - mean_logits.data[c]));
  }
  CHECK(diff > 1e-6);
}

TEST_CASE("decision is invariant to adding a constant to all logits of every window") {
  Rng rng(13);
  Router<float> r(4, 8, rng);
  Tensor<float> windows({3, 4});
  for (auto& v : windows.data) v = static_cast<float>(rng.normal());
  auto base = route_layer(r, windows);
  Router<float> shifted = r;
  for (auto& v : shifted.b_out.data) v += 2.75f;
  auto moved = route_layer(shifted, windows);
  CHECK(base.action == moved.action);
}

TEST_CASE("control_interpolate: endpoints, continuity point, simplex property") {
  std::array<double, 3> router_probs = {0.2, 0.5, 0.3};
  auto at_minus1 = control_interpolate(router_probs, -1.0);
  CHECK(at_minus1 == std::array<double, 3>{1, 0, 0});
  auto at_plus1 = control_interpolate(router_probs, 1.0);
  CHECK(at_plus1 == std::array<double, 3>{0, 0, 1});
  auto at_mid = control_interpolate(router_probs, -0.5);
  CHECK(at_mid == router_probs);  // exactly the router distribution

  for (int i = 0; i <= 200; ++i) {
    const double p = -1.0 + 2.0 * i / 200;
    auto out = control_interpolate(router_probs, p);
    CHECK(std::abs(out[0] + out[1] + out[2] - 1.0) < 1e-9);
  }
  // Continuity at the branch boundaries.
  auto lo = control_interpolate(router_probs, 0.5);
  auto hi = control_interpolate(router_probs, 0.5 + 1e-12);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(lo[c] - hi[c]) < 1e-9);

  CHECK_THROWS_AS(control_interpolate(router_probs, -1.01), InputError);
  CHECK_THROWS_AS(control_interpolate(router_probs, 1.01), InputError);
}

TEST_CASE("routed_forward: all-execute stack is bit-identical to forward_default") {
  TransformerSpec spec;
  spec.num_layers = 3;
  spec.dim = 16;
  spec.heads = 2;
  spec.ffn = 32;
  TinyTransformer<float> model(spec);
  auto stack = force_action_stack(3, 16, kExecute);
  std::vector<int> tokens = {7, 3, 11, 30};

  auto routed = routed_forward(model, stack, tokens);
  auto def = forward_default(model, tokens);
  CHECK(routed.answer == def.answer);
  CHECK(routed.executed_layers == 3);
  CHECK(routed.decisions == RoutingLabels({1, 1, 1}));
}

TEST_CASE("routed_forward: zero-weight backbone answer independent of decisions") {
  TransformerSpec spec;
  spec.num_layers = 4;
  spec.dim = 16;
  spec.heads = 2;
  spec.ffn = 32;
  TinyTransformer<float> model(spec);
  model.zero_blocks();
  std::vector<int> tokens = {8, 2, 5};
  auto base = forward_default(model, tokens).answer;
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    RouterStack<float> stack(4, 16, 8, 4, rng.next_u64());
    auto routed = routed_forward(model, stack, tokens);
    CHECK(routed.answer == base);
  }
}

TEST_CASE("routed_forward with control anchors: all-skip at -1, all-repeat at +1") {
  auto model = CounterModel<float>(CounterModel<float>::Spec{});
  TaskGenConfig cfg;
  auto inst = gen_instance(cfg, "D2", 3, 0);
  RouterStack<float> stack(model.num_layers(), model.dim(), 16, 8, 5);

  auto all_skip = routed_forward(model, stack, inst.tokens, -1.0);
  CHECK(all_skip.executed_layers == 0);
  auto all_repeat = routed_forward(model, stack, inst.tokens, 1.0);
  CHECK(all_repeat.executed_layers == 2 * model.num_layers());
  auto neutral = routed_forward(model, stack, inst.tokens, -0.5);
  auto plain = routed_forward(model, stack, inst.tokens);
  CHECK(neutral.decisions == plain.decisions);
}

TEST_CASE("first-layer input mode pools the embedding state for every layer") {
  auto model = CounterModel<float>(CounterModel<float>::Spec{});
  TaskGenConfig cfg;
  auto inst = gen_instance(cfg, "D3", 7, 1);
  RouterStack<float> stack(model.num_layers(), model.dim(), 16, 8, 5,
                           RouterInput::kFirstLayer);
  // With first-layer inputs, decisions must match routing each layer on the
  // embedded state directly.
  auto routed = routed_forward(model, stack, inst.tokens);
  auto h1 = model.embed(inst.tokens);
  auto pooled = window_pool(h1, stack.windows);
  for (int l = 0; l < model.num_layers(); ++l) {
    CHECK(routed.decisions[l] == route_layer(stack.routers[l], pooled).action);
  }
}

TEST_CASE("router checkpoint appends and reloads bit-identically") {
  RouterStack<float> stack(4, 12, 16, 8, 77);
  TransformerSpec spec;
  spec.num_layers = 4;
  spec.dim = 12;
  spec.heads = 2;
  spec.ffn = 16;
  TinyTransformer<float> model(spec);
  auto ck = to_checkpoint(model);
  append_routers(ck, stack);
  const std::string path = "/tmp/dlr_router_ck.bin";
  write_checkpoint(path, ck);
  auto loaded_ck = read_checkpoint(path);
  auto loaded = routers_from_checkpoint<float>(loaded_ck, 4);
  CHECK(loaded.windows == stack.windows);
  CHECK(loaded.input_mode == stack.input_mode);
  for (int l = 0; l < 4; ++l) {
    CHECK(loaded.routers[l].w_in.data == stack.routers[l].w_in.data);
    CHECK(loaded.routers[l].b_out.data == stack.routers[l].b_out.data);
  }
  std::remove(path.c_str());
}

TEST_CASE("frequency-bias initialization sets output biases to log frequencies") {
  RouterStack<float> stack(2, 8, 8, 8, 3);
  stack.init_frequency_bias({0.10, 0.85, 0.05});
  for (const auto& r : stack.routers) {
    CHECK(r.b_out.data[0] == doctest::Approx(std::log(0.10)));
    CHECK(r.b_out.data[1] == doctest::Approx(std::log(0.85)));
    CHECK(r.b_out.data[2] == doctest::Approx(std::log(0.05)));
  }
}
