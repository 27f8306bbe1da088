#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dlr/autodiff.hpp"
#include "dlr/backbone.hpp"
#include "dlr/eval.hpp"
#include "dlr/io.hpp"
#include "dlr/optim.hpp"
#include "dlr/routing.hpp"

namespace dlr {

// ============================================================================
// Router supervision: class weights, focal loss, teacher-forced training
// ============================================================================

struct ClassCounts {
  long long n_skip = 0;
  long long n_execute = 0;
  long long n_repeat = 0;

  long long operator[](int c) const {
    return c == kSkip ? n_skip : c == kExecute ? n_execute : n_repeat;
  }
};

inline ClassCounts class_counts(const SupervisionDataset& dataset) {
  ClassCounts counts;
  for (const auto& ex : dataset) {
    for (int y : ex.labels) {
      if (y == kSkip) ++counts.n_skip;
      else if (y == kExecute) ++counts.n_execute;
      else ++counts.n_repeat;
    }
  }
  return counts;
}

// Effective-number class weights: w_c = (1-beta)/(1-beta^n_c), normalized so
// the present classes average to exactly 1. A class with zero count gets
// weight 0 and is excluded from the mean (the limit formula divides by zero
// and a never-observed class cannot be weighted).
inline std::array<double, 3> effective_number_weights(const ClassCounts& counts, double beta) {
  if (beta <= 0.0 || beta >= 1.0) throw InputError("effective-number beta must be in (0,1)");
  if (counts.n_skip == 0 && counts.n_execute == 0 && counts.n_repeat == 0) {
    throw InputError("effective-number weights: all class counts are zero");
  }
  std::array<double, 3> w = {0, 0, 0};
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < 3; ++c) {
    const long long n = counts[c];
    if (n == 0) continue;
    w[c] = (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n)));
    sum += w[c];
    ++present;
  }
  const double mean = sum / present;
  for (auto& v : w) v /= mean;
  return w;
}

struct LossConfig {
  enum Mode { kFocal, kWeightedCE, kPlainCE };
  double gamma = 2.0;
  double beta = 0.999;
  Mode mode = kFocal;

  void validate() const {
    if (gamma < 0) throw ConfigError("loss: gamma must be >= 0");
    if (beta <= 0 || beta >= 1) throw ConfigError("loss: beta must be in (0,1)");
  }

  // gamma=0 recovers weighted cross-entropy; unit alphas make it plain.
  double effective_gamma() const { return mode == kFocal ? gamma : 0.0; }
  std::array<double, 3> alphas(const ClassCounts& counts) const {
    if (mode == kPlainCE) return {1.0, 1.0, 1.0};
    return effective_number_weights(counts, beta);
  }
};

// Forward-only focal loss over probability rows; mirrors Graph::focal_loss.
template <typename T>
double focal_loss_value(const Tensor<T>& probs, const std::vector<int>& labels,
                        const std::array<double, 3>& alphas, double gamma) {
  if (probs.rows() != static_cast<int>(labels.size())) {
    throw DimensionError("focal_loss: labels/probs mismatch");
  }
  double loss = 0.0;
  for (int i = 0; i < probs.rows(); ++i) {
    const double p = static_cast<double>(probs.at(i, labels[i]));
    loss -= alphas[labels[i]] * std::pow(1.0 - p, gamma) * std::log(std::max(p, 1e-12));
  }
  return loss / probs.rows();
}

// ============================================================================
// Training
// ============================================================================

struct TrainConfig {
  double lr_max = 1e-3;
  double weight_decay = 0.01;
  int warmup = 500;
  int epochs = 25;
  int batch = 16;  // effective batch via per-example gradient accumulation
  double val_fraction = 0.1;
  bool teacher_forcing = true;
  std::uint64_t seed = 0;
  int total_steps = 0;  // filled by the trainer; settable for direct use

  void validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (total_steps > 0 && warmup >= total_steps) {
      throw ConfigError("train: warmup must be smaller than total steps");
    }
  }
};

// Linear ramp 0 -> lr_max over the warmup, then cosine to 0 at the last step.
inline double lr_schedule(int step, const TrainConfig& cfg) {
  return warmup_cosine_lr(step, cfg.total_steps, cfg.warmup, cfg.lr_max);
}

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  F1Scores val_f1;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  ClassCounts counts;
  std::array<double, 3> alphas = {1, 1, 1};
};

inline std::string train_log_to_csv(const TrainResult& r) {
  std::string csv = "epoch,loss,skip_f1,exec_f1,repeat_f1,macro_f1,lr\n";
  for (const auto& m : r.log) {
    csv += std::to_string(m.epoch) + "," + fmt(m.loss);
    for (double f : m.val_f1.per_class) csv += "," + fmt(f);
    csv += "," + fmt(m.val_f1.macro) + "," + fmt(m.lr) + "\n";
  }
  return csv;
}

namespace detail {

// States each router reads when execution follows the labeled path: the
// state entering layer position l. A skipped layer's router reads the state
// that bypassed it.
template <class Model>
std::vector<Tensor<typename Model::Scalar>> pooled_router_inputs(
    const Model& model, const RouterStack<typename Model::Scalar>& stack,
    const std::vector<int>& tokens, const RoutingLabels& labels) {
  auto fwd = forward_with_labels(model, tokens, labels);
  std::vector<Tensor<typename Model::Scalar>> pooled;
  pooled.reserve(model.num_layers());
  for (int l = 0; l < model.num_layers(); ++l) {
    const auto& state = stack.input_mode == RouterInput::kFirstLayer ? fwd.states[0]
                                                                     : fwd.states[l];
    pooled.push_back(window_pool(state, stack.windows));
  }
  return pooled;
}

// With teacher forcing off, execution follows the argmax router decisions
// while the labels still supervise the logits.
template <class Model>
std::vector<Tensor<typename Model::Scalar>> pooled_router_inputs_fed_back(
    const Model& model, const RouterStack<typename Model::Scalar>& stack,
    const std::vector<int>& tokens) {
  using T = typename Model::Scalar;
  std::vector<Tensor<T>> pooled;
  auto h = model.embed(tokens);
  const Tensor<T> first = window_pool(h, stack.windows);
  for (int layer = 1; layer <= model.num_layers(); ++layer) {
    const Tensor<T> p =
        stack.input_mode == RouterInput::kFirstLayer ? first : window_pool(h, stack.windows);
    pooled.push_back(p);
    const Decision d = route_layer(stack.routers[layer - 1], p);
    for (int rep = 0; rep < static_cast<int>(d.action); ++rep) h = model.apply_layer(layer, h);
  }
  return pooled;
}

}  // namespace detail

// Trains only the router parameters with AdamW (decoupled decay, none on
// biases) against focal loss on all L layer positions of each example.
// Deterministic under seed; the backbone stays untouched.
template <class Model>
TrainResult train_routers(const Model& model, RouterStack<typename Model::Scalar>& stack,
                          const SupervisionDataset& dataset, const LossConfig& loss_cfg,
                          const TrainConfig& train_cfg) {
  using T = typename Model::Scalar;
  loss_cfg.validate();
  TrainConfig cfg = train_cfg;
  cfg.validate();
  if (dataset.empty()) throw InputError("train_routers: empty dataset");

  // Train/validation split.
  Rng rng(derive_seed(cfg.seed, "train/split"));
  std::vector<int> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const int n_val = std::min<int>(static_cast<int>(dataset.size()) - 1,
                                  static_cast<int>(dataset.size() * cfg.val_fraction));
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  TrainResult result;
  {
    SupervisionDataset train_split;
    for (int i : train_idx) train_split.push_back(dataset[i]);
    result.counts = class_counts(train_split);
  }
  result.alphas = loss_cfg.alphas(result.counts);
  const double gamma = loss_cfg.effective_gamma();
  const std::vector<T> alphas_t = {static_cast<T>(result.alphas[0]),
                                   static_cast<T>(result.alphas[1]),
                                   static_cast<T>(result.alphas[2])};

  // Optimizer over all router parameters.
  std::vector<typename AdamW<T>::Slot> slots;
  std::map<Tensor<T>*, std::size_t> slot_of;
  for (auto& r : stack.routers) {
    const std::pair<Tensor<T>*, bool> entries[] = {
        {&r.w_in, true}, {&r.b_in, false}, {&r.w_out, true}, {&r.b_out, false}};
    for (const auto& [t, decay] : entries) {
      slot_of[t] = slots.size();
      slots.push_back({t, decay});
    }
  }
  AdamWConfig acfg;
  acfg.weight_decay = cfg.weight_decay;
  AdamW<T> opt(slots, acfg);

  const int steps_per_epoch =
      (static_cast<int>(train_idx.size()) + cfg.batch - 1) / cfg.batch;
  cfg.total_steps = cfg.epochs * steps_per_epoch;
  if (cfg.epochs > 0) cfg.validate();

  std::vector<Tensor<T>> grads(slots.size());
  std::vector<std::pair<Tensor<T>*, typename Graph<T>::Var>> param_vars;
  int global_step = 0;
  double last_lr = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    int epoch_examples = 0;

    for (int start = 0; start < static_cast<int>(train_idx.size()); start += cfg.batch) {
      const int end = std::min<int>(start + cfg.batch, static_cast<int>(train_idx.size()));
      for (std::size_t s = 0; s < slots.size(); ++s) grads[s] = Tensor<T>(slots[s].param->shape);
      double batch_loss = 0.0;

      for (int bi = start; bi < end; ++bi) {
        const SupervisionExample& ex = dataset[train_idx[bi]];
        const auto pooled =
            cfg.teacher_forcing
                ? detail::pooled_router_inputs(model, stack, ex.tokens, ex.labels)
                : detail::pooled_router_inputs_fed_back(model, stack, ex.tokens);

        Graph<T> g;
        param_vars.clear();
        typename Graph<T>::Var loss = -1;
        for (int l = 0; l < model.num_layers(); ++l) {
          auto logits = stack.routers[l].logits_graph(g, pooled[l], param_vars);
          auto probs = g.softmax_rows(g.mean_rows(logits));
          auto term = g.focal_loss(probs, {ex.labels[l]}, alphas_t, static_cast<T>(gamma));
          loss = l == 0 ? term : g.add(loss, term);
        }
        loss = g.scale(loss, T(1) / T(model.num_layers()));
        batch_loss += static_cast<double>(g.scalar(loss));
        g.backward(loss);
        for (auto& [tensor, var] : param_vars) {
          Tensor<T>& acc = grads[slot_of[tensor]];
          const Tensor<T>& pg = g.grad_of(var);
          for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += pg.data[j];
        }
      }

      const int batch_n = end - start;
      batch_loss /= batch_n;
      if (!std::isfinite(batch_loss)) throw TrainingError("train_routers: loss diverged", global_step);
      for (auto& gacc : grads) {
        for (T& v : gacc.data) v /= static_cast<T>(batch_n);
      }
      last_lr = lr_schedule(global_step, cfg);
      opt.step(grads, last_lr);
      ++global_step;
      epoch_loss += batch_loss * batch_n;
      epoch_examples += batch_n;
    }

    // Validation metrics: router argmax along the labeled trajectory.
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.loss = epoch_examples ? epoch_loss / epoch_examples : 0.0;
    m.lr = last_lr;
    std::vector<int> pred, gold;
    for (int vi : val_idx) {
      const SupervisionExample& ex = dataset[vi];
      const auto pooled = detail::pooled_router_inputs(model, stack, ex.tokens, ex.labels);
      for (int l = 0; l < model.num_layers(); ++l) {
        pred.push_back(route_layer(stack.routers[l], pooled[l]).action);
        gold.push_back(ex.labels[l]);
      }
    }
    if (!pred.empty()) m.val_f1 = per_class_f1(pred, gold);
    result.log.push_back(m);
  }
  return result;
}

}  // namespace dlr
