#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "dlr/optim.hpp"
#include "dlr/rng.hpp"
#include "dlr/transformer.hpp"

namespace dlr {

// ============================================================================
// Backbone pretraining
// ============================================================================

struct SequenceExample {
  std::vector<int> tokens;
  std::vector<int> targets;  // per-position next-token target, -1 = ignore
};

using SequenceCorpus = std::vector<SequenceExample>;

struct PretrainConfig {
  int steps = 2000;
  int batch = 8;
  double lr_max = 1e-3;
  int warmup = 100;
  AdamWConfig adamw;
  double heldout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct PretrainMetrics {
  double heldout_loss = 0.0;
  double heldout_token_accuracy = 0.0;
  int steps_run = 0;
};

// Copy task: [v_1..v_k, SEP, v_1..v_k] with next-token targets over the
// echoed half. A small stand-in corpus for exercising the trainer.
inline SequenceCorpus make_copy_corpus(int count, int copy_len, int alphabet, std::uint64_t seed) {
  SequenceCorpus corpus;
  corpus.reserve(count);
  Rng rng(derive_seed(seed, "pretrain/copy"));
  for (int i = 0; i < count; ++i) {
    SequenceExample ex;
    std::vector<int> values(copy_len);
    for (int& v : values) v = vocab::kValueBase + rng.range(0, alphabet - 1);
    ex.tokens = values;
    ex.tokens.push_back(vocab::kSep);
    ex.tokens.insert(ex.tokens.end(), values.begin(), values.end());
    ex.targets.assign(ex.tokens.size(), -1);
    // Position t predicts token t+1; supervise from SEP through the echo.
    for (int t = copy_len; t + 1 < static_cast<int>(ex.tokens.size()); ++t) {
      ex.targets[t] = ex.tokens[t + 1];
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

template <typename T>
double heldout_loss(TinyTransformer<T>& model, const SequenceCorpus& heldout) {
  double total = 0.0;
  long long active = 0;
  for (const auto& ex : heldout) {
    auto h = model.embed(ex.tokens);
    for (int l = 1; l <= model.num_layers(); ++l) h = model.apply_layer(l, h);
    Tensor<T> logits = model.head_logits(h);
    Tensor<T> probs = softmax_rows(logits);
    for (int t = 0; t < logits.rows(); ++t) {
      if (ex.targets[t] < 0) continue;
      ++active;
      total -= std::log(std::max(static_cast<double>(probs.at(t, ex.targets[t])), 1e-30));
    }
  }
  return active ? total / static_cast<double>(active) : 0.0;
}

template <typename T>
double heldout_token_accuracy(TinyTransformer<T>& model, const SequenceCorpus& heldout) {
  long long hits = 0, active = 0;
  for (const auto& ex : heldout) {
    auto h = model.embed(ex.tokens);
    for (int l = 1; l <= model.num_layers(); ++l) h = model.apply_layer(l, h);
    Tensor<T> logits = model.head_logits(h);
    for (int t = 0; t < logits.rows(); ++t) {
      if (ex.targets[t] < 0) continue;
      ++active;
      int best = 0;
      for (int j = 1; j < logits.cols(); ++j) {
        if (logits.at(t, j) > logits.at(t, best)) best = j;
      }
      hits += best == ex.targets[t] ? 1 : 0;
    }
  }
  return active ? static_cast<double>(hits) / static_cast<double>(active) : 0.0;
}

// AdamW + warmup/cosine language-model training. The model is updated in
// place and treated as frozen afterwards. Deterministic under seed.
template <typename T>
PretrainMetrics pretrain_backbone(TinyTransformer<T>& model, const SequenceCorpus& corpus,
                                  const PretrainConfig& cfg) {
  if (corpus.empty()) throw InputError("pretrain: empty corpus");

  Rng rng(derive_seed(cfg.seed, "pretrain/order"));
  std::vector<int> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const int n_heldout =
      std::max(1, static_cast<int>(corpus.size() * cfg.heldout_fraction));
  SequenceCorpus heldout, train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (static_cast<int>(i) < n_heldout ? heldout : train).push_back(corpus[order[i]]);
  }
  if (train.empty()) throw InputError("pretrain: corpus too small for held-out split");

  auto params = model.named_params();
  std::map<Tensor<T>*, std::size_t> slot_of;
  std::vector<typename AdamW<T>::Slot> slots;
  for (std::size_t i = 0; i < params.size(); ++i) {
    slots.push_back({params[i].tensor, params[i].decay});
    slot_of[params[i].tensor] = i;
  }
  AdamWConfig acfg = cfg.adamw;
  AdamW<T> opt(slots, acfg);

  std::vector<Tensor<T>> grads(params.size());
  std::vector<std::pair<Tensor<T>*, typename Graph<T>::Var>> param_vars;
  int cursor = 0;
  std::vector<int> epoch_order(train.size());
  for (std::size_t i = 0; i < epoch_order.size(); ++i) epoch_order[i] = static_cast<int>(i);
  rng.shuffle(epoch_order);

  PretrainMetrics metrics;
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < params.size(); ++i) grads[i] = Tensor<T>(params[i].tensor->shape);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor == static_cast<int>(train.size())) {
        cursor = 0;
        rng.shuffle(epoch_order);
      }
      const SequenceExample& ex = train[epoch_order[cursor++]];
      Graph<T> g;
      auto [loss, logits] = model.lm_loss(g, ex.tokens, ex.targets, param_vars);
      (void)logits;
      batch_loss += static_cast<double>(g.scalar(loss));
      g.backward(loss);
      for (auto& [tensor, var] : param_vars) {
        const Tensor<T>& pg = g.grad_of(var);
        Tensor<T>& acc = grads[slot_of[tensor]];
        for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += pg.data[j];
      }
    }
    batch_loss /= cfg.batch;
    if (!std::isfinite(batch_loss)) throw TrainingError("pretrain: loss diverged", step);
    for (auto& gacc : grads) {
      for (T& v : gacc.data) v /= static_cast<T>(cfg.batch);
    }
    opt.step(grads, warmup_cosine_lr(step, cfg.steps, cfg.warmup, cfg.lr_max));
    metrics.steps_run = step + 1;
  }

  metrics.heldout_loss = heldout_loss(model, heldout);
  metrics.heldout_token_accuracy = heldout_token_accuracy(model, heldout);
  return metrics;
}

}  // namespace dlr
