#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dlr/autodiff.hpp"
#include "dlr/rng.hpp"
#include "dlr/tensor.hpp"
#include "dlr/vocab.hpp"

namespace dlr {

// ============================================================================
// Tiny decoder-only transformer
// ============================================================================
//
// Pre-normalization residual blocks with learned absolute positional
// embeddings and causal masking. Every block is residual, so with all block
// weights zero each block is the identity map. Inference is single-pass
// answer decoding: the head reads the last position and the argmax token is
// rendered as answer text.

struct TransformerSpec {
  int num_layers = 8;
  int dim = 64;
  int heads = 4;
  int ffn = 256;
  int vocab = 64;
  int max_seq = 64;
  std::uint64_t seed = 1;
};

template <typename T>
class TinyTransformer {
 public:
  using Scalar = T;

  struct Block {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> w1, b1, w2, b2;
  };

  explicit TinyTransformer(TransformerSpec spec) : spec_(spec) {
    if (spec_.dim % spec_.heads != 0) throw InputError("transformer: dim % heads != 0");
    Rng rng(derive_seed(spec_.seed, "transformer/init"));
    auto dense = [&](int r, int c) {
      Tensor<T> w({r, c});
      for (T& v : w.data) v = static_cast<T>(rng.normal(0.0, 0.02));
      return w;
    };
    tok_emb_ = dense(spec_.vocab, spec_.dim);
    pos_emb_ = dense(spec_.max_seq, spec_.dim);
    blocks_.resize(spec_.num_layers);
    for (auto& b : blocks_) {
      b.ln1_g = Tensor<T>::full({1, spec_.dim}, T(1));
      b.ln1_b = Tensor<T>({1, spec_.dim});
      b.wq = dense(spec_.dim, spec_.dim);
      b.bq = Tensor<T>({1, spec_.dim});
      b.wk = dense(spec_.dim, spec_.dim);
      b.bk = Tensor<T>({1, spec_.dim});
      b.wv = dense(spec_.dim, spec_.dim);
      b.bv = Tensor<T>({1, spec_.dim});
      b.wo = dense(spec_.dim, spec_.dim);
      b.bo = Tensor<T>({1, spec_.dim});
      b.ln2_g = Tensor<T>::full({1, spec_.dim}, T(1));
      b.ln2_b = Tensor<T>({1, spec_.dim});
      b.w1 = dense(spec_.dim, spec_.ffn);
      b.b1 = Tensor<T>({1, spec_.ffn});
      b.w2 = dense(spec_.ffn, spec_.dim);
      b.b2 = Tensor<T>({1, spec_.dim});
    }
    lnf_g_ = Tensor<T>::full({1, spec_.dim}, T(1));
    lnf_b_ = Tensor<T>({1, spec_.dim});
    w_head_ = dense(spec_.dim, spec_.vocab);
    b_head_ = Tensor<T>({1, spec_.vocab});
  }

  const TransformerSpec& spec() const { return spec_; }
  int num_layers() const { return spec_.num_layers; }
  int dim() const { return spec_.dim; }
  int vocab_size() const { return spec_.vocab; }

  // Zeroes every block-internal parameter; used by the residual-identity
  // tests and harmless otherwise.
  void zero_blocks() {
    for (auto& b : blocks_) {
      for (Tensor<T>* t : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv,
                           &b.wo, &b.bo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2}) {
        std::fill(t->data.begin(), t->data.end(), T(0));
      }
    }
  }

  Tensor<T> embed(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw InputError("transformer: empty token sequence");
    if (static_cast<int>(tokens.size()) > spec_.max_seq) {
      throw InputError("transformer: sequence exceeds max length");
    }
    Tensor<T> h({static_cast<int>(tokens.size()), spec_.dim});
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (tokens[t] < 0 || tokens[t] >= spec_.vocab) throw InputError("token out of vocabulary");
      for (int j = 0; j < spec_.dim; ++j) {
        h.at(static_cast<int>(t), j) =
            tok_emb_.at(tokens[t], j) + pos_emb_.at(static_cast<int>(t), j);
      }
    }
    return h;
  }

  Tensor<T> apply_layer(int layer, const Tensor<T>& h) const {
    const Block& b = blocks_[layer - 1];
    const int rows = h.rows();
    const int dh = spec_.dim / spec_.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Tensor<T> x = h;
    // Attention sub-block.
    Tensor<T> xn = layer_norm_rows(x, b.ln1_g, b.ln1_b);
    Tensor<T> q = add_bias(matmul(xn, b.wq), b.bq);
    Tensor<T> k = add_bias(matmul(xn, b.wk), b.bk);
    Tensor<T> v = add_bias(matmul(xn, b.wv), b.bv);
    Tensor<T> attn_out({rows, spec_.dim});
    std::vector<T> scores(rows);
    for (int head = 0; head < spec_.heads; ++head) {
      const int c0 = head * dh;
      for (int i = 0; i < rows; ++i) {
        // Causal: position i attends to 0..i.
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j <= i; ++j) {
          T s = T(0);
          for (int c = 0; c < dh; ++c) s += q.at(i, c0 + c) * k.at(j, c0 + c);
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        T denom = T(0);
        for (int j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          denom += scores[j];
        }
        for (int c = 0; c < dh; ++c) {
          T acc = T(0);
          for (int j = 0; j <= i; ++j) acc += scores[j] * v.at(j, c0 + c);
          attn_out.at(i, c0 + c) = acc / denom;
        }
      }
    }
    x = add(x, add_bias(matmul(attn_out, b.wo), b.bo));

    // MLP sub-block.
    Tensor<T> yn = layer_norm_rows(x, b.ln2_g, b.ln2_b);
    Tensor<T> mid = gelu(add_bias(matmul(yn, b.w1), b.b1));
    x = add(x, add_bias(matmul(mid, b.w2), b.b2));
    return x;
  }

  // Vocabulary logits for every position.
  Tensor<T> head_logits(const Tensor<T>& h) const {
    return add_bias(matmul(layer_norm_rows(h, lnf_g_, lnf_b_), w_head_), b_head_);
  }

  int answer_token(const Tensor<T>& h) const {
    Tensor<T> logits = head_logits(h);
    const int last = logits.rows() - 1;
    int best = 0;
    for (int j = 1; j < spec_.vocab; ++j) {
      if (logits.at(last, j) > logits.at(last, best)) best = j;
    }
    return best;
  }

  std::string answer_text(const Tensor<T>& h) const {
    const int tok = answer_token(h);
    if (tok >= vocab::kLetterA && tok < vocab::kLetterA + 4) {
      return "Answer: " + vocab::letter_name(tok - vocab::kLetterA);
    }
    if (tok >= vocab::kValueBase) {
      return "boxed{" + std::to_string(tok - vocab::kValueBase) + "}";
    }
    return "";
  }

  // --- parameter registry (shared by optimizer and checkpoint) ---

  struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
    bool decay;  // weight decay applies (matrices yes, biases/norms no)
  };

  std::vector<ParamRef> named_params() {
    std::vector<ParamRef> out;
    out.push_back({"tok_emb", &tok_emb_, true});
    out.push_back({"pos_emb", &pos_emb_, true});
    for (int l = 0; l < spec_.num_layers; ++l) {
      auto& b = blocks_[l];
      const std::string p = "block." + std::to_string(l) + ".";
      out.push_back({p + "ln1.g", &b.ln1_g, false});
      out.push_back({p + "ln1.b", &b.ln1_b, false});
      out.push_back({p + "wq", &b.wq, true});
      out.push_back({p + "bq", &b.bq, false});
      out.push_back({p + "wk", &b.wk, true});
      out.push_back({p + "bk", &b.bk, false});
      out.push_back({p + "wv", &b.wv, true});
      out.push_back({p + "bv", &b.bv, false});
      out.push_back({p + "wo", &b.wo, true});
      out.push_back({p + "bo", &b.bo, false});
      out.push_back({p + "ln2.g", &b.ln2_g, false});
      out.push_back({p + "ln2.b", &b.ln2_b, false});
      out.push_back({p + "w1", &b.w1, true});
      out.push_back({p + "b1", &b.b1, false});
      out.push_back({p + "w2", &b.w2, true});
      out.push_back({p + "b2", &b.b2, false});
    }
    out.push_back({"lnf.g", &lnf_g_, false});
    out.push_back({"lnf.b", &lnf_b_, false});
    out.push_back({"head.w", &w_head_, true});
    out.push_back({"head.b", &b_head_, false});
    return out;
  }

  // ---- autodiff forward for pretraining ----

  // Registers all parameters in the graph and returns (loss, logits) for a
  // token sequence with per-position next-token targets (-1 = ignore).
  std::pair<typename Graph<T>::Var, typename Graph<T>::Var> lm_loss(
      Graph<T>& g, const std::vector<int>& tokens, const std::vector<int>& targets,
      std::vector<std::pair<Tensor<T>*, typename Graph<T>::Var>>& param_vars) {
    using Var = typename Graph<T>::Var;
    param_vars.clear();
    auto reg = [&](Tensor<T>& t) {
      Var v = g.input(t, true);
      param_vars.push_back({&t, v});
      return v;
    };

    const int rows = static_cast<int>(tokens.size());
    const int dh = spec_.dim / spec_.heads;

    Var tok = reg(tok_emb_);
    Var x = g.embedding(tok, tokens);
    {
      // Positional embedding rows for this sequence length.
      Var pos = reg(pos_emb_);
      std::vector<int> idx(rows);
      for (int i = 0; i < rows; ++i) idx[i] = i;
      x = g.add(x, g.embedding(pos, idx));
    }

    // Causal mask shared by all heads.
    Tensor<T> mask({rows, rows});
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j) mask.at(i, j) = j <= i ? T(0) : T(-1e9);
    Var mask_v = g.input(mask);

    for (auto& b : blocks_) {
      Var ln1g = reg(b.ln1_g), ln1b = reg(b.ln1_b);
      Var xn = g.layer_norm_rows(x, ln1g, ln1b);
      Var q = g.add_bias(g.matmul(xn, reg(b.wq)), reg(b.bq));
      Var k = g.add_bias(g.matmul(xn, reg(b.wk)), reg(b.bk));
      Var v = g.add_bias(g.matmul(xn, reg(b.wv)), reg(b.bv));
      std::vector<Var> heads;
      for (int head = 0; head < spec_.heads; ++head) {
        const int c0 = head * dh, c1 = (head + 1) * dh;
        Var qh = g.slice_cols(q, c0, c1);
        Var kh = g.slice_cols(k, c0, c1);
        Var vh = g.slice_cols(v, c0, c1);
        Var scores = g.scale(g.matmul(qh, g.transpose(kh)), T(1) / std::sqrt(static_cast<T>(dh)));
        Var att = g.softmax_rows(g.add(scores, mask_v));
        heads.push_back(g.matmul(att, vh));
      }
      Var attn = g.concat_cols(heads);
      x = g.add(x, g.add_bias(g.matmul(attn, reg(b.wo)), reg(b.bo)));

      Var ln2g = reg(b.ln2_g), ln2b = reg(b.ln2_b);
      Var yn = g.layer_norm_rows(x, ln2g, ln2b);
      Var mid = g.gelu(g.add_bias(g.matmul(yn, reg(b.w1)), reg(b.b1)));
      x = g.add(x, g.add_bias(g.matmul(mid, reg(b.w2)), reg(b.b2)));
    }

    Var xf = g.layer_norm_rows(x, reg(lnf_g_), reg(lnf_b_));
    Var logits = g.add_bias(g.matmul(xf, reg(w_head_)), reg(b_head_));
    Var loss = g.cross_entropy(logits, targets);
    return {loss, logits};
  }

 private:
  TransformerSpec spec_;
  Tensor<T> tok_emb_, pos_emb_;
  std::vector<Block> blocks_;
  Tensor<T> lnf_g_, lnf_b_, w_head_, b_head_;
};

}  // namespace dlr
