#pragma once

#include <string>
#include <vector>

#include "dlr/path.hpp"
#include "dlr/tensor.hpp"

namespace dlr {

// ============================================================================
// Path-constrained forward execution
// ============================================================================
//
// Works over any frozen layered model exposing:
//   using Scalar = T;
//   int num_layers() const;
//   Tensor<T> embed(const std::vector<int>& tokens) const;
//   Tensor<T> apply_layer(int layer, const Tensor<T>& h) const;   // 1-based
//   std::string answer_text(const Tensor<T>& h) const;
//
// Repeats recompute the block in full on the first application's output;
// there is no incremental cache to keep semantics out of the critical path.

template <class Model>
struct ForwardResult {
  using T = typename Model::Scalar;
  // states[l-1] is the state entering layer position l (l in 1..L); the last
  // entry is the final state, so states has L+1 entries.
  std::vector<Tensor<T>> states;
  std::string answer;

  const Tensor<T>& final_state() const { return states.back(); }
};

// Executes per-layer action labels y in {0,1,2}^L.
template <class Model>
ForwardResult<Model> forward_with_labels(const Model& model, const std::vector<int>& tokens,
                                         const RoutingLabels& labels) {
  if (tokens.empty()) throw InputError("forward: empty token sequence");
  if (static_cast<int>(labels.size()) != model.num_layers()) {
    throw InputError("forward: labels size must equal layer count");
  }
  ForwardResult<Model> result;
  result.states.reserve(model.num_layers() + 1);
  auto h = model.embed(tokens);
  for (int layer = 1; layer <= model.num_layers(); ++layer) {
    result.states.push_back(h);
    for (int rep = 0; rep < labels[layer - 1]; ++rep) {
      h = model.apply_layer(layer, h);
    }
  }
  result.states.push_back(std::move(h));
  result.answer = model.answer_text(result.states.back());
  return result;
}

template <class Model>
ForwardResult<Model> forward_with_path(const Model& model, const std::vector<int>& tokens,
                                       const ExecutionPath& path) {
  require_valid_path(path, model.num_layers());
  return forward_with_labels(model, tokens, path_to_labels(path, model.num_layers()));
}

template <class Model>
ForwardResult<Model> forward_default(const Model& model, const std::vector<int>& tokens) {
  return forward_with_labels(model, tokens,
                             RoutingLabels(static_cast<std::size_t>(model.num_layers()), kExecute));
}

// Lean evaluation used in the search inner loop: no state collection.
template <class Model>
std::string forward_answer(const Model& model, const std::vector<int>& tokens,
                           const ExecutionPath& path) {
  require_valid_path(path, model.num_layers());
  if (tokens.empty()) throw InputError("forward: empty token sequence");
  auto h = model.embed(tokens);
  for (int layer : path) h = model.apply_layer(layer, h);
  return model.answer_text(h);
}

}  // namespace dlr
