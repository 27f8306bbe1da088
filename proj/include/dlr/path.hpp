#pragma once

#include <string>
#include <vector>

#include "dlr/errors.hpp"

namespace dlr {

// ============================================================================
// Edited execution paths
// ============================================================================
//
// A path is the ordered list of layer indices (1-based) actually applied in a
// forward pass. The default path is [1..L]. Valid edits keep the original
// layer order, skip at most two consecutive layers (counting the stretches
// before the first and after the last executed index), repeat any layer at
// most once (the two applications adjacent), and cap total length at 2L.

using ExecutionPath = std::vector<int>;

// Per-layer action / label coding, shared across the whole project.
enum Action : int { kSkip = 0, kExecute = 1, kRepeat = 2 };

using RoutingLabels = std::vector<int>;  // values in {0,1,2}, one per layer

inline ExecutionPath default_path(int num_layers) {
  ExecutionPath p(num_layers);
  for (int i = 0; i < num_layers; ++i) p[i] = i + 1;
  return p;
}

struct PathCheck {
  bool ok = true;
  std::string violation;  // first violated rule, by name

  static PathCheck good() { return {}; }
  static PathCheck bad(std::string why) { return {false, std::move(why)}; }
};

inline PathCheck validate_path(const ExecutionPath& path, int num_layers) {
  if (static_cast<int>(path.size()) > 2 * num_layers) {
    return PathCheck::bad("length cap: |path| > 2L");
  }
  int prev = 0;
  int count_prev = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const int layer = path[i];
    if (layer < 1 || layer > num_layers) {
      return PathCheck::bad("index out of range: layer " + std::to_string(layer));
    }
    if (layer < prev) {
      return PathCheck::bad("order: decreasing index at position " + std::to_string(i));
    }
    if (layer == prev) {
      if (++count_prev > 2) {
        return PathCheck::bad("more than a single repeat of layer " + std::to_string(layer));
      }
    } else {
      // Gap between consecutive distinct executed layers (and before the
      // first one): at most two absent indices.
      if (layer - prev - 1 > 2) {
        return PathCheck::bad("skip gap: layers " + std::to_string(prev + 1) + ".." +
                              std::to_string(layer - 1) + " all skipped");
      }
      prev = layer;
      count_prev = 1;
    }
  }
  if (num_layers - prev > 2) {
    return PathCheck::bad("skip gap: layers " + std::to_string(prev + 1) + ".." +
                          std::to_string(num_layers) + " all skipped");
  }
  return PathCheck::good();
}

inline void require_valid_path(const ExecutionPath& path, int num_layers) {
  PathCheck c = validate_path(path, num_layers);
  if (!c.ok) throw ConstraintError("invalid execution path: " + c.violation);
}

// y_l = multiplicity of layer l in the path.
inline RoutingLabels path_to_labels(const ExecutionPath& path, int num_layers) {
  RoutingLabels labels(num_layers, 0);
  for (int layer : path) labels[layer - 1] += 1;
  return labels;
}

// Inverse of path_to_labels: emit each index in ascending order with its
// multiplicity. Order preservation makes the counts sufficient.
inline ExecutionPath labels_to_path(const RoutingLabels& labels) {
  ExecutionPath path;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int k = 0; k < labels[i]; ++k) path.push_back(static_cast<int>(i) + 1);
  }
  require_valid_path(path, static_cast<int>(labels.size()));
  return path;
}

inline int executed_layer_count(const RoutingLabels& labels) {
  int n = 0;
  for (int y : labels) n += y;
  return n;
}

// ============================================================================
// Single-edit actions
// ============================================================================
//
// One atomic edit per tree expansion: skip_layer(l) removes the only
// occurrence of l, repeat_layer(l) duplicates an executed, non-repeated l.
// Layers already skipped or repeated admit no further action, so the search
// tree only ever moves away from the default path.

struct EditAction {
  enum Kind { kSkipLayer, kRepeatLayer } kind;
  int layer;

  bool operator==(const EditAction& o) const { return kind == o.kind && layer == o.layer; }
};

inline ExecutionPath apply_action(const ExecutionPath& path, const EditAction& action) {
  ExecutionPath out;
  out.reserve(path.size() + 1);
  bool done = false;
  for (int layer : path) {
    if (!done && layer == action.layer) {
      done = true;
      if (action.kind == EditAction::kSkipLayer) continue;
      out.push_back(layer);
      out.push_back(layer);
      continue;
    }
    out.push_back(layer);
  }
  return out;
}

// All single-edit actions whose application yields a valid path different
// from the input. Skips are enumerated before repeats, ascending by layer;
// the expansion order of the search inherits this bias toward shorter paths.
inline std::vector<EditAction> legal_actions(const ExecutionPath& path, int num_layers) {
  std::vector<int> multiplicity(num_layers + 1, 0);
  for (int layer : path) multiplicity[layer] += 1;

  std::vector<EditAction> actions;
  for (int pass = 0; pass < 2; ++pass) {
    const auto kind = pass == 0 ? EditAction::kSkipLayer : EditAction::kRepeatLayer;
    for (int layer = 1; layer <= num_layers; ++layer) {
      if (multiplicity[layer] != 1) continue;
      EditAction a{kind, layer};
      if (validate_path(apply_action(path, a), num_layers).ok) actions.push_back(a);
    }
  }
  return actions;
}

}  // namespace dlr
