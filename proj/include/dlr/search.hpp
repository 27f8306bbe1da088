#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dlr/backbone.hpp"
#include "dlr/io.hpp"
#include "dlr/path.hpp"
#include "dlr/rng.hpp"
#include "dlr/tasks.hpp"

namespace dlr {

// ============================================================================
// Length-aware MCTS over edited execution paths
// ============================================================================

struct SearchConfig {
  int simulations = 50;       // N_s
  double exploration = 1.8;   // c
  double length_penalty = 3.0;  // lambda
  double p_rand = 0.1;        // random-child probability during selection
  std::uint64_t seed = 0;
  bool check_invariants = false;  // verify tree bookkeeping after every simulation

  void validate() const {
    if (simulations < 1) throw ConfigError("search: simulations must be >= 1");
    if (exploration < 0) throw ConfigError("search: exploration must be >= 0");
    if (length_penalty < 0) throw ConfigError("search: length penalty must be >= 0");
    if (p_rand < 0 || p_rand > 1) throw ConfigError("search: p_rand must be in [0,1]");
  }
};

// UCB with an explicit length penalty to favor compact paths:
//   Q/v + c * sqrt(ln V / v) - lambda * |path| / L
// where V is the parent's visit count. Unvisited nodes take infinite
// priority before any scored node.
inline double ucb_score(double q, int visits, int parent_visits, int path_len, int num_layers,
                        double c, double lambda) {
  if (visits == 0) return std::numeric_limits<double>::infinity();
  return q / visits + c * std::sqrt(std::log(static_cast<double>(parent_visits)) / visits) -
         lambda * static_cast<double>(path_len) / num_layers;
}

struct SearchStats {
  int visited_paths = 0;       // unique paths evaluated (including the default)
  int forward_inferences = 0;  // backbone forwards (cache misses)
  int simulations_run = 0;
  int root_visits = 0;         // evaluations routed through selection
  int tree_nodes = 0;
};

struct SearchResult {
  std::optional<ExecutionPath> best;  // shortest correct path found
  double reward_default = 0.0;
  double reward_best = 0.0;
  SearchStats stats;
};

// EvalFn: double(const ExecutionPath&) returning a reward in [0,1];
// evaluations are memoized per search so duplicate paths cost no forward.
// After any correct path is found, the search breaks immediately when the
// default path was wrong (a wrong-to-correct fix needs no further
// shortening); otherwise the budget keeps hunting for shorter correct paths.
template <class EvalFn>
SearchResult mcts_search(int num_layers, EvalFn&& eval, const SearchConfig& cfg) {
  cfg.validate();

  struct Node {
    ExecutionPath path;
    double q = 0.0;
    int visits = 0;
    int parent = -1;
    std::vector<int> children;
    std::vector<EditAction> untried;
    std::size_t next_untried = 0;
  };

  std::vector<Node> nodes;
  std::map<ExecutionPath, double> cache;
  SearchResult result;
  Rng rng(cfg.seed);

  auto evaluate = [&](const ExecutionPath& path) {
    auto it = cache.find(path);
    if (it != cache.end()) return it->second;
    require_valid_path(path, num_layers);  // every evaluated path is valid
    const double r = eval(path);
    cache.emplace(path, r);
    result.stats.visited_paths += 1;
    result.stats.forward_inferences += 1;
    return r;
  };

  auto backprop = [&](int node_id, double r) {
    for (int id = node_id; id != -1; id = nodes[id].parent) {
      nodes[id].visits += 1;
      nodes[id].q += r;
    }
  };

  // Root holds the default path, evaluated before the loop so the
  // wrong-to-correct break condition is well-defined on simulation 1.
  Node root;
  root.path = default_path(num_layers);
  root.untried = legal_actions(root.path, num_layers);
  nodes.push_back(std::move(root));
  const double reward_default = evaluate(nodes[0].path);
  backprop(0, reward_default);
  result.reward_default = reward_default;
  if (reward_default == 1.0) {
    result.best = nodes[0].path;
    result.reward_best = 1.0;
  }

  for (int sim = 0; sim < cfg.simulations; ++sim) {
    result.stats.simulations_run = sim + 1;

    // Select: descend while fully expanded, by UCB or a random child.
    int node_id = 0;
    while (nodes[node_id].next_untried >= nodes[node_id].untried.size() &&
           !nodes[node_id].children.empty()) {
      const auto& children = nodes[node_id].children;
      if (rng.bernoulli(cfg.p_rand)) {
        node_id = children[static_cast<std::size_t>(rng.below(children.size()))];
        continue;
      }
      int best_child = children[0];
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c : children) {
        const double s =
            ucb_score(nodes[c].q, nodes[c].visits, nodes[node_id].visits,
                      static_cast<int>(nodes[c].path.size()), num_layers, cfg.exploration,
                      cfg.length_penalty);
        if (s > best_score) {
          best_score = s;
          best_child = c;
        }
      }
      node_id = best_child;
    }

    // Expand one untried action (skips enumerate before repeats, so shorter
    // candidates are tried first); a dead end just re-evaluates.
    int leaf_id = node_id;
    if (nodes[node_id].next_untried < nodes[node_id].untried.size()) {
      const EditAction action = nodes[node_id].untried[nodes[node_id].next_untried++];
      Node child;
      child.path = apply_action(nodes[node_id].path, action);
      child.parent = node_id;
      child.untried = legal_actions(child.path, num_layers);
      nodes.push_back(std::move(child));
      leaf_id = static_cast<int>(nodes.size()) - 1;
      nodes[node_id].children.push_back(leaf_id);
    }

    // Evaluate (memoized) and backpropagate the raw reward, no penalty.
    const double r = evaluate(nodes[leaf_id].path);
    backprop(leaf_id, r);

    if (cfg.check_invariants) {
      if (nodes[0].visits != sim + 2) {  // default-path evaluation + simulations
        throw std::logic_error("mcts: root visit count out of sync");
      }
      for (const auto& n : nodes) {
        if (n.q < -1e-12 || n.q > n.visits + 1e-12) {
          throw std::logic_error("mcts: node reward outside [0, visits]");
        }
      }
    }

    if (r == 1.0 &&
        (!result.best || nodes[leaf_id].path.size() < result.best->size())) {
      result.best = nodes[leaf_id].path;
      result.reward_best = 1.0;
      if (reward_default == 0.0) break;  // wrong-to-correct: stop at once
    }
  }
  result.stats.root_visits = nodes[0].visits;
  result.stats.tree_nodes = static_cast<int>(nodes.size());
  return result;
}

// Reward evaluation of one instance against a backbone.
template <class Model>
double evaluate_path_reward(const Model& model, const TaskInstance& inst,
                            const ExecutionPath& path) {
  return reward(reward_spec(inst), forward_answer(model, inst.tokens, path));
}

template <class Model>
SearchResult mcts_search_instance(const Model& model, const TaskInstance& inst,
                                  const SearchConfig& cfg) {
  return mcts_search(
      model.num_layers(),
      [&](const ExecutionPath& path) { return evaluate_path_reward(model, inst, path); }, cfg);
}

// ============================================================================
// Exhaustive test oracle
// ============================================================================

struct ExhaustiveResult {
  std::vector<ExecutionPath> correct;  // every valid path with reward 1
  int shortest_len = -1;
  int paths_evaluated = 0;
};

inline void enumerate_valid_paths(int num_layers,
                                  const std::function<void(const ExecutionPath&)>& visit) {
  std::vector<int> labels(num_layers, 0);
  ExecutionPath path;
  std::function<void(int, int)> rec = [&](int layer, int last_executed) {
    if (layer > num_layers) {
      if (num_layers - last_executed <= 2) visit(path);
      return;
    }
    // skip
    if (layer - last_executed <= 2) rec(layer + 1, last_executed);
    // execute / repeat
    path.push_back(layer);
    rec(layer + 1, layer);
    path.push_back(layer);
    rec(layer + 1, layer);
    path.pop_back();
    path.pop_back();
  };
  rec(1, 0);
}

// Enumerates every valid path, evaluates each once, and returns all paths
// with reward 1. Guarded against combinatorial blowup.
template <class EvalFn>
ExhaustiveResult exhaustive_search(int num_layers, EvalFn&& eval) {
  if (num_layers > 6) throw InputError("exhaustive_search: refusing L > 6");
  ExhaustiveResult res;
  enumerate_valid_paths(num_layers, [&](const ExecutionPath& path) {
    res.paths_evaluated += 1;
    if (eval(path) == 1.0) {
      res.correct.push_back(path);
      const int len = static_cast<int>(path.size());
      if (res.shortest_len < 0 || len < res.shortest_len) res.shortest_len = len;
    }
  });
  return res;
}

template <class Model>
ExhaustiveResult exhaustive_search_instance(const Model& model, const TaskInstance& inst) {
  return exhaustive_search(model.num_layers(), [&](const ExecutionPath& path) {
    return evaluate_path_reward(model, inst, path);
  });
}

// ============================================================================
// Supervision dataset generation
// ============================================================================

struct StratumStats {
  std::string stratum;
  int original = 0;
  int sampled = 0;
  long long visited = 0;
  long long inferences = 0;
  double layers_saved_mean = 0.0;
};

struct GenerateResult {
  SupervisionDataset dataset;
  std::vector<StratumStats> stats;  // ordered by first appearance in corpus
};

// Runs the search per example and retains only accuracy-preserving or
// improving paths; examples whose best path is the default itself are
// dropped, since they add no routing signal beyond all-execute.
template <class Model>
GenerateResult generate_dataset(const Model& model, const TaskCorpus& corpus,
                                const SearchConfig& cfg, int workers = 1) {
  struct PerExample {
    bool retained = false;
    SupervisionExample ex;
    SearchStats stats;
    int layers_saved = 0;
  };
  std::vector<PerExample> results(corpus.size());

  auto run_one = [&](std::size_t i) {
    const TaskInstance& inst = corpus[i];
    SearchConfig local = cfg;
    // Per-example stream: corpus-level parallelism cannot perturb results.
    local.seed = derive_seed(cfg.seed, "search/example", i);
    SearchResult sr = mcts_search_instance(model, inst, local);
    PerExample out;
    out.stats = sr.stats;
    const ExecutionPath pi0 = default_path(model.num_layers());
    if (sr.best && sr.reward_best >= sr.reward_default && *sr.best != pi0) {
      out.retained = true;
      out.ex.id = inst.id;
      out.ex.stratum = inst.stratum;
      out.ex.tokens = inst.tokens;
      out.ex.labels = path_to_labels(*sr.best, model.num_layers());
      out.ex.gold = inst.gold;
      out.ex.kind = inst.kind;
      out.ex.reward_default = sr.reward_default;
      out.ex.reward_best = sr.reward_best;
      out.ex.path_len = static_cast<int>(sr.best->size());
      out.layers_saved = model.num_layers() - out.ex.path_len;
    }
    results[i] = std::move(out);
  };

  if (workers <= 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t i = next.fetch_add(1); i < corpus.size(); i = next.fetch_add(1)) {
          run_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  GenerateResult out;
  std::map<std::string, std::size_t> stat_index;
  std::vector<long long> saved_sum;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string& stratum = corpus[i].stratum;
    if (!stat_index.count(stratum)) {
      stat_index[stratum] = out.stats.size();
      out.stats.push_back({stratum, 0, 0, 0, 0, 0.0});
      saved_sum.push_back(0);
    }
    StratumStats& st = out.stats[stat_index[stratum]];
    st.original += 1;
    st.visited += results[i].stats.visited_paths;
    st.inferences += results[i].stats.forward_inferences;
    if (results[i].retained) {
      st.sampled += 1;
      saved_sum[stat_index[stratum]] += results[i].layers_saved;
      out.dataset.push_back(std::move(results[i].ex));
    }
  }
  for (std::size_t s = 0; s < out.stats.size(); ++s) {
    if (out.stats[s].sampled > 0) {
      out.stats[s].layers_saved_mean =
          static_cast<double>(saved_sum[s]) / out.stats[s].sampled;
    }
  }
  return out;
}

inline std::string stats_to_csv(const std::vector<StratumStats>& stats) {
  std::string csv = "stratum,original,sampled,visited,inferences,layers_saved\n";
  for (const auto& st : stats) {
    csv += st.stratum + "," + std::to_string(st.original) + "," + std::to_string(st.sampled) +
           "," + std::to_string(st.visited) + "," + std::to_string(st.inferences) + "," +
           fmt(st.layers_saved_mean) + "\n";
  }
  return csv;
}

}  // namespace dlr
