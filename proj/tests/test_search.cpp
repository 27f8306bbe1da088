#include <doctest.h>

#include <map>
#include <set>

#include "dlr/counter_model.hpp"
#include "dlr/io.hpp"
#include "dlr/search.hpp"
#include "dlr/tasks.hpp"
#include "dlr/transformer.hpp"

using namespace dlr;

namespace {

// Independent re-derivation of the three path rules, structured differently
// from validate_path: materialize the multiset, then check each rule over
// the executed set.
bool brute_force_valid(const ExecutionPath& path, int L) {
  if (static_cast<int>(path.size()) > 2 * L) return false;
  for (int x : path) {
    if (x < 1 || x > L) return false;
  }
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (path[i] < path[i - 1]) return false;
  }
  std::map<int, int> mult;
  for (int x : path) mult[x] += 1;
  for (auto& [layer, m] : mult) {
    if (m > 2) return false;
  }
  // Repeats adjacent: scan occurrences of each doubled layer.
  for (auto& [layer, m] : mult) {
    if (m == 2) {
      for (std::size_t i = 0; i < path.size(); ++i) {
        if (path[i] == layer) {
          if (i + 1 >= path.size() || path[i + 1] != layer) return false;
          break;
        }
      }
    }
  }
  // Gap rule over the executed index set, boundaries included.
  std::set<int> executed(path.begin(), path.end());
  int run = 0;
  for (int l = 1; l <= L; ++l) {
    if (executed.count(l)) {
      run = 0;
    } else if (++run >= 3) {
      return false;
    }
  }
  return true;
}

CounterModel<float> counter6() {
  typename CounterModel<float>::Spec spec;
  spec.num_layers = 6;
  spec.seed = 4;
  return CounterModel<float>(spec);
}

TaskGenConfig gencfg6() {
  TaskGenConfig cfg;
  cfg.num_layers = 6;
  return cfg;
}

}  // namespace

TEST_CASE("validate_path: named violations") {
  CHECK(validate_path(default_path(8), 8).ok);
  auto v1 = validate_path({1, 5, 6}, 6);
  CHECK(!v1.ok);
  CHECK(v1.violation.find("2..4") != std::string::npos);  // three consecutive skips
  auto v2 = validate_path({1, 2, 2, 2, 3, 4}, 4);
  CHECK(!v2.ok);
  CHECK(v2.violation.find("repeat") != std::string::npos);
  CHECK(!validate_path({2, 1}, 3).ok);
  CHECK(!validate_path({1, 2, 9}, 3).ok);
  CHECK(!validate_path({}, 3).ok);           // prefix gap of 3
  CHECK(validate_path({}, 2).ok);            // gap of 2 is fine
  CHECK(validate_path({1, 2, 3, 6}, 6).ok);  // interior gap of 2
  CHECK(!validate_path({1, 2, 3, 7}, 7).ok); // interior gap of 3
  CHECK(!validate_path({1, 2, 3, 4}, 7).ok); // suffix gap of 3
  CHECK(!validate_path({1, 1, 1}, 2).ok);    // length cap 2L
}

TEST_CASE("validate_path agrees with an independent checker on all short sequences, L=4") {
  const int L = 4;
  // Every sequence over [1..4] up to length 8 (不 just sorted ones).
  std::vector<int> seq;
  long long checked = 0;
  std::function<void(int)> rec = [&](int depth) {
    const bool mine = validate_path(seq, L).ok;
    const bool brute = brute_force_valid(seq, L);
    if (mine != brute) {
      CAPTURE(seq);
      REQUIRE(mine == brute);
    }
    ++checked;
    if (depth == 8) return;
    for (int v = 1; v <= L; ++v) {
      seq.push_back(v);
      rec(depth + 1);
      seq.pop_back();
    }
  };
  rec(0);
  CHECK(checked == 87381);  // sum of 4^k for k=0..8
}

TEST_CASE("path/labels roundtrip is the identity on every valid path, L<=6") {
  for (int L = 1; L <= 6; ++L) {
    int count = 0;
    enumerate_valid_paths(L, [&](const ExecutionPath& p) {
      ++count;
      CHECK(labels_to_path(path_to_labels(p, L)) == p);
    });
    CHECK(count > 0);
  }
}

TEST_CASE("path_to_labels counts multiplicities") {
  CHECK(path_to_labels(default_path(5), 5) == RoutingLabels({1, 1, 1, 1, 1}));
  CHECK(path_to_labels({1, 2, 2, 4}, 4) == RoutingLabels({1, 2, 0, 1}));
  CHECK(labels_to_path({1, 2, 0, 1}) == ExecutionPath({1, 2, 2, 4}));
  CHECK_THROWS_AS(labels_to_path({0, 0, 0, 1}), ConstraintError);
}

TEST_CASE("legal_actions: default path admits one skip and one repeat per layer") {
  auto actions = legal_actions(default_path(4), 4);
  CHECK(actions.size() == 8);
  for (const auto& a : actions) {
    CHECK(validate_path(apply_action(default_path(4), a), 4).ok);
  }
  // Skips enumerate before repeats, ascending.
  CHECK(actions[0].kind == EditAction::kSkipLayer);
  CHECK(actions[0].layer == 1);
  CHECK(actions[4].kind == EditAction::kRepeatLayer);
}

TEST_CASE("legal_actions: no repeats at the length cap; skips never create a 3-gap") {
  // All layers already repeated: multiplicity 2 everywhere, no action legal.
  ExecutionPath maxed;
  for (int l = 1; l <= 3; ++l) {
    maxed.push_back(l);
    maxed.push_back(l);
  }
  CHECK(legal_actions(maxed, 3).empty());

  // Layers 2,3 skipped: skipping 1 or 4 would make a 3-gap.
  ExecutionPath path = {1, 4, 5, 6};
  auto actions = legal_actions(path, 6);
  for (const auto& a : actions) {
    if (a.kind == EditAction::kSkipLayer) {
      CHECK(a.layer != 1);
      CHECK(a.layer != 4);
    }
  }
}

TEST_CASE("legal_actions matches brute-force validity over random paths") {
  Rng rng(3);
  for (int L = 3; L <= 6; ++L) {
    std::vector<ExecutionPath> paths;
    enumerate_valid_paths(L, [&](const ExecutionPath& p) { paths.push_back(p); });
    for (int trial = 0; trial < 30; ++trial) {
      const auto& path = paths[rng.below(paths.size())];
      auto actions = legal_actions(path, L);
      // Brute force: all single edits (remove single occurrence / duplicate
      // single occurrence) that validate and change the path.
      std::vector<EditAction> expected;
      for (int pass = 0; pass < 2; ++pass) {
        for (int l = 1; l <= L; ++l) {
          if (std::count(path.begin(), path.end(), l) != 1) continue;
          EditAction a{pass == 0 ? EditAction::kSkipLayer : EditAction::kRepeatLayer, l};
          auto edited = apply_action(path, a);
          if (edited != path && brute_force_valid(edited, L)) expected.push_back(a);
        }
      }
      REQUIRE(actions.size() == expected.size());
      for (std::size_t i = 0; i < actions.size(); ++i) CHECK(actions[i] == expected[i]);
    }
  }
}

TEST_CASE("ucb_score: arithmetic spot values and properties") {
  CHECK(ucb_score(1.0, 1, 1, 8, 8, 1.8, 3.0) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(ucb_score(2.0, 4, 16, 24, 32, 1.8, 3.0) == doctest::Approx(-0.2514017).epsilon(1e-6));
  // lambda = 0 reduces to standard UCB1.
  const double ucb1 = 2.0 / 4 + 1.8 * std::sqrt(std::log(16.0) / 4);
  CHECK(ucb_score(2.0, 4, 16, 24, 32, 1.8, 0.0) == doctest::Approx(ucb1).epsilon(1e-12));
  //

  CHECK(ucb_score(0, 0, 5, 3, 8, 1.8, 3.0) == std::numeric_limits<double>::infinity());

  // Strictly decreasing in path length at lambda > 0.
  double prev = ucb_score(1.0, 2, 8, 1, 8, 1.8, 3.0);
  for (int len = 2; len <= 16; ++len) {
    const double cur = ucb_score(1.0, 2, 8, len, 8, 1.8, 3.0);
    CHECK(cur < prev);
    prev = cur;
  }
  // Exploration term strictly decreasing in v.
  for (int v = 1; v < 10; ++v) {
    const double a = ucb_score(0.0, v, 32, 4, 8, 1.8, 0.0);
    const double b = ucb_score(0.0, v + 1, 32, 4, 8, 1.8, 0.0);
    CHECK(b < a);
  }
}

TEST_CASE("mcts: correct default with a skippable redundant layer yields a shorter path") {
  auto model = counter6();
  auto inst = gen_instance(gencfg6(), "D1", 7, 0);  // default path correct
  SearchConfig cfg;
  cfg.simulations = 200;
  cfg.seed = 5;
  cfg.check_invariants = true;
  auto res = mcts_search_instance(model, inst, cfg);
  REQUIRE(res.best.has_value());
  CHECK(res.reward_default == 1.0);
  CHECK(res.reward_best == 1.0);
  CHECK(res.best->size() < 6);
  CHECK(res.stats.root_visits == res.stats.simulations_run + 1);
}

TEST_CASE("mcts: undercounting default is fixed by a repeat and stops at first correct") {
  auto model = counter6();
  auto inst = gen_instance(gencfg6(), "D2", 7, 1);  // deficit 1
  SearchConfig cfg;
  cfg.simulations = 400;
  cfg.seed = 11;
  cfg.check_invariants = true;
  auto res = mcts_search_instance(model, inst, cfg);
  REQUIRE(res.best.has_value());
  CHECK(res.reward_default == 0.0);
  auto labels = path_to_labels(*res.best, 6);
  int repeats = 0;
  for (int y : labels) repeats += y == kRepeat ? 1 : 0;
  CHECK(repeats == 1);
  // Wrong-to-correct: the loop breaks as soon as the first correct path is
  // found, before exhausting the budget.
  CHECK(res.stats.simulations_run < cfg.simulations);
}

TEST_CASE("mcts: unsolvable instance returns none within budget") {
  auto model = counter6();
  auto inst = gen_instance(gencfg6(), "D1", 7, 2);
  inst.gold = "39";  // unreachable for this instance's offset
  auto fields = parse_prompt(inst.tokens, 6, model.modulus());
  REQUIRE(fields.offset + 8 < 39);

  SearchConfig cfg;
  cfg.simulations = 50;
  cfg.seed = 3;
  auto res = mcts_search_instance(model, inst, cfg);
  CHECK(!res.best.has_value());
  CHECK(res.stats.visited_paths <= cfg.simulations + 1);
  CHECK(res.stats.simulations_run == cfg.simulations);
}

TEST_CASE("mcts: memoization bounds forwards by unique paths; evaluation validates") {
  auto model = counter6();
  auto inst = gen_instance(gencfg6(), "D3", 9, 4);
  int eval_calls = 0;
  SearchConfig cfg;
  cfg.simulations = 300;
  cfg.seed = 17;
  auto res = mcts_search(6, [&](const ExecutionPath& p) {
    require_valid_path(p, 6);
    ++eval_calls;
    return evaluate_path_reward(model, inst, p);
  }, cfg);
  CHECK(eval_calls == res.stats.forward_inferences);
  CHECK(res.stats.forward_inferences == res.stats.visited_paths);
  CHECK(res.stats.visited_paths <= res.stats.simulations_run + 1);
  // Transpositions exist (skip a then b == skip b then a), so the tree has
  // more nodes than unique paths once the budget is large enough.
  CHECK(res.stats.tree_nodes >= res.stats.visited_paths);
}

TEST_CASE("mcts: determinism under seed; different seeds may explore differently") {
  auto model = counter6();
  auto inst = gen_instance(gencfg6(), "D4", 13, 0);
  SearchConfig cfg;
  cfg.simulations = 150;
  cfg.seed = 23;
  auto a = mcts_search_instance(model, inst, cfg);
  auto b = mcts_search_instance(model, inst, cfg);
  CHECK(a.best == b.best);
  CHECK(a.stats.visited_paths == b.stats.visited_paths);
  CHECK(a.stats.forward_inferences == b.stats.forward_inferences);
}

TEST_CASE("exhaustive_search: zero-weight transformer makes all paths agree") {
  TransformerSpec spec;
  spec.num_layers = 4;
  spec.dim = 16;
  spec.heads = 2;
  spec.ffn = 32;
  TinyTransformer<float> model(spec);
  model.zero_blocks();
  TaskInstance inst;
  inst.tokens = {5, 6, 7};
  inst.kind = "numeric-exact";
  inst.gold = "1";
  auto res = exhaustive_search_instance(model, inst);
  CHECK((res.correct.empty() || static_cast<int>(res.correct.size()) == res.paths_evaluated));
}

TEST_CASE("exhaustive_search refuses large layer counts") {
  CHECK_THROWS_AS(exhaustive_search(7, [](const ExecutionPath&) { return 0.0; }), InputError);
}

TEST_CASE("mcts matches the exhaustive oracle's shortest length on seeded instances") {
  auto model = counter6();
  TaskGenConfig cfg = gencfg6();
  SearchConfig scfg;
  scfg.simulations = 200;
  int found = 0, solvable = 0;
  const std::vector<std::string> strata = {"D1", "D2", "D3", "A1", "A2"};
  for (int i = 0; i < 20; ++i) {
    auto inst = gen_instance(cfg, strata[i % strata.size()], 100 + i, i);
    auto oracle = exhaustive_search_instance(model, inst);
    if (oracle.correct.empty()) continue;
    ++solvable;
    scfg.seed = derive_seed(1, "unit", i);
    auto res = mcts_search_instance(model, inst, scfg);
    if (!res.best) continue;
    ++found;
    CHECK(static_cast<int>(res.best->size()) >= oracle.shortest_len);
    CHECK(static_cast<int>(res.best->size()) <= oracle.shortest_len + 1);
  }
  CHECK(solvable == 20);
  CHECK(found >= 19);
}

TEST_CASE("generate_dataset: retention, stats schema, determinism") {
  auto model = counter6();
  TaskGenConfig gcfg = gencfg6();
  TaskCorpus corpus;
  const std::map<std::string, int> mix = {{"D1", 30}, {"D2", 10}, {"D3", 10}};
  for (const auto& [s, n] : mix) {
    auto part = gen_stratum(gcfg, s, 31, n);
    corpus.insert(corpus.end(), part.begin(), part.end());
  }
  SearchConfig scfg;
  scfg.simulations = 250;
  scfg.seed = 7;

  auto out = generate_dataset(model, corpus, scfg);
  CHECK(!out.dataset.empty());
  const ExecutionPath pi0 = default_path(6);
  for (const auto& ex : out.dataset) {
    CHECK(ex.reward_best >= ex.reward_default);
    CHECK(ex.reward_best == 1.0);
    CHECK(ex.path_len <= 12);
    CHECK(labels_to_path(ex.labels) != pi0);
  }
  // Stats rows per stratum with positive mean layers saved on this corpus.
  REQUIRE(out.stats.size() == 3);
  double saved = 0;
  for (const auto& st : out.stats) {
    CHECK(st.original == mix.at(st.stratum));
    CHECK(st.sampled > 0);
    CHECK(st.visited > 0);
    CHECK(st.inferences > 0);
    saved += st.layers_saved_mean * st.sampled;
  }
  CHECK(saved > 0);

  // Same seed: byte-identical dataset and stats files.
  auto again = generate_dataset(model, corpus, scfg);
  const std::string p1 = "/tmp/dlr_ds1.jsonl", p2 = "/tmp/dlr_ds2.jsonl";
  write_dataset(p1, out.dataset);
  write_dataset(p2, again.dataset);
  CHECK(read_text_file(p1) == read_text_file(p2));
  CHECK(stats_to_csv(out.stats) == stats_to_csv(again.stats));
  std::remove(p1.c_str());
  std::remove(p2.c_str());

  // Worker-count independence.
  auto parallel = generate_dataset(model, corpus, scfg, 4);
  write_dataset(p2, parallel.dataset);
  write_dataset(p1, out.dataset);
  CHECK(read_text_file(p1) == read_text_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("generate_dataset drops examples whose best path is the default itself") {
  // A model/instance where no edit helps: single-layer backbone, only
  // paths [1] and [1,1]; gold reachable only by [1].
  typename CounterModel<float>::Spec spec;
  spec.num_layers = 2;
  spec.roles = {LayerRole::kNecessary, LayerRole::kNecessary};
  spec.seed = 19;
  CounterModel<float> model(spec);
  PromptFields f;
  f.flags = {0, 0};
  f.tag = vocab::kTagD1;
  f.offset = 4;
  TaskInstance inst;
  inst.id = "pi0-only";
  inst.stratum = "D1";
  inst.tokens = build_prompt(f, model.modulus());
  inst.kind = "numeric-exact";
  inst.gold = "4";

  SearchConfig scfg;
  scfg.simulations = 60;
  auto out = generate_dataset(model, {inst}, scfg);
  CHECK(out.dataset.empty());
  CHECK(out.stats[0].original == 1);
  CHECK(out.stats[0].sampled == 0);
}
