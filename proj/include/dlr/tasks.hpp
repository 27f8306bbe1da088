#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "dlr/counter_model.hpp"
#include "dlr/rng.hpp"
#include "dlr/vocab.hpp"

namespace dlr {

// ============================================================================
// Synthetic stratified corpora
// ============================================================================
//
// Two multi-choice strata (A1, A2) and five numeric strata (D1..D5) with
// counter deficits 0..4. A deficit instance flags exactly one refine layer
// with the full deficit value, which also makes the redundant layers
// required, so its unique shortest correct path is the default path plus one
// repeat; deficit-free instances admit shortening by skipping the redundant
// layers. See counter_model.hpp for the arithmetic.

struct TaskInstance {
  std::string id;
  std::string stratum;       // A1, A2, D1..D5
  std::vector<int> tokens;
  std::string gold;          // letter A-D or decimal integer string
  std::string kind;          // "multichoice" | "numeric-exact"
};

using TaskCorpus = std::vector<TaskInstance>;

inline const std::vector<std::string>& all_strata() {
  static const std::vector<std::string> strata = {"A1", "A2", "D1", "D2", "D3", "D4", "D5"};
  return strata;
}

// Sampled-column proportions the corpus sizes default to.
inline const std::vector<int>& stratum_base_counts() {
  static const std::vector<int> counts = {400, 600, 200, 400, 600, 800, 1000};
  return counts;
}

inline bool stratum_is_multichoice(const std::string& s) { return s[0] == 'A'; }

inline int stratum_deficit(const std::string& s) {
  if (s == "A1" || s == "D1") return 0;
  if (s == "A2" || s == "D2") return 1;
  if (s == "D3") return 2;
  if (s == "D4") return 3;
  if (s == "D5") return 4;
  throw InputError("unknown stratum: " + s);
}

inline int stratum_tag_token(const std::string& s) {
  if (s == "A1") return vocab::kTagA1;
  if (s == "A2") return vocab::kTagA2;
  return vocab::kTagD1 + (s[1] - '1');
}

// With fixed flags the optimal policy is deterministic per stratum; with
// mixed flags each instance draws whether it carries a deficit (probability
// rising with the stratum) and which refine layer carries it, which makes
// the default-path solve rate fall strictly across D1..D5.
enum class FlagMode { kFixed, kMixed };

struct TaskGenConfig {
  int num_layers = 8;
  int modulus = 40;
  std::vector<LayerRole> roles;  // empty: default layout
  FlagMode mode = FlagMode::kFixed;
};

namespace detail {

inline std::vector<int> refine_layers(const std::vector<LayerRole>& roles) {
  std::vector<int> out;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == LayerRole::kRefine) out.push_back(static_cast<int>(i) + 1);
  }
  return out;
}

// Stratum -> which refine layer carries the deficit flag in fixed mode.
// Harder strata push the flag toward the late layers.
inline int fixed_flag_layer(const std::string& stratum, const std::vector<int>& refine) {
  const int k = static_cast<int>(refine.size());
  if (k == 0) throw InputError("counter roles contain no refine layer");
  if (stratum == "A2") return refine[0];
  if (stratum == "D2") return refine[std::min(1, k - 1)];
  if (stratum == "D3") return refine[std::max(0, k - 2)];
  return refine[k - 1];  // D4, D5
}

inline double mixed_deficit_probability(const std::string& stratum) {
  if (stratum == "A2" || stratum == "D2") return 0.2;
  if (stratum == "D3") return 0.3;
  if (stratum == "D4") return 0.4;
  if (stratum == "D5") return 0.5;
  return 0.0;
}

}  // namespace detail

inline TaskInstance gen_instance(const TaskGenConfig& cfg, const std::string& stratum,
                                 std::uint64_t seed, int index) {
  std::vector<LayerRole> roles =
      cfg.roles.empty() ? default_counter_roles(cfg.num_layers) : cfg.roles;
  const auto refine = detail::refine_layers(roles);
  Rng rng(derive_seed(seed, "tasks/" + stratum, static_cast<std::uint64_t>(index)));

  int deficit = stratum_deficit(stratum);
  int flag_layer = deficit > 0 ? detail::fixed_flag_layer(stratum, refine) : 0;
  if (cfg.mode == FlagMode::kMixed && deficit > 0) {
    if (!rng.bernoulli(detail::mixed_deficit_probability(stratum))) {
      deficit = 0;
      flag_layer = 0;
    } else {
      flag_layer = refine[static_cast<int>(rng.below(refine.size()))];
    }
  }

  PromptFields f;
  f.flags.assign(cfg.num_layers, 0);
  if (deficit > 0) f.flags[flag_layer - 1] = deficit;
  f.tag = stratum_tag_token(stratum);
  const int max_offset = cfg.modulus - 1 - 2 * 4;  // room for any deficit's target
  f.offset = rng.range(0, max_offset);
  f.multichoice = stratum_is_multichoice(stratum);

  const int target = f.offset + 2 * deficit;

  TaskInstance inst;
  inst.id = stratum + "-" + std::to_string(seed) + "-" + std::to_string(index);
  inst.stratum = stratum;
  if (f.multichoice) {
    inst.kind = "multichoice";
    const int gold_index = rng.range(0, 3);
    std::vector<int> options(4, -1);
    options[gold_index] = target;
    for (int i = 0; i < 4; ++i) {
      if (i == gold_index) continue;
      int v;
      do {
        v = rng.range(0, cfg.modulus - 1);
      } while (std::find(options.begin(), options.end(), v) != options.end());
      options[i] = v;
    }
    f.options = options;
    inst.gold = vocab::letter_name(gold_index);
  } else {
    inst.kind = "numeric-exact";
    inst.gold = std::to_string(target);
  }
  inst.tokens = build_prompt(f, cfg.modulus);
  return inst;
}

inline TaskCorpus gen_multichoice(const TaskGenConfig& cfg, const std::string& stratum,
                                  std::uint64_t seed, int count) {
  if (!stratum_is_multichoice(stratum)) throw InputError("gen_multichoice: stratum must be A1/A2");
  TaskCorpus out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(gen_instance(cfg, stratum, seed, i));
  return out;
}

inline TaskCorpus gen_numeric(const TaskGenConfig& cfg, const std::string& stratum,
                              std::uint64_t seed, int count) {
  if (stratum_is_multichoice(stratum)) throw InputError("gen_numeric: stratum must be D1..D5");
  TaskCorpus out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(gen_instance(cfg, stratum, seed, i));
  return out;
}

inline TaskCorpus gen_stratum(const TaskGenConfig& cfg, const std::string& stratum,
                              std::uint64_t seed, int count) {
  return stratum_is_multichoice(stratum) ? gen_multichoice(cfg, stratum, seed, count)
                                         : gen_numeric(cfg, stratum, seed, count);
}

// ============================================================================
// Answer extraction and reward
// ============================================================================

// Strict match of a standalone A-D, optionally prefixed by "Answer:".
// Letters embedded inside words never match.
inline std::optional<std::string> extract_letter(const std::string& text) {
  static const std::regex pattern(R"((?:Answer:\s*)?\b([A-D])\b)");
  std::smatch m;
  if (std::regex_search(text, m, pattern)) return m[1].str();
  return std::nullopt;
}

// Contents of the first boxed{...} group with balanced braces.
inline std::optional<std::string> extract_boxed(const std::string& text) {
  const std::size_t at = text.find("boxed{");
  if (at == std::string::npos) return std::nullopt;
  int depth = 1;
  std::string out;
  for (std::size_t i = at + 6; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return out;
    out.push_back(c);
  }
  return std::nullopt;  // unbalanced
}

// Trim whitespace and leading zeros; keep a single zero for all-zero input
// and normalize "-0" to "0".
inline std::string normalize_numeric(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  std::string t = s.substr(b, e - b + 1);
  bool negative = false;
  if (!t.empty() && (t[0] == '-' || t[0] == '+')) {
    negative = t[0] == '-';
    t.erase(0, 1);
  }
  std::size_t z = 0;
  while (z + 1 < t.size() && t[z] == '0' && std::isdigit(static_cast<unsigned char>(t[z + 1]))) {
    ++z;
  }
  t.erase(0, z);
  if (t == "0") negative = false;
  return (negative ? "-" : "") + t;
}

struct RewardSpec {
  std::string kind;  // "multichoice" | "numeric-exact"
  std::string gold;
};

// Binary at desk scale; the [0,1] interface is kept for partial credit.
inline double reward(const RewardSpec& spec, const std::string& predicted_text) {
  if (spec.kind == "multichoice") {
    auto letter = extract_letter(predicted_text);
    return letter && *letter == spec.gold ? 1.0 : 0.0;
  }
  if (spec.kind == "numeric-exact") {
    auto boxed = extract_boxed(predicted_text);
    const std::string candidate = boxed ? *boxed : predicted_text;
    return normalize_numeric(candidate) == normalize_numeric(spec.gold) ? 1.0 : 0.0;
  }
  throw InputError("unknown reward kind: " + spec.kind);
}

inline RewardSpec reward_spec(const TaskInstance& inst) { return {inst.kind, inst.gold}; }

}  // namespace dlr
