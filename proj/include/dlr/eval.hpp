#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlr/io.hpp"
#include "dlr/routing.hpp"
#include "dlr/tasks.hpp"

namespace dlr {

// ============================================================================
// Metrics
// ============================================================================

struct F1Scores {
  std::array<double, 3> per_class = {0, 0, 0};  // skip, execute, repeat
  double macro = 0.0;
};

// Standard per-class F1 over label sequences. Precision or recall with a
// zero denominator counts as 0; a class absent from both predictions and
// gold is excluded from the macro average.
inline F1Scores per_class_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.size() != gold.size()) throw InputError("per_class_f1: length mismatch");
  std::array<long long, 3> tp = {0, 0, 0}, fp = {0, 0, 0}, fn = {0, 0, 0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gold[i]) {
      tp[pred[i]] += 1;
    } else {
      fp[pred[i]] += 1;
      fn[gold[i]] += 1;
    }
  }
  F1Scores out;
  int present = 0;
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    const long long support = tp[c] + fn[c], predicted = tp[c] + fp[c];
    const double precision = predicted > 0 ? static_cast<double>(tp[c]) / predicted : 0.0;
    const double recall = support > 0 ? static_cast<double>(tp[c]) / support : 0.0;
    out.per_class[c] =
        precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    if (support > 0 || predicted > 0) {
      ++present;
      sum += out.per_class[c];
    }
  }
  out.macro = present > 0 ? sum / present : 0.0;
  return out;
}

struct StratumReport {
  std::string stratum;
  int count = 0;
  double accuracy = 0.0;
  double avg_executed_layers = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double avg_executed_layers = 0.0;
  bool has_f1 = false;
  F1Scores f1;
  std::vector<StratumReport> per_stratum;
  // Raw per-example routing decisions, for downstream analyses.
  std::vector<RoutingLabels> decisions;
};

// Routed evaluation over a corpus. When oracle labels are supplied, per-class
// F1 against them is included. Forced labels make the evaluator follow the
// given decisions instead of the routers (used for baselines and analyses).
template <class Model>
EvalReport evaluate(const Model& model, const RouterStack<typename Model::Scalar>* stack,
                    const TaskCorpus& corpus,
                    const std::vector<RoutingLabels>* oracle_labels = nullptr,
                    const std::vector<RoutingLabels>* forced_labels = nullptr,
                    double control = std::numeric_limits<double>::quiet_NaN()) {
  if (corpus.empty()) throw InputError("evaluate: empty corpus");
  if (!stack && !forced_labels) throw InputError("evaluate: need a router stack or labels");
  EvalReport report;
  std::map<std::string, std::size_t> stratum_index;
  std::vector<int> flat_pred, flat_gold;

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const TaskInstance& inst = corpus[i];
    RoutingLabels decisions;
    std::string answer;
    if (forced_labels) {
      auto fwd = forward_with_labels(model, inst.tokens, (*forced_labels)[i]);
      decisions = (*forced_labels)[i];
      answer = fwd.answer;
    } else {
      auto routed = routed_forward(model, *stack, inst.tokens, control);
      decisions = routed.decisions;
      answer = routed.answer;
    }
    const double r = reward(reward_spec(inst), answer);
    const int executed = executed_layer_count(decisions);

    report.accuracy += r;
    report.avg_executed_layers += executed;
    if (!stratum_index.count(inst.stratum)) {
      stratum_index[inst.stratum] = report.per_stratum.size();
      report.per_stratum.push_back({inst.stratum, 0, 0.0, 0.0});
    }
    StratumReport& st = report.per_stratum[stratum_index[inst.stratum]];
    st.count += 1;
    st.accuracy += r;
    st.avg_executed_layers += executed;

    if (oracle_labels) {
      for (int c : decisions) flat_pred.push_back(c);
      for (int c : (*oracle_labels)[i]) flat_gold.push_back(c);
    }
    report.decisions.push_back(std::move(decisions));
  }

  report.accuracy /= corpus.size();
  report.avg_executed_layers /= corpus.size();
  for (auto& st : report.per_stratum) {
    st.accuracy /= st.count;
    st.avg_executed_layers /= st.count;
  }
  if (oracle_labels) {
    report.has_f1 = true;
    report.f1 = per_class_f1(flat_pred, flat_gold);
  }
  return report;
}

inline json report_to_json(const EvalReport& r) {
  json j{{"accuracy", r.accuracy}, {"avg_executed_layers", r.avg_executed_layers}};
  if (r.has_f1) {
    j["f1"] = {{"skip", r.f1.per_class[0]},
               {"execute", r.f1.per_class[1]},
               {"repeat", r.f1.per_class[2]},
               {"macro", r.f1.macro}};
  }
  json strata = json::array();
  for (const auto& st : r.per_stratum) {
    strata.push_back({{"stratum", st.stratum},
                      {"count", st.count},
                      {"accuracy", st.accuracy},
                      {"avg_executed_layers", st.avg_executed_layers}});
  }
  j["per_stratum"] = strata;
  return j;
}

// ============================================================================
// Routing-pattern analyses
// ============================================================================

struct UsageMatrix {
  std::vector<std::string> strata;
  int num_layers = 0;
  // mean usage in [0,2] per (stratum, layer)
  std::vector<std::vector<double>> usage;
};

inline UsageMatrix usage_heatmap(const std::vector<std::string>& strata_per_example,
                                 const std::vector<RoutingLabels>& decisions) {
  if (decisions.empty()) throw InputError("usage_heatmap: no decisions");
  UsageMatrix m;
  m.num_layers = static_cast<int>(decisions[0].size());
  std::map<std::string, std::size_t> index;
  std::vector<int> counts;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const std::string& s = strata_per_example[i];
    if (!index.count(s)) {
      index[s] = m.strata.size();
      m.strata.push_back(s);
      m.usage.emplace_back(m.num_layers, 0.0);
      counts.push_back(0);
    }
    const std::size_t k = index[s];
    counts[k] += 1;
    for (int l = 0; l < m.num_layers; ++l) m.usage[k][l] += decisions[i][l];
  }
  for (std::size_t k = 0; k < m.usage.size(); ++k) {
    for (auto& v : m.usage[k]) v /= counts[k];
  }
  return m;
}

inline std::string usage_to_csv(const UsageMatrix& m) {
  std::string csv = "stratum,layer,mean_usage\n";
  for (std::size_t k = 0; k < m.strata.size(); ++k) {
    for (int l = 0; l < m.num_layers; ++l) {
      csv += m.strata[k] + "," + std::to_string(l + 1) + "," + fmt(m.usage[k][l]) + "\n";
    }
  }
  return csv;
}

// Layers partitioned into early/middle/late terciles, remainder assigned to
// the later groups (sizes 2,3,3 for L=8).
inline std::array<std::pair<int, int>, 3> tercile_bounds(int num_layers) {
  const int base = num_layers / 3, rem = num_layers % 3;
  const int early = base, middle = base + (rem > 1 ? 1 : 0);
  std::array<std::pair<int, int>, 3> groups;
  groups[0] = {1, early};
  groups[1] = {early + 1, early + middle};
  groups[2] = {early + middle + 1, num_layers};
  return groups;
}

struct GroupSummary {
  std::string group;
  // min, lower quartile, median, upper quartile, max of per-example mean usage
  std::array<double, 5> quartiles = {0, 0, 0, 0, 0};
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double fr = pos - lo;
  return sorted[lo] * (1 - fr) + sorted[hi] * fr;
}

inline std::array<GroupSummary, 3> depth_group_stats(const std::vector<RoutingLabels>& decisions) {
  if (decisions.empty()) throw InputError("depth_group_stats: no decisions");
  const int L = static_cast<int>(decisions[0].size());
  if (L < 3) throw InputError("depth_group_stats: needs at least 3 layers");
  const auto bounds = tercile_bounds(L);
  static const char* names[] = {"early", "middle", "late"};
  std::array<GroupSummary, 3> out;
  for (int g = 0; g < 3; ++g) {
    std::vector<double> means;
    means.reserve(decisions.size());
    for (const auto& d : decisions) {
      double s = 0;
      for (int l = bounds[g].first; l <= bounds[g].second; ++l) s += d[l - 1];
      means.push_back(s / (bounds[g].second - bounds[g].first + 1));
    }
    std::sort(means.begin(), means.end());
    out[g].group = names[g];
    for (int q = 0; q < 5; ++q) out[g].quartiles[q] = quantile_sorted(means, q * 0.25);
  }
  return out;
}

inline std::string depth_groups_to_csv(const std::array<GroupSummary, 3>& groups) {
  std::string csv = "group,min,q1,median,q3,max\n";
  for (const auto& g : groups) {
    csv += g.group;
    for (double v : g.quartiles) csv += "," + fmt(v);
    csv += "\n";
  }
  return csv;
}

// ============================================================================
// Control sweep
// ============================================================================

struct SweepRow {
  double p = 0.0;
  double accuracy = 0.0;
  double avg_layers = 0.0;
  std::array<double, 3> decision_fractions = {0, 0, 0};
};

template <class Model>
std::vector<SweepRow> control_sweep(const Model& model,
                                    const RouterStack<typename Model::Scalar>& stack,
                                    const TaskCorpus& corpus, const std::vector<double>& p_grid) {
  if (corpus.empty()) throw InputError("control_sweep: empty corpus");
  std::vector<SweepRow> rows;
  for (double p : p_grid) {
    if (p < -1.0 || p > 1.0) throw InputError("control sweep: p outside [-1, 1]");
    SweepRow row;
    row.p = p;
    long long decision_count = 0;
    for (const auto& inst : corpus) {
      auto routed = routed_forward(model, stack, inst.tokens, p);
      row.accuracy += reward(reward_spec(inst), routed.answer);
      row.avg_layers += routed.executed_layers;
      for (int d : routed.decisions) {
        row.decision_fractions[d] += 1.0;
        ++decision_count;
      }
    }
    row.accuracy /= corpus.size();
    row.avg_layers /= corpus.size();
    for (auto& f : row.decision_fractions) f /= decision_count;
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "p,accuracy,avg_layers,frac_skip,frac_execute,frac_repeat\n";
  for (const auto& r : rows) {
    csv += fmt(r.p) + "," + fmt(r.accuracy) + "," + fmt(r.avg_layers);
    for (double f : r.decision_fractions) csv += "," + fmt(f);
    csv += "\n";
  }
  return csv;
}

// ============================================================================
// Label distribution (per-stratum skip/execute/repeat fractions)
// ============================================================================

struct LabelDistributionRow {
  std::string stratum;
  std::array<double, 3> fractions = {0, 0, 0};
};

inline std::vector<LabelDistributionRow> label_distribution(const SupervisionDataset& dataset) {
  if (dataset.empty()) throw InputError("label_distribution: empty dataset");
  std::map<std::string, std::size_t> index;
  std::vector<LabelDistributionRow> rows;
  std::vector<long long> totals;
  for (const auto& ex : dataset) {
    if (!index.count(ex.stratum)) {
      index[ex.stratum] = rows.size();
      rows.push_back({ex.stratum, {0, 0, 0}});
      totals.push_back(0);
    }
    auto k = index[ex.stratum];
    for (int y : ex.labels) {
      rows[k].fractions[y] += 1.0;
      totals[k] += 1;
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (auto& f : rows[k].fractions) f /= totals[k];
  }
  return rows;
}

inline std::string label_distribution_to_csv(const std::vector<LabelDistributionRow>& rows) {
  std::string csv = "stratum,skip_frac,execute_frac,repeat_frac\n";
  for (const auto& r : rows) {
    csv += r.stratum;
    for (double f : r.fractions) csv += "," + fmt(f);
    csv += "\n";
  }
  return csv;
}

}  // namespace dlr
