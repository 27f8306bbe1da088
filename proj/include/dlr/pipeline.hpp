#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "dlr/checkpoint.hpp"
#include "dlr/config.hpp"
#include "dlr/counter_model.hpp"
#include "dlr/eval.hpp"
#include "dlr/io.hpp"
#include "dlr/pretrain.hpp"
#include "dlr/routing.hpp"
#include "dlr/search.hpp"
#include "dlr/supervision.hpp"
#include "dlr/svg.hpp"
#include "dlr/tasks.hpp"
#include "dlr/transformer.hpp"

namespace dlr {

// ============================================================================
// Pipeline orchestration
// ============================================================================
//
// Every subcommand reads and writes only the documented files inside the
// working directory; `all` chains the full pipeline. All randomness flows
// from the root seed through named per-module streams, so identical seeds
// reproduce identical output trees byte for byte.

namespace files {
inline constexpr const char* kEffectiveConfig = "effective-config.txt";
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kEvalCorpus = "corpus_eval.jsonl";
inline constexpr const char* kBackbone = "backbone.ckpt";
inline constexpr const char* kDataset = "dataset.jsonl";
inline constexpr const char* kRouter = "router.ckpt";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kEvalReport = "eval.json";
inline constexpr const char* kOodReport = "eval_ood.json";
inline constexpr const char* kSweep = "sweep.csv";
inline constexpr const char* kSweepSvg = "sweep.svg";
inline constexpr const char* kAnalyzeDir = "analyze";
}  // namespace files

using BackboneVariant = std::variant<CounterModel<float>, TinyTransformer<float>>;

inline std::string path_in(const PipelineConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.workdir) / name).string();
}

inline void ensure_workdir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.workdir);
  std::filesystem::create_directories(std::filesystem::path(cfg.workdir) / files::kAnalyzeDir);
}

inline void echo_config(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  write_text_file(path_in(cfg, files::kEffectiveConfig), config_echo(cfg));
}

// ---- backbone construction ----

inline CounterModel<float> make_counter(const PipelineConfig& cfg) {
  typename CounterModel<float>::Spec spec;
  spec.num_layers = cfg.layers;
  spec.dim = cfg.dim;  // 0 = derived
  spec.modulus = cfg.modulus;
  spec.seed = derive_seed(cfg.root_seed, "backbone");
  return CounterModel<float>(spec);
}

inline TinyTransformer<float> make_transformer(const PipelineConfig& cfg) {
  TransformerSpec spec;
  spec.num_layers = cfg.layers;
  spec.dim = cfg.dim == 0 ? 64 : cfg.dim;
  spec.heads = cfg.heads;
  spec.ffn = cfg.ffn;
  spec.vocab = cfg.vocab;
  spec.max_seq = cfg.max_seq;
  spec.seed = derive_seed(cfg.root_seed, "backbone");
  return TinyTransformer<float>(spec);
}

inline BackboneVariant load_or_make_backbone(const PipelineConfig& cfg) {
  const std::string ckpt = path_in(cfg, files::kBackbone);
  if (std::filesystem::exists(ckpt)) {
    Checkpoint ck = read_checkpoint(ckpt);
    if (checkpoint_kind(ck) == kKindCounter) return counter_from_checkpoint<float>(ck);
    return transformer_from_checkpoint<float>(ck);
  }
  if (cfg.backbone_kind == "counter") return make_counter(cfg);
  throw InputError("transformer backbone requires a pretraining run first (missing " + ckpt +
                   ")");
}

// ---- corpus generation ----

inline std::vector<int> scaled_counts(double scale) {
  std::vector<int> counts;
  for (int base : stratum_base_counts()) {
    counts.push_back(std::max(1, static_cast<int>(base * scale + 0.5)));
  }
  return counts;
}

inline TaskCorpus gen_corpus(const PipelineConfig& cfg, const std::string& split) {
  const TaskGenConfig gen = cfg.task_gen_config();
  const double scale = split == "train" ? cfg.corpus_scale : cfg.eval_scale;
  const auto counts = scaled_counts(scale);
  TaskCorpus corpus;
  const auto& strata = all_strata();
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const std::uint64_t seed = derive_seed(cfg.root_seed, "tasks/" + split, s);
    auto part = gen_stratum(gen, strata[s], seed, counts[s]);
    corpus.insert(corpus.end(), part.begin(), part.end());
  }
  return corpus;
}

inline void run_tasks(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  write_corpus(path_in(cfg, files::kCorpus), gen_corpus(cfg, "train"));
  write_corpus(path_in(cfg, files::kEvalCorpus), gen_corpus(cfg, "eval"));
}

// ---- pretraining (transformer backbones) ----

inline int task_answer_token(const TaskInstance& inst) {
  if (inst.kind == "multichoice") return vocab::kLetterA + (inst.gold[0] - 'A');
  return vocab::kValueBase + std::stoi(inst.gold);
}

// Next-token supervision at the final prompt position only: the model must
// emit the answer token after reading the whole prompt.
inline SequenceCorpus task_sequence_corpus(const TaskCorpus& corpus) {
  SequenceCorpus out;
  out.reserve(corpus.size());
  for (const auto& inst : corpus) {
    SequenceExample ex;
    ex.tokens = inst.tokens;
    ex.targets.assign(ex.tokens.size(), -1);
    ex.targets.back() = task_answer_token(inst);
    out.push_back(std::move(ex));
  }
  return out;
}

inline PretrainMetrics run_pretrain(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  if (cfg.backbone_kind == "counter") {
    // Nothing to train; persist the constructed backbone for later stages.
    auto model = make_counter(cfg);
    write_checkpoint(path_in(cfg, files::kBackbone), to_checkpoint(model));
    return {};
  }
  auto model = make_transformer(cfg);
  PretrainConfig pc;
  pc.steps = cfg.pretrain_steps;
  pc.batch = cfg.pretrain_batch;
  pc.lr_max = cfg.pretrain_lr;
  pc.warmup = cfg.pretrain_warmup;
  pc.seed = derive_seed(cfg.root_seed, "pretrain");
  const TaskCorpus corpus = read_corpus(path_in(cfg, files::kCorpus));
  auto metrics = pretrain_backbone(model, task_sequence_corpus(corpus), pc);
  if (cfg.pretrain_target_loss > 0 && metrics.heldout_loss > cfg.pretrain_target_loss) {
    throw TrainingError("pretrain: held-out loss above configured threshold",
                        metrics.steps_run);
  }
  write_checkpoint(path_in(cfg, files::kBackbone), to_checkpoint(model));
  return metrics;
}

// ---- search (supervision dataset generation) ----

inline GenerateResult run_search(const PipelineConfig& cfg, std::string dataset_out = "") {
  ensure_workdir(cfg);
  if (dataset_out.empty()) dataset_out = path_in(cfg, files::kDataset);
  const TaskCorpus corpus = read_corpus(path_in(cfg, files::kCorpus));
  SearchConfig sc = cfg.search;
  sc.seed = derive_seed(cfg.root_seed, "search");
  auto backbone = load_or_make_backbone(cfg);
  GenerateResult result = std::visit(
      [&](const auto& model) { return generate_dataset(model, corpus, sc, cfg.workers); },
      backbone);
  write_dataset(dataset_out, result.dataset);
  const std::string stats_path =
      dataset_out.size() > 6 && dataset_out.substr(dataset_out.size() - 6) == ".jsonl"
          ? dataset_out.substr(0, dataset_out.size() - 6) + "_stats.csv"
          : dataset_out + "_stats.csv";
  write_text_file(stats_path, stats_to_csv(result.stats));
  return result;
}

// ---- router training ----

template <class Model>
RouterStack<float> fresh_stack(const PipelineConfig& cfg, const Model& model) {
  return RouterStack<float>(model.num_layers(), model.dim(), cfg.router_hidden, cfg.windows,
                            derive_seed(cfg.root_seed, "router"), cfg.router_input_mode());
}

struct TrainOutcome {
  TrainResult result;
  RouterStack<float> stack;
};

template <class Model>
TrainOutcome train_on_dataset(const PipelineConfig& cfg, const Model& model,
                              const SupervisionDataset& dataset) {
  TrainOutcome out;
  out.stack = fresh_stack(cfg, model);
  if (cfg.freq_bias_init) {
    const ClassCounts counts = class_counts(dataset);
    const double total =
        static_cast<double>(counts.n_skip + counts.n_execute + counts.n_repeat);
    out.stack.init_frequency_bias({counts.n_skip / total, counts.n_execute / total,
                                   counts.n_repeat / total});
  }
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.root_seed, "train");
  out.result = train_routers(model, out.stack, dataset, cfg.loss, tc);
  return out;
}

inline TrainOutcome run_train(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  const SupervisionDataset dataset = read_dataset(path_in(cfg, files::kDataset));
  auto backbone = load_or_make_backbone(cfg);
  TrainOutcome out = std::visit(
      [&](const auto& model) { return train_on_dataset(cfg, model, dataset); }, backbone);
  Checkpoint ck = std::visit([&](auto& model) { return to_checkpoint(model); }, backbone);
  append_routers(ck, out.stack);
  write_checkpoint(path_in(cfg, files::kRouter), ck);
  write_text_file(path_in(cfg, files::kTrainLog), train_log_to_csv(out.result));
  return out;
}

// ---- evaluation ----

inline RouterStack<float> load_routers(const PipelineConfig& cfg) {
  const Checkpoint ck = read_checkpoint(path_in(cfg, files::kRouter));
  return routers_from_checkpoint<float>(ck, static_cast<int>(ck.num_layers));
}

template <class Model>
std::vector<RoutingLabels> oracle_labels_for(const Model&, const TaskCorpus&) {
  return {};  // no oracle for learned backbones
}

template <>
inline std::vector<RoutingLabels> oracle_labels_for(const CounterModel<float>& model,
                                                    const TaskCorpus& corpus) {
  std::vector<RoutingLabels> labels;
  labels.reserve(corpus.size());
  for (const auto& inst : corpus) labels.push_back(model.oracle_labels(inst.tokens));
  return labels;
}

struct EvalOutcome {
  EvalReport routed;
  EvalReport baseline;  // default path
  double accuracy_delta = 0.0;
};

template <class Model>
EvalOutcome evaluate_with_baseline(const Model& model, const RouterStack<float>& stack,
                                   const TaskCorpus& corpus) {
  EvalOutcome out;
  auto oracle = oracle_labels_for(model, corpus);
  out.routed = evaluate(model, &stack, corpus, oracle.empty() ? nullptr : &oracle);
  const std::vector<RoutingLabels> def(
      corpus.size(), RoutingLabels(static_cast<std::size_t>(model.num_layers()), kExecute));
  out.baseline = evaluate(model, nullptr, corpus, nullptr, &def);
  out.accuracy_delta = out.routed.accuracy - out.baseline.accuracy;
  return out;
}

inline json eval_outcome_json(const EvalOutcome& out) {
  return json{{"routed", report_to_json(out.routed)},
              {"default_path", report_to_json(out.baseline)},
              {"accuracy_delta", out.accuracy_delta}};
}

inline EvalOutcome run_eval(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  const TaskCorpus corpus = read_corpus(path_in(cfg, files::kEvalCorpus));
  auto backbone = load_or_make_backbone(cfg);
  auto stack = load_routers(cfg);
  EvalOutcome out = std::visit(
      [&](const auto& model) { return evaluate_with_baseline(model, stack, corpus); },
      backbone);
  write_text_file(path_in(cfg, files::kEvalReport), eval_outcome_json(out).dump(2) + "\n");
  return out;
}

// Out-of-family evaluation: retrain the routers on one stratum family's
// examples only and evaluate against the other family.
inline json run_eval_ood(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  const SupervisionDataset dataset = read_dataset(path_in(cfg, files::kDataset));
  const TaskCorpus eval_corpus = read_corpus(path_in(cfg, files::kEvalCorpus));
  auto backbone = load_or_make_backbone(cfg);

  const char train_family = cfg.ood_train_family[0];
  SupervisionDataset in_family;
  for (const auto& ex : dataset) {
    if (ex.stratum[0] == train_family) in_family.push_back(ex);
  }
  if (in_family.empty()) throw InputError("ood: no dataset examples in the training family");
  TaskCorpus in_corpus, out_corpus;
  for (const auto& inst : eval_corpus) {
    (inst.stratum[0] == train_family ? in_corpus : out_corpus).push_back(inst);
  }
  if (out_corpus.empty()) throw InputError("ood: no eval examples outside the training family");

  json report = std::visit(
      [&](const auto& model) {
        auto trained = train_on_dataset(cfg, model, in_family);
        auto in_eval = evaluate_with_baseline(model, trained.stack, in_corpus);
        auto out_eval = evaluate_with_baseline(model, trained.stack, out_corpus);
        return json{{"train_family", cfg.ood_train_family},
                    {"in_family", eval_outcome_json(in_eval)},
                    {"out_of_family", eval_outcome_json(out_eval)},
                    {"ood_accuracy_delta", out_eval.accuracy_delta}};
      },
      backbone);
  write_text_file(path_in(cfg, files::kOodReport), report.dump(2) + "\n");
  return report;
}

// ---- analyses ----

inline void run_analyze(const PipelineConfig& cfg) {
  ensure_workdir(cfg);
  const TaskCorpus corpus = read_corpus(path_in(cfg, files::kEvalCorpus));
  auto backbone = load_or_make_backbone(cfg);
  auto stack = load_routers(cfg);

  std::vector<std::string> strata;
  strata.reserve(corpus.size());
  for (const auto& inst : corpus) strata.push_back(inst.stratum);
  const EvalReport report = std::visit(
      [&](const auto& model) { return evaluate(model, &stack, corpus); }, backbone);

  const auto analyze_dir = std::filesystem::path(cfg.workdir) / files::kAnalyzeDir;
  auto matrix = usage_heatmap(strata, report.decisions);
  write_text_file((analyze_dir / "usage_heatmap.csv").string(), usage_to_csv(matrix));
  write_text_file((analyze_dir / "usage_heatmap.svg").string(),
                  svg_heatmap("mean usage per layer (0=skip, 1=execute, 2=repeat)",
                              matrix.strata, matrix.usage, 0.0, 2.0));
  write_text_file((analyze_dir / "depth_groups.csv").string(),
                  depth_groups_to_csv(depth_group_stats(report.decisions)));

  const SupervisionDataset dataset = read_dataset(path_in(cfg, files::kDataset));
  write_text_file((analyze_dir / "label_distribution.csv").string(),
                  label_distribution_to_csv(label_distribution(dataset)));
}

// ---- control sweep ----

inline std::vector<SweepRow> run_sweep(const PipelineConfig& cfg,
                                       std::vector<double> grid = {}) {
  ensure_workdir(cfg);
  if (grid.empty()) grid = cfg.sweep_grid();
  const TaskCorpus corpus = read_corpus(path_in(cfg, files::kEvalCorpus));
  auto backbone = load_or_make_backbone(cfg);
  auto stack = load_routers(cfg);
  auto rows = std::visit(
      [&](const auto& model) { return control_sweep(model, stack, corpus, grid); }, backbone);
  write_text_file(path_in(cfg, files::kSweep), sweep_to_csv(rows));

  SvgSeries acc{"accuracy", "#2a7e3e", {}, {}};
  SvgSeries layers{"avg layers / 2L", "#274fa8", {}, {}};
  for (const auto& r : rows) {
    acc.x.push_back(r.p);
    acc.y.push_back(r.accuracy);
    layers.x.push_back(r.p);
    layers.y.push_back(r.avg_layers / (2.0 * cfg.layers));
  }
  write_text_file(path_in(cfg, files::kSweepSvg),
                  svg_line_chart("accuracy and layer usage vs control", {acc, layers}));
  return rows;
}

// ---- full chain ----

struct PipelineSummary {
  GenerateResult search;
  TrainResult train;
  EvalOutcome eval;
  std::vector<SweepRow> sweep;
};

inline PipelineSummary run_all(const PipelineConfig& cfg) {
  echo_config(cfg);
  PipelineSummary summary;
  run_tasks(cfg);
  if (cfg.backbone_kind == "transformer") run_pretrain(cfg);
  summary.search = run_search(cfg);
  summary.train = run_train(cfg).result;
  summary.eval = run_eval(cfg);
  run_analyze(cfg);
  summary.sweep = run_sweep(cfg);
  return summary;
}

}  // namespace dlr
