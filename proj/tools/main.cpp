// Batch pipeline driver: corpus generation, backbone pretraining, search
// supervision, router training, evaluation, analyses and the control sweep.
// See README.md and docs/formats.md for file formats and examples.

#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dlr/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;

struct GlobalFlags {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
};

dlr::PipelineConfig effective_config(const GlobalFlags& flags) {
  dlr::PipelineConfig cfg;
  if (!flags.config_path.empty()) cfg = dlr::load_config(flags.config_path);
  if (flags.seed_set) cfg.root_seed = flags.seed;
  if (flags.workers > 0) cfg.workers = flags.workers;
  if (!flags.out.empty()) cfg.workdir = flags.out;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_p_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) grid.push_back(std::stod(item));
  }
  if (grid.empty()) throw dlr::ConfigError("--p-grid: no values parsed");
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dlr: dynamic layer routing pipeline"};
  app.require_subcommand(1);

  GlobalFlags flags;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_path, "configuration file (key = value sections)");
    cmd->add_option("--out", flags.out, "output directory (or file, where documented)");
    cmd->add_option("--seed", flags.seed, "root seed overriding the config")
        ->each([&](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--workers", flags.workers, "worker threads for corpus-level stages");
  };

  // tasks gen
  auto* tasks_cmd = app.add_subcommand("tasks", "generate synthetic task corpora");
  auto* gen_cmd = tasks_cmd->add_subcommand("gen", "generate instances for one stratum");
  std::string stratum = "D1";
  int count = 100;
  gen_cmd->add_option("--stratum", stratum, "stratum id (A1, A2, D1..D5)");
  gen_cmd->add_option("--count", count, "number of instances");
  add_common(gen_cmd);
  auto* gen_all = tasks_cmd->add_subcommand("all", "generate the train and eval corpora");
  add_common(gen_all);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "pretrain / persist the backbone");
  add_common(pretrain_cmd);
  auto* search_cmd = app.add_subcommand("search", "build the supervision dataset via tree search");
  add_common(search_cmd);
  auto* train_cmd = app.add_subcommand("train", "train the routers on the supervision dataset");
  add_common(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate routed inference");
  bool ood = false;
  eval_cmd->add_flag("--ood", ood, "train on one stratum family, evaluate on the other");
  add_common(eval_cmd);
  auto* analyze_cmd = app.add_subcommand("analyze", "routing-pattern analyses");
  add_common(analyze_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "control-parameter sweep");
  std::string p_grid_text;
  sweep_cmd->add_option("--p-grid", p_grid_text, "comma-separated control values in [-1,1]");
  add_common(sweep_cmd);
  auto* all_cmd = app.add_subcommand("all", "run the whole pipeline");
  add_common(all_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) {
      dlr::PipelineConfig cfg = effective_config(flags);
      auto corpus =
          dlr::gen_stratum(cfg.task_gen_config(), stratum, cfg.root_seed, count);
      const std::string out = flags.out.empty() ? stratum + ".jsonl" : flags.out;
      dlr::write_corpus(out, corpus);
      std::cout << "wrote " << corpus.size() << " instances to " << out << "\n";
      return kExitOk;
    }

    // For `search`, an --out ending in .jsonl names the dataset file itself
    // rather than the working directory.
    std::string dataset_out;
    if (search_cmd->parsed() && flags.out.size() > 6 &&
        flags.out.substr(flags.out.size() - 6) == ".jsonl") {
      dataset_out = flags.out;
      flags.out.clear();
    }

    dlr::PipelineConfig cfg = effective_config(flags);

    if (gen_all->parsed() || (tasks_cmd->parsed() && !gen_cmd->parsed())) {
      dlr::echo_config(cfg);
      dlr::run_tasks(cfg);
      std::cout << "corpora written under " << cfg.workdir << "\n";
    } else if (pretrain_cmd->parsed()) {
      dlr::echo_config(cfg);
      auto metrics = dlr::run_pretrain(cfg);
      std::cout << "backbone ready; held-out loss " << metrics.heldout_loss
                << ", token accuracy " << metrics.heldout_token_accuracy << "\n";
    } else if (search_cmd->parsed()) {
      dlr::echo_config(cfg);
      auto result = dlr::run_search(cfg, dataset_out);
      std::cout << "retained " << result.dataset.size() << " supervision examples\n";
      std::cout << dlr::stats_to_csv(result.stats);
    } else if (train_cmd->parsed()) {
      dlr::echo_config(cfg);
      auto outcome = dlr::run_train(cfg);
      if (!outcome.result.log.empty()) {
        const auto& last = outcome.result.log.back();
        std::cout << "final loss " << last.loss << ", val macro-F1 " << last.val_f1.macro
                  << "\n";
      }
    } else if (eval_cmd->parsed()) {
      dlr::echo_config(cfg);
      if (ood) {
        auto report = dlr::run_eval_ood(cfg);
        std::cout << "ood accuracy delta: " << report["ood_accuracy_delta"] << "\n";
      } else {
        auto outcome = dlr::run_eval(cfg);
        std::cout << "routed accuracy " << outcome.routed.accuracy << " (default "
                  << outcome.baseline.accuracy << "), avg executed layers "
                  << outcome.routed.avg_executed_layers << "\n";
      }
    } else if (analyze_cmd->parsed()) {
      dlr::run_analyze(cfg);
      std::cout << "analyses written under " << cfg.workdir << "/analyze\n";
    } else if (sweep_cmd->parsed()) {
      std::vector<double> grid;
      if (!p_grid_text.empty()) grid = parse_p_grid(p_grid_text);
      auto rows = dlr::run_sweep(cfg, grid);
      std::cout << "sweep rows: " << rows.size() << "\n";
    } else if (all_cmd->parsed()) {
      auto summary = dlr::run_all(cfg);
      std::cout << "pipeline complete: routed accuracy " << summary.eval.routed.accuracy
                << " (default " << summary.eval.baseline.accuracy << "), avg layers "
                << summary.eval.routed.avg_executed_layers << "\n";
    }
    return kExitOk;
  } catch (const dlr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dlr::TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const dlr::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
