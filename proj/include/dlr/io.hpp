#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlr/errors.hpp"
#include "dlr/tasks.hpp"

namespace dlr {

using json = nlohmann::json;

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  os << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

// Fixed-precision float formatting shared by all CSV emitters so artifacts
// are byte-stable across runs.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---- task corpus (JSONL: {id, stratum, tokens, gold, kind}) ----

inline json to_json(const TaskInstance& inst) {
  return json{{"id", inst.id},
              {"stratum", inst.stratum},
              {"tokens", inst.tokens},
              {"gold", inst.gold},
              {"kind", inst.kind}};
}

inline TaskInstance task_from_json(const json& j) {
  TaskInstance inst;
  inst.id = j.at("id").get<std::string>();
  inst.stratum = j.at("stratum").get<std::string>();
  inst.tokens = j.at("tokens").get<std::vector<int>>();
  inst.gold = j.at("gold").get<std::string>();
  inst.kind = j.at("kind").get<std::string>();
  return inst;
}

inline void write_corpus(const std::string& path, const TaskCorpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  for (const auto& inst : corpus) os << to_json(inst).dump() << "\n";
}

inline TaskCorpus read_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open corpus: " + path);
  TaskCorpus corpus;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      corpus.push_back(task_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError("bad corpus line: " + std::string(e.what()));
    }
  }
  return corpus;
}

// ---- supervision dataset (JSONL: {id, stratum, tokens, labels, gold,
//      reward_default, reward_best, path_len}) ----

struct SupervisionExample {
  std::string id;
  std::string stratum;
  std::vector<int> tokens;
  std::vector<int> labels;
  std::string gold;
  std::string kind;
  double reward_default = 0.0;
  double reward_best = 0.0;
  int path_len = 0;
};

using SupervisionDataset = std::vector<SupervisionExample>;

inline json to_json(const SupervisionExample& ex) {
  return json{{"id", ex.id},
              {"stratum", ex.stratum},
              {"tokens", ex.tokens},
              {"labels", ex.labels},
              {"gold", ex.gold},
              {"kind", ex.kind},
              {"reward_default", ex.reward_default},
              {"reward_best", ex.reward_best},
              {"path_len", ex.path_len}};
}

inline SupervisionExample supervision_from_json(const json& j) {
  SupervisionExample ex;
  ex.id = j.at("id").get<std::string>();
  ex.stratum = j.at("stratum").get<std::string>();
  ex.tokens = j.at("tokens").get<std::vector<int>>();
  ex.labels = j.at("labels").get<std::vector<int>>();
  ex.gold = j.at("gold").get<std::string>();
  ex.kind = j.at("kind").get<std::string>();
  ex.reward_default = j.at("reward_default").get<double>();
  ex.reward_best = j.at("reward_best").get<double>();
  ex.path_len = j.at("path_len").get<int>();
  return ex;
}

inline void write_dataset(const std::string& path, const SupervisionDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  for (const auto& ex : ds) os << to_json(ex).dump() << "\n";
}

inline SupervisionDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open dataset: " + path);
  SupervisionDataset ds;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      ds.push_back(supervision_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError("bad dataset line: " + std::string(e.what()));
    }
  }
  return ds;
}

}  // namespace dlr
