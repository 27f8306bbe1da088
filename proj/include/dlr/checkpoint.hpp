#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dlr/counter_model.hpp"
#include "dlr/errors.hpp"
#include "dlr/tensor.hpp"
#include "dlr/transformer.hpp"

namespace dlr {

// ============================================================================
// Checkpoint container
// ============================================================================
//
// Little-endian binary, documented in docs/formats.md:
//   8-byte magic "DRLLMCK1", u32 version, u32 L, u32 d, u32 heads, u32 ffn,
//   u32 vocab, then per-parameter blocks: u32 name length, name bytes,
//   u32 rank, u32 dims[rank], raw 32-bit floats.
//
// Data is always stored as 32-bit floats; saving a 64-bit test-mode model
// casts down and loading into 64-bit casts back up.

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'L', 'L', 'M', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t num_layers = 0;
  std::uint32_t dim = 0;
  std::uint32_t heads = 0;
  std::uint32_t ffn = 0;
  std::uint32_t vocab = 0;
  // Insertion order is preserved in the file; lookup goes through the index.
  std::vector<std::pair<std::string, Tensor<float>>> params;

  void add(const std::string& name, Tensor<float> t) { params.emplace_back(name, std::move(t)); }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    params.emplace_back(name, t.template cast<float>());
  }

  void add_scalar(const std::string& name, double v) {
    Tensor<float> t({1});
    t.data[0] = static_cast<float>(v);
    add(name, std::move(t));
  }

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : params) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  const Tensor<float>& require(const std::string& name) const {
    const Tensor<float>* t = find(name);
    if (!t) throw FormatError("checkpoint: missing parameter " + name);
    return *t;
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw FormatError("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 8);
  detail::write_u32(os, ck.version);
  detail::write_u32(os, ck.num_layers);
  detail::write_u32(os, ck.dim);
  detail::write_u32(os, ck.heads);
  detail::write_u32(os, ck.ffn);
  detail::write_u32(os, ck.vocab);
  for (const auto& [name, t] : ck.params) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!os) throw InputError("checkpoint write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path);
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  Checkpoint ck;
  ck.version = detail::read_u32(is);
  if (ck.version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(ck.version));
  }
  ck.num_layers = detail::read_u32(is);
  ck.dim = detail::read_u32(is);
  ck.heads = detail::read_u32(is);
  ck.ffn = detail::read_u32(is);
  ck.vocab = detail::read_u32(is);
  while (true) {
    std::uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 4);
    if (is.eof()) break;
    if (!is) throw FormatError("checkpoint: truncated file");
    if (name_len > 4096) throw FormatError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32(is);
    if (rank > 8) throw FormatError("checkpoint: implausible rank");
    std::vector<int> shape(rank);
    long long count = 1;
    for (auto& d : shape) {
      d = static_cast<int>(detail::read_u32(is));
      count *= d;
    }
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw FormatError("checkpoint: truncated parameter data");
    ck.params.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

// ============================================================================
// Model adapters
// ============================================================================

inline constexpr double kKindTransformer = 1.0;
inline constexpr double kKindCounter = 2.0;

template <typename T>
Checkpoint to_checkpoint(TinyTransformer<T>& model) {
  Checkpoint ck;
  const auto& s = model.spec();
  ck.num_layers = static_cast<std::uint32_t>(s.num_layers);
  ck.dim = static_cast<std::uint32_t>(s.dim);
  ck.heads = static_cast<std::uint32_t>(s.heads);
  ck.ffn = static_cast<std::uint32_t>(s.ffn);
  ck.vocab = static_cast<std::uint32_t>(s.vocab);
  ck.add_scalar("meta.kind", kKindTransformer);
  ck.add_scalar("meta.max_seq", s.max_seq);
  for (auto& p : model.named_params()) ck.add(p.name, *p.tensor);
  return ck;
}

template <typename T>
TinyTransformer<T> transformer_from_checkpoint(const Checkpoint& ck) {
  TransformerSpec s;
  s.num_layers = static_cast<int>(ck.num_layers);
  s.dim = static_cast<int>(ck.dim);
  s.heads = static_cast<int>(ck.heads);
  s.ffn = static_cast<int>(ck.ffn);
  s.vocab = static_cast<int>(ck.vocab);
  s.max_seq = static_cast<int>(ck.require("meta.max_seq").data[0]);
  TinyTransformer<T> model(s);
  for (auto& p : model.named_params()) {
    const Tensor<float>& stored = ck.require(p.name);
    if (stored.shape != p.tensor->shape) {
      throw FormatError("checkpoint: shape mismatch for " + p.name);
    }
    *p.tensor = stored.cast<T>();
  }
  return model;
}

template <typename T>
Checkpoint to_checkpoint(const CounterModel<T>& model) {
  Checkpoint ck;
  const auto& s = model.spec();
  ck.num_layers = static_cast<std::uint32_t>(s.num_layers);
  ck.dim = static_cast<std::uint32_t>(s.dim);
  ck.heads = 0;
  ck.ffn = 0;
  ck.vocab = static_cast<std::uint32_t>(model.vocab_size());
  ck.add_scalar("meta.kind", kKindCounter);
  ck.add_scalar("counter.modulus", s.modulus);
  ck.add_scalar("counter.seed_lo", static_cast<double>(s.seed & 0xffffffffull));
  ck.add_scalar("counter.seed_hi", static_cast<double>(s.seed >> 32));
  ck.add_scalar("counter.flag_noise", s.flag_noise);
  ck.add_scalar("counter.distractor_noise", s.distractor_noise);
  Tensor<float> roles({s.num_layers});
  for (int i = 0; i < s.num_layers; ++i) roles.data[i] = static_cast<float>(s.roles[i]);
  ck.add("counter.roles", std::move(roles));
  return ck;
}

template <typename T>
CounterModel<T> counter_from_checkpoint(const Checkpoint& ck) {
  typename CounterModel<T>::Spec s;
  s.num_layers = static_cast<int>(ck.num_layers);
  s.dim = static_cast<int>(ck.dim);
  s.modulus = static_cast<int>(ck.require("counter.modulus").data[0]);
  const std::uint64_t lo =
      static_cast<std::uint64_t>(ck.require("counter.seed_lo").data[0]);
  const std::uint64_t hi =
      static_cast<std::uint64_t>(ck.require("counter.seed_hi").data[0]);
  s.seed = (hi << 32) | lo;
  s.flag_noise = ck.require("counter.flag_noise").data[0];
  s.distractor_noise = ck.require("counter.distractor_noise").data[0];
  const Tensor<float>& roles = ck.require("counter.roles");
  for (float r : roles.data) s.roles.push_back(static_cast<LayerRole>(static_cast<int>(r)));
  return CounterModel<T>(s);
}

inline double checkpoint_kind(const Checkpoint& ck) {
  return ck.require("meta.kind").data[0];
}

}  // namespace dlr
