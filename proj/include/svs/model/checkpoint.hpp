#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "svs/core/error.hpp"
#include "svs/core/tensor.hpp"
#include "svs/model/config.hpp"
#include "svs/model/weights.hpp"

// Binary container for named arrays plus model metadata. All fields are
// little-endian and fixed-width, and maps serialize in sorted key order, so
// save -> load -> save reproduces the file byte for byte.

namespace svs::model::ckio {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw CheckpointError("write failed");
}

inline void get_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) throw CheckpointError("truncated file");
}

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(os, &v, sizeof v);
}

template <class T>
T get(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v;
  get_bytes(is, &v, sizeof v);
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

inline std::string get_string(std::istream& is) {
  const uint32_t n = get<uint32_t>(is);
  if (n > (1u << 20)) throw CheckpointError("implausible string length");
  std::string s(n, '\0');
  get_bytes(is, s.data(), n);
  return s;
}

inline void put_tensor(std::ostream& os, const Tensor& t) {
  put<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) put<int32_t>(os, d);
  put_bytes(os, t.v.data(), t.v.size() * sizeof(Real));
}

inline Tensor get_tensor(std::istream& is) {
  const uint32_t rank = get<uint32_t>(is);
  if (rank > 8) throw CheckpointError("implausible tensor rank");
  std::vector<int> shape(rank);
  std::int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = get<int32_t>(is);
    if (shape[i] < 0 || shape[i] > (1 << 24)) throw CheckpointError("bad tensor dim");
    numel *= shape[i];
  }
  Tensor t(shape);
  get_bytes(is, t.v.data(), static_cast<size_t>(numel) * sizeof(Real));
  return t;
}

inline void put_tensor_map(std::ostream& os, const std::map<std::string, Tensor>& m) {
  put<uint64_t>(os, m.size());
  for (const auto& [name, t] : m) {
    put_string(os, name);
    put_tensor(os, t);
  }
}

inline std::map<std::string, Tensor> get_tensor_map(std::istream& is) {
  const uint64_t n = get<uint64_t>(is);
  if (n > (1u << 16)) throw CheckpointError("implausible entry count");
  std::map<std::string, Tensor> m;
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = get_string(is);
    m.emplace(std::move(name), get_tensor(is));
  }
  return m;
}

inline void put_config(std::ostream& os, const ModelConfig& c) {
  put<int32_t>(os, c.channels);
  put<int32_t>(os, c.embed_dim);
  put<int32_t>(os, c.n_mels);
  put<int32_t>(os, c.n_linear_bins);
  put<int32_t>(os, c.time_upsample);
  put<int32_t>(os, c.phoneme_vocab);
  put<int32_t>(os, c.pitch_vocab);
  put<int32_t>(os, c.n_conv_blocks);
  put<double>(os, c.adversarial_weight);
  put<uint8_t>(os, c.use_adversarial ? 1 : 0);
}

inline ModelConfig get_config(std::istream& is) {
  ModelConfig c;
  c.channels = get<int32_t>(is);
  c.embed_dim = get<int32_t>(is);
  c.n_mels = get<int32_t>(is);
  c.n_linear_bins = get<int32_t>(is);
  c.time_upsample = get<int32_t>(is);
  c.phoneme_vocab = get<int32_t>(is);
  c.pitch_vocab = get<int32_t>(is);
  c.n_conv_blocks = get<int32_t>(is);
  c.adversarial_weight = get<double>(is);
  c.use_adversarial = get<uint8_t>(is) != 0;
  return c;
}

inline void put_weights_body(std::ostream& os, const WeightSet& w) {
  put_config(os, w.config);
  put<double>(os, w.mel_norm.lo);
  put<double>(os, w.mel_norm.hi);
  put<double>(os, w.linear_norm.lo);
  put<double>(os, w.linear_norm.hi);
  put_tensor_map(os, w.params);
}

inline WeightSet get_weights_body(std::istream& is) {
  WeightSet w;
  w.config = get_config(is);
  w.config.validate();
  w.mel_norm.lo = get<double>(is);
  w.mel_norm.hi = get<double>(is);
  w.linear_norm.lo = get<double>(is);
  w.linear_norm.hi = get<double>(is);
  w.params = get_tensor_map(is);
  const auto expected = param_shapes(w.config);
  if (w.params.size() != expected.size())
    throw CheckpointError("parameter set does not match config");
  for (const auto& [name, shape] : expected) {
    auto it = w.params.find(name);
    if (it == w.params.end()) throw CheckpointError("missing parameter " + name);
    if (it->second.shape != shape) throw CheckpointError("shape mismatch for " + name);
  }
  return w;
}

}  // namespace svs::model::ckio

namespace svs::model {

inline constexpr char kWeightsMagic[8] = {'S', 'V', 'S', 'W', 'G', 'T', '0', '1'};

inline void save_weights(const std::string& path, const WeightSet& w) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  ckio::put_bytes(os, kWeightsMagic, sizeof kWeightsMagic);
  ckio::put_weights_body(os, w);
  os.flush();
  if (!os) throw CheckpointError("write failed: " + path);
}

inline WeightSet load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[8];
  ckio::get_bytes(is, magic, sizeof magic);
  if (std::memcmp(magic, kWeightsMagic, sizeof magic) != 0)
    throw CheckpointError("not a weights file: " + path);
  return ckio::get_weights_body(is);
}

}  // namespace svs::model
