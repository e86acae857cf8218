#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   magic       8 bytes  "MTRRCKPT"
//   version     u32      kCheckpointVersion
//   config      7 x u32  layers, heads, d_model, d_ffn, vocab_size, max_len, reserved(0)
//               f32      dropout
//   head flag   u8       1 if the reranker head is present
//   count       u32      number of tensors
//   per tensor: u32 name length, name bytes, u32 rows, u32 cols, rows*cols f32

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/nnmodel/params.hpp"

namespace mtrerank::nnmodel {

inline constexpr std::array<char, 8> kCheckpointMagic = {'M', 'T', 'R', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace detail {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw InvalidInput("cannot write checkpoint: " + path);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void finish() {
    out_.flush();
    if (!out_) throw InvalidInput("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw InvalidInput("cannot read checkpoint: " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw CorruptCheckpoint("checkpoint truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
};

}  // namespace detail

template <class T>
void save_checkpoint(const ModelParams<T>& params, const std::string& path) {
  detail::Writer w(path);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  const auto& c = params.config;
  for (int v : {c.layers, c.heads, c.d_model, c.d_ffn, c.vocab_size, c.max_len, 0}) w.u32(static_cast<std::uint32_t>(v));
  w.f32(static_cast<float>(c.dropout));
  w.u8(params.has_head() ? 1 : 0);
  const auto tensors = named_tensors(params);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t->rows()));
    w.u32(static_cast<std::uint32_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->size(); ++i) w.f32(static_cast<float>(t->data()[i]));
  }
  w.finish();
}

template <class T = float>
ModelParams<T> load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw CorruptCheckpoint("bad checkpoint magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version));

  ModelConfig c;
  c.layers = static_cast<int>(r.u32());
  c.heads = static_cast<int>(r.u32());
  c.d_model = static_cast<int>(r.u32());
  c.d_ffn = static_cast<int>(r.u32());
  c.vocab_size = static_cast<int>(r.u32());
  c.max_len = static_cast<int>(r.u32());
  (void)r.u32();
  c.dropout = static_cast<double>(r.f32());
  const std::uint8_t head = r.u8();
  if (head > 1) throw CorruptCheckpoint("bad head flag");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("invalid config in checkpoint: ") + e.what());
  }

  ModelParams<T> params = zero_params<T>(c, head == 1);
  auto tensors = named_tensors(params);
  if (r.u32() != tensors.size()) throw CorruptCheckpoint("tensor count mismatch");
  for (auto& [name, t] : tensors) {
    const std::uint32_t len = r.u32();
    if (len > 4096) throw CorruptCheckpoint("tensor name too long");
    std::string stored(len, '\0');
    r.bytes(stored.data(), len);
    if (stored != name) throw CorruptCheckpoint("unexpected tensor '" + stored + "', wanted '" + name + "'");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows != t->rows() || cols != t->cols()) throw CorruptCheckpoint("shape mismatch for " + name);
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = static_cast<T>(r.f32());
  }
  if (!r.at_end()) throw CorruptCheckpoint("trailing bytes in checkpoint");
  return params;
}

}  // namespace mtrerank::nnmodel
