#pragma once

// Binary checkpoint format (all integers little-endian):
//
//   "HBMP"                      4-byte magic
//   u32 version                 currently 1
//   u32 n + n bytes             UTF-8 config block, one "key=value" per line
//   u32 count                   number of tensor records
//   count × {
//     u32 n + n bytes           tensor name
//     u32 rank, rank × u64      dimensions
//     numel × f32               row-major values
//   }

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hbmp/data.hpp"
#include "hbmp/model.hpp"
#include "hbmp/tensor.hpp"

namespace hbmp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'H', 'B', 'M', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.tensor;
    return nullptr;
  }
  const std::string& get(const std::string& key) const {
    auto it = config.find(key);
    if (it == config.end()) throw CheckpointFormatError("checkpoint lacks config key '" + key + "'");
    return it->second;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  void take(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw CheckpointTruncatedError(std::string("checkpoint truncated while reading ") + what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    take(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    take(&v, 8, what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    take(s.data(), n, what);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : ck.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw CheckpointError("config entry '" + k + "' cannot be stored as key=value");
    cfg += k + "=" + v + "\n";
  }
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  detail::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_u64(out, d);
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointFormatError("not a checkpoint: bad magic bytes");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  const auto cfg_len = r.u32("config length");
  const std::string cfg = r.str(cfg_len, "config block");
  for (const auto& line : detail::split(cfg, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointFormatError("malformed config line '" + line + "'");
    ck.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.u32("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const auto rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) throw CheckpointFormatError("tensor " + name + " has invalid rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.u64("tensor dims");
      if (dim == 0 || dim > (1ULL << 40)) throw CheckpointFormatError("tensor " + name + " has invalid dimension");
      shape.push_back(static_cast<std::size_t>(dim));
    }
    Tensor t = Tensor::zeros(shape);
    std::vector<float> buf(t.numel());
    r.take(buf.data(), buf.size() * 4, "tensor data");
    for (std::size_t i = 0; i < buf.size(); ++i) t[i] = buf[i];
    ck.tensors.push_back({std::move(name), std::move(t)});
  }
  if (!r.done()) throw CheckpointFormatError("trailing bytes after last tensor");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(std::move(bytes));
}

// Model <-> checkpoint.

inline void write_model_config(const ModelConfig& cfg, std::map<std::string, std::string>& out) {
  out["encoder.variant"] = std::string(variant_key(cfg.encoder.variant));
  out["encoder.vocab_size"] = std::to_string(cfg.encoder.vocab_size);
  out["encoder.embed_dim"] = std::to_string(cfg.encoder.embed_dim);
  out["encoder.hidden"] = std::to_string(cfg.encoder.hidden);
  out["encoder.layers"] = std::to_string(cfg.encoder.layers);
  out["head.mlp_width"] = std::to_string(cfg.mlp_width);
  out["head.classes"] = std::to_string(cfg.classes);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", cfg.dropout);
  out["head.dropout"] = buf;
}

inline ModelConfig read_model_config(const Checkpoint& ck) {
  auto num = [&](const char* key) { return static_cast<std::size_t>(std::stoull(ck.get(key))); };
  ModelConfig cfg;
  cfg.encoder.variant = parse_variant(ck.get("encoder.variant"));
  cfg.encoder.vocab_size = num("encoder.vocab_size");
  cfg.encoder.embed_dim = num("encoder.embed_dim");
  cfg.encoder.hidden = num("encoder.hidden");
  cfg.encoder.layers = num("encoder.layers");
  cfg.mlp_width = num("head.mlp_width");
  cfg.classes = num("head.classes");
  cfg.dropout = std::stod(ck.get("head.dropout"));
  return cfg;
}

inline Checkpoint make_checkpoint(const NliModel& model, const std::map<std::string, std::string>& extra = {}) {
  Checkpoint ck;
  ck.config = extra;
  write_model_config(model.config, ck.config);
  for (const auto& [name, t] : model.parameters()) ck.tensors.push_back({name, t});
  return ck;
}

/// Copies checkpoint tensors into `model`; every model parameter must be
/// present with an identical shape.
inline void load_parameters(NliModel& model, const Checkpoint& ck) {
  for (auto& [name, t] : model.parameters()) {
    const Tensor* src = ck.find(name);
    if (!src) throw CheckpointShapeError("checkpoint is missing tensor " + name);
    if (src->shape() != t.shape())
      throw CheckpointShapeError("tensor " + name + " has shape " + shape_str(src->shape()) +
                                 " in checkpoint but " + shape_str(t.shape()) + " in model");
    std::copy(src->data().begin(), src->data().end(), t.data().begin());
  }
}

inline NliModel model_from_checkpoint(const Checkpoint& ck) {
  Rng rng(0);
  NliModel model = NliModel::init(read_model_config(ck), rng);
  load_parameters(model, ck);
  return model;
}

}  // namespace hbmp
