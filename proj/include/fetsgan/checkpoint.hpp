// Binary checkpoint format (all integers little-endian):
//
//   "FETS"                       magic
//   u32 version                  currently 1
//   u32 tensor_count
//   per tensor:
//     u32 name_length, name bytes (UTF-8)
//     u32 rank, u32 dims[rank]
//     f32 values[prod(dims)]     IEEE-754
//   u32 json_length, json bytes  config, dims, normalizer, provenance
#pragma once

#include "fetsgan/networks.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace fetsgan {

inline constexpr char kCheckpointMagic[4] = {'F', 'E', 'T', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }
  std::string raw(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& field) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated while reading field '" + field + "'");
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> checkpoint_tensors(const ModelBundle<T>& m) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& p : m.all_params()) out.emplace_back(p.name, p.tensor);
  auto add_sn = [&](const std::string& prefix, const Linear<T>& l) {
    out.emplace_back(prefix + ".sn_u", Tensor<T>::from({l.sn.u.size()}, l.sn.u));
    out.emplace_back(prefix + ".sn_v", Tensor<T>::from({l.sn.v.size()}, l.sn.v));
  };
  add_sn("feature_disc.head", m.feature_disc.head);
  for (std::size_t l = 0; l < m.latent_disc.layers.size(); ++l) {
    add_sn("latent_disc.l" + std::to_string(l), m.latent_disc.layers[l]);
  }
  return out;
}

}  // namespace detail

inline nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"data_dim", d.data_dim},         {"latent_dim", d.latent_dim},
          {"noise_dim", d.noise_dim},       {"hidden", d.hidden},
          {"layers", d.layers},             {"latent_disc_width", d.latent_disc_width},
          {"latent_disc_layers", d.latent_disc_layers}, {"leaky_slope", d.leaky_slope}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  try {
    ModelDims d;
    d.data_dim = j.at("data_dim").get<std::size_t>();
    d.latent_dim = j.at("latent_dim").get<std::size_t>();
    d.noise_dim = j.at("noise_dim").get<std::size_t>();
    d.hidden = j.at("hidden").get<std::size_t>();
    d.layers = j.at("layers").get<std::size_t>();
    d.latent_disc_width = j.at("latent_disc_width").get<std::size_t>();
    d.latent_disc_layers = j.at("latent_disc_layers").get<std::size_t>();
    d.leaky_slope = j.at("leaky_slope").get<double>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint field 'dims' malformed: ") + e.what());
  }
}

/// Serializes the bundle; `meta` is stored alongside dims and normalizer.
template <typename T>
std::vector<char> checkpoint_bytes(const ModelBundle<T>& m, nlohmann::json meta) {
  detail::ByteWriter w;
  w.raw(std::string(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  const auto tensors = detail::checkpoint_tensors(m);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : t.values()) w.f32(static_cast<float>(v));
  }
  meta["dims"] = dims_to_json(m.dims);
  meta["normalizer"] = {{"min", m.normalizer.min}, {"max", m.normalizer.max}};
  const std::string json = meta.dump();
  w.u32(static_cast<std::uint32_t>(json.size()));
  w.raw(json);
  return w.bytes();
}

template <typename T>
void checkpoint_save(const ModelBundle<T>& m, const nlohmann::json& meta, const std::filesystem::path& path) {
  const auto bytes = checkpoint_bytes(m, meta);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
struct LoadedCheckpoint {
  ModelBundle<T> bundle;
  nlohmann::json meta;
};

template <typename T>
LoadedCheckpoint<T> checkpoint_from_bytes(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  if (r.raw(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError("checkpoint field 'magic' is not \"FETS\"");
  }
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint field 'version' is " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto count = r.u32("tensor_count");
  struct Raw {
    Shape shape;
    std::vector<T> values;
  };
  std::map<std::string, Raw> raw;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto nlen = r.u32("name_length");
    const auto name = r.raw(nlen, "name");
    const auto rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw CheckpointError("checkpoint field 'rank' invalid for tensor '" + name + "'");
    Raw t;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32("dims"));
      n *= t.shape.back();
    }
    t.values.resize(n);
    for (auto& v : t.values) v = static_cast<T>(r.f32("values of '" + name + "'"));
    raw.emplace(name, std::move(t));
  }
  const auto jlen = r.u32("json_length");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.raw(jlen, "json"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint field 'json' malformed: ") + e.what());
  }
  if (!r.at_end()) throw CheckpointError("checkpoint has trailing bytes after field 'json'");
  if (!meta.contains("dims")) throw CheckpointError("checkpoint field 'dims' missing");

  Rng scratch(0);
  LoadedCheckpoint<T> out{init_models<T>(dims_from_json(meta["dims"]), scratch), meta};
  auto& m = out.bundle;
  auto fill = [&](const std::string& name, std::span<T> dst, const Shape& shape) {
    auto it = raw.find(name);
    if (it == raw.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape != shape) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                            ", model expects " + shape_str(shape));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
    raw.erase(it);
  };
  for (auto& p : m.all_params()) fill(p.name, p.tensor.data(), p.tensor.shape());
  auto fill_sn = [&](const std::string& prefix, Linear<T>& l) {
    fill(prefix + ".sn_u", l.sn.u, {l.sn.u.size()});
    fill(prefix + ".sn_v", l.sn.v, {l.sn.v.size()});
  };
  fill_sn("feature_disc.head", m.feature_disc.head);
  for (std::size_t l = 0; l < m.latent_disc.layers.size(); ++l) fill_sn("latent_disc.l" + std::to_string(l), m.latent_disc.layers[l]);
  if (!raw.empty()) throw CheckpointError("checkpoint has unexpected tensor '" + raw.begin()->first + "'");
  try {
    m.normalizer.min = meta.at("normalizer").at("min").get<std::vector<double>>();
    m.normalizer.max = meta.at("normalizer").at("max").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint field 'normalizer' malformed: ") + e.what());
  }
  if (m.normalizer.dim() != m.dims.data_dim || m.normalizer.max.size() != m.dims.data_dim) {
    throw CheckpointError("checkpoint field 'normalizer' does not match data dimension");
  }
  meta.erase("dims");
  meta.erase("normalizer");
  out.meta = meta;
  return out;
}

template <typename T>
LoadedCheckpoint<T> checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes<T>(std::move(bytes));
}

}  // namespace fetsgan
