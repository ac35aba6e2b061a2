// Hyperparameters and run configuration with strict flat-JSON I/O.
#pragma once

#include "fetsgan/data.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace fetsgan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Ablation { none, no_fat, no_feature_disc };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_fat: return "no_fat";
    case Ablation::no_feature_disc: return "no_feature_disc";
  }
  return "none";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no_fat") return Ablation::no_fat;
  if (s == "no_feature_disc") return Ablation::no_feature_disc;
  throw ConfigError("config key 'ablation': unknown value \"" + s + "\" (expected none, no_fat, no_feature_disc)");
}

struct TrainConfig {
  double lambda = 10.0;
  double epsilon = 0.1;
  std::size_t latent_dim = 4;
  std::size_t noise_dim = 4;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  std::size_t latent_disc_width = 64;
  std::size_t latent_disc_layers = 3;
  double leaky_slope = 0.2;
  double lr = 1e-3;
  int epochs = 1000;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::none;
  double decay_fraction = 0.1;
  double final_ratio = 0.1;
  bool prior_fakes = false;  // also show d_x sequences decoded from prior draws
  double clip_norm = 0.0;    // 0 disables global-norm clipping
  int power_iters = 1;
  int disc_steps = 1;
};

inline void validate(const TrainConfig& c) {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError("config key '" + key + "': " + msg);
  };
  if (!(c.lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (!(c.epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (c.latent_dim == 0) fail("latent_dim", "must be positive");
  if (c.noise_dim == 0) fail("noise_dim", "must be positive");
  if (c.hidden == 0) fail("hidden", "must be positive");
  if (c.layers == 0) fail("layers", "must be positive");
  if (c.latent_disc_width == 0) fail("latent_disc_width", "must be positive");
  if (!(c.lr > 0.0)) fail("lr", "must be > 0");
  if (c.epochs < 1) fail("epochs", "must be >= 1");
  if (c.batch_size == 0) fail("batch_size", "must be >= 1");
  if (!(c.decay_fraction > 0.0 && c.decay_fraction <= 1.0)) fail("decay_fraction", "must be in (0, 1]");
  if (!(c.final_ratio > 0.0 && c.final_ratio <= 1.0)) fail("final_ratio", "must be in (0, 1]");
  if (!(c.clip_norm >= 0.0)) fail("clip_norm", "must be >= 0");
  if (c.power_iters < 1) fail("power_iters", "must be >= 1");
  if (c.disc_steps < 1) fail("disc_steps", "must be >= 1");
}

/// Where the training data comes from.
struct DataSource {
  enum class Kind { sines, csv } kind = Kind::sines;
  SinesSpec sines;
  std::string csv_path;
  CsvSchema schema;
  // 0 picks the default: 24 for a single long series, none with an id column.
  std::size_t window = 0;
  std::size_t stride = 1;
};

inline Dataset load_source(const DataSource& src) {
  if (src.kind == DataSource::Kind::sines) return synth_sines(src.sines);
  Dataset raw = load_csv(src.csv_path, src.schema);
  std::size_t window = src.window;
  if (window == 0 && !src.schema.id_column) window = 24;
  if (window == 0) return raw;
  return slice_windows(raw, window, src.stride);
}

struct RunConfig {
  TrainConfig train;
  DataSource data;
  std::string output_dir = "run";
  int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 = final only
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

template <typename V>
V json_get(const nlohmann::json& j, const std::string& key) {
  try {
    if constexpr (std::is_same_v<V, bool>) {
      if (!j.is_boolean()) throw ConfigError("expected a boolean");
    } else if constexpr (std::is_arithmetic_v<V>) {
      if (!j.is_number()) throw ConfigError("expected a number");
      if constexpr (std::is_unsigned_v<V>) {
        if (!j.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_integral_v<V>) {
        if (!j.is_number_integer()) throw ConfigError("expected an integer");
      }
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!j.is_string()) throw ConfigError("expected a string");
    }
    return j.get<V>();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"epsilon", c.epsilon},
          {"latent_dim", c.latent_dim},
          {"noise_dim", c.noise_dim},
          {"hidden", c.hidden},
          {"layers", c.layers},
          {"latent_disc_width", c.latent_disc_width},
          {"latent_disc_layers", c.latent_disc_layers},
          {"leaky_slope", c.leaky_slope},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"ablation", to_string(c.ablation)},
          {"decay_fraction", c.decay_fraction},
          {"final_ratio", c.final_ratio},
          {"prior_fakes", c.prior_fakes},
          {"clip_norm", c.clip_norm},
          {"power_iters", c.power_iters},
          {"disc_steps", c.disc_steps}};
}

inline nlohmann::json to_json(const RunConfig& r) {
  nlohmann::json j = to_json(r.train);
  const auto& d = r.data;
  j["dataset"] = d.kind == DataSource::Kind::sines ? "sines" : "csv";
  j["sines_count"] = d.sines.count;
  j["sines_length"] = d.sines.length;
  j["sines_amp_min"] = d.sines.amp_min;
  j["sines_amp_max"] = d.sines.amp_max;
  j["sines_freq_min"] = d.sines.freq_min;
  j["sines_freq_max"] = d.sines.freq_max;
  j["sines_phase_min"] = d.sines.phase_min;
  j["sines_phase_max"] = d.sines.phase_max;
  j["sines_seed"] = d.sines.seed;
  j["csv_path"] = d.csv_path;
  j["csv_id_column"] = d.schema.id_column.value_or("");
  j["csv_columns"] = d.schema.columns;
  j["window"] = d.window;
  j["stride"] = d.stride;
  j["output_dir"] = r.output_dir;
  j["checkpoint_every"] = r.checkpoint_every;
  return j;
}

/// Parses a flat JSON run config. Missing keys keep their defaults; unknown
/// keys and ill-typed values are errors naming the key.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig r;
  auto& c = r.train;
  auto& d = r.data;
  using detail::json_get;
  const std::map<std::string, std::function<void(const nlohmann::json&, const std::string&)>> setters = {
      {"lambda", [&](auto& v, auto& k) { c.lambda = json_get<double>(v, k); }},
      {"epsilon", [&](auto& v, auto& k) { c.epsilon = json_get<double>(v, k); }},
      {"latent_dim", [&](auto& v, auto& k) { c.latent_dim = json_get<std::size_t>(v, k); }},
      {"noise_dim", [&](auto& v, auto& k) { c.noise_dim = json_get<std::size_t>(v, k); }},
      {"hidden", [&](auto& v, auto& k) { c.hidden = json_get<std::size_t>(v, k); }},
      {"layers", [&](auto& v, auto& k) { c.layers = json_get<std::size_t>(v, k); }},
      {"latent_disc_width", [&](auto& v, auto& k) { c.latent_disc_width = json_get<std::size_t>(v, k); }},
      {"latent_disc_layers", [&](auto& v, auto& k) { c.latent_disc_layers = json_get<std::size_t>(v, k); }},
      {"leaky_slope", [&](auto& v, auto& k) { c.leaky_slope = json_get<double>(v, k); }},
      {"lr", [&](auto& v, auto& k) { c.lr = json_get<double>(v, k); }},
      {"epochs", [&](auto& v, auto& k) { c.epochs = json_get<int>(v, k); }},
      {"batch_size", [&](auto& v, auto& k) { c.batch_size = json_get<std::size_t>(v, k); }},
      {"seed", [&](auto& v, auto& k) { c.seed = json_get<std::uint64_t>(v, k); }},
      {"ablation", [&](auto& v, auto& k) { c.ablation = parse_ablation(json_get<std::string>(v, k)); }},
      {"decay_fraction", [&](auto& v, auto& k) { c.decay_fraction = json_get<double>(v, k); }},
      {"final_ratio", [&](auto& v, auto& k) { c.final_ratio = json_get<double>(v, k); }},
      {"prior_fakes", [&](auto& v, auto& k) { c.prior_fakes = json_get<bool>(v, k); }},
      {"clip_norm", [&](auto& v, auto& k) { c.clip_norm = json_get<double>(v, k); }},
      {"power_iters", [&](auto& v, auto& k) { c.power_iters = json_get<int>(v, k); }},
      {"disc_steps", [&](auto& v, auto& k) { c.disc_steps = json_get<int>(v, k); }},
      {"dataset",
       [&](auto& v, auto& k) {
         const auto s = json_get<std::string>(v, k);
         if (s == "sines") d.kind = DataSource::Kind::sines;
         else if (s == "csv") d.kind = DataSource::Kind::csv;
         else throw ConfigError("config key 'dataset': unknown value \"" + s + "\" (expected sines, csv)");
       }},
      {"sines_count", [&](auto& v, auto& k) { d.sines.count = json_get<std::size_t>(v, k); }},
      {"sines_length", [&](auto& v, auto& k) { d.sines.length = json_get<std::size_t>(v, k); }},
      {"sines_amp_min", [&](auto& v, auto& k) { d.sines.amp_min = json_get<double>(v, k); }},
      {"sines_amp_max", [&](auto& v, auto& k) { d.sines.amp_max = json_get<double>(v, k); }},
      {"sines_freq_min", [&](auto& v, auto& k) { d.sines.freq_min = json_get<double>(v, k); }},
      {"sines_freq_max", [&](auto& v, auto& k) { d.sines.freq_max = json_get<double>(v, k); }},
      {"sines_phase_min", [&](auto& v, auto& k) { d.sines.phase_min = json_get<double>(v, k); }},
      {"sines_phase_max", [&](auto& v, auto& k) { d.sines.phase_max = json_get<double>(v, k); }},
      {"sines_seed", [&](auto& v, auto& k) { d.sines.seed = json_get<std::uint64_t>(v, k); }},
      {"csv_path", [&](auto& v, auto& k) { d.csv_path = json_get<std::string>(v, k); }},
      {"csv_id_column",
       [&](auto& v, auto& k) {
         auto s = json_get<std::string>(v, k);
         d.schema.id_column = s.empty() ? std::nullopt : std::optional<std::string>(s);
       }},
      {"csv_columns",
       [&](auto& v, auto& k) {
         if (!v.is_array()) throw ConfigError("config key '" + k + "': expected an array of strings");
         d.schema.columns.clear();
         for (const auto& e : v) d.schema.columns.push_back(json_get<std::string>(e, k));
       }},
      {"window", [&](auto& v, auto& k) { d.window = json_get<std::size_t>(v, k); }},
      {"stride", [&](auto& v, auto& k) { d.stride = json_get<std::size_t>(v, k); }},
      {"output_dir", [&](auto& v, auto& k) { r.output_dir = json_get<std::string>(v, k); }},
      {"checkpoint_every", [&](auto& v, auto& k) { r.checkpoint_every = json_get<int>(v, k); }},
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto s = setters.find(it.key());
    if (s == setters.end()) throw ConfigError("unknown config key '" + it.key() + "'");
    s->second(it.value(), it.key());
  }
  validate(r.train);
  if (d.kind == DataSource::Kind::csv && d.csv_path.empty()) {
    throw ConfigError("config key 'csv_path': required when dataset is \"csv\"");
  }
  if (d.kind == DataSource::Kind::sines) validate(d.sines);
  if (d.stride == 0) throw ConfigError("config key 'stride': must be positive");
  if (r.checkpoint_every < 0) throw ConfigError("config key 'checkpoint_every': must be >= 0");
  return r;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  nlohmann::json filtered = nlohmann::json::object();
  const auto known = to_json(TrainConfig{});
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.contains(it.key())) filtered[it.key()] = it.value();
  }
  return run_config_from_json(filtered).train;
}

}  // namespace fetsgan
