// Command implementations behind the fetsgan executable. Each command takes a
// plain options struct, writes its files, and returns a process exit status.
#pragma once

#include "fetsgan/checkpoint.hpp"
#include "fetsgan/config.hpp"
#include "fetsgan/evaluation.hpp"
#include "fetsgan/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fetsgan::cli {

namespace fs = std::filesystem;

/// Error with a message meant for the user; commands map it to exit status 1.
class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CommandError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CommandError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CommandError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw CommandError("failed writing '" + path.string() + "'");
}

inline RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json_file(path)); }

/// A checkpoint file, or a run directory holding model.fets.
inline fs::path resolve_model(const fs::path& p) { return fs::is_directory(p) ? p / "model.fets" : p; }

struct LoadedModel {
  ModelBundle<float> bundle;
  nlohmann::json meta;
  fs::path path;

  bool untrained() const { return meta.value("epochs_trained", 0) == 0; }
  std::vector<std::string> feature_names() const {
    return meta.value("feature_names", std::vector<std::string>{});
  }
  std::vector<std::size_t> train_lengths() const {
    return meta.value("train_lengths", std::vector<std::size_t>{});
  }
  /// The run config stored at training time.
  RunConfig run_config() const {
    if (!meta.contains("config")) throw CommandError("checkpoint '" + path.string() + "' has no stored config");
    return run_config_from_json(meta["config"]);
  }
};

inline LoadedModel load_model(const fs::path& p) {
  const auto path = resolve_model(p);
  if (!fs::exists(path)) throw CommandError("checkpoint '" + path.string() + "' not found");
  auto loaded = checkpoint_load<float>(path);
  return {std::move(loaded.bundle), std::move(loaded.meta), path};
}

/// Dataset from an explicit config file if given, else the checkpoint's own.
inline Dataset load_eval_data(const LoadedModel& m, const std::optional<fs::path>& config) {
  const RunConfig rc = config ? load_run_config(*config) : m.run_config();
  Dataset d = load_source(rc.data);
  if (d.dim != m.bundle.dims.data_dim) {
    throw CommandError("dataset has " + std::to_string(d.dim) + " features but the model expects " +
                       std::to_string(m.bundle.dims.data_dim));
  }
  return d;
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  bool quiet = false;
};

inline int cmd_train(const TrainArgs& a, std::ostream& log = std::cout) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.out) rc.output_dir = a.out->string();
  const fs::path dir = rc.output_dir;
  fs::create_directories(dir);
  const Dataset data = load_source(rc.data);
  write_text(dir / "config.json", to_json(rc).dump(2) + "\n");

  TrainOptions opts;
  opts.out_dir = dir;
  opts.checkpoint_every = rc.checkpoint_every;
  opts.meta = {{"config", to_json(rc)}};
  opts.warnings = &std::cerr;
  if (!a.quiet) {
    opts.on_epoch = [&](const EpochLog& e) {
      log << "epoch " << e.epoch << " L_recon=" << e.recon << " L_ez=" << e.ez << " L_dz=" << e.dz;
      if (e.fx) log << " L_fx=" << *e.fx << " L_dx=" << *e.dx;
      log << " mean_tau=" << e.mean_tau << " lr=" << e.lr << " (" << e.seconds << "s)" << (e.aborted ? " aborted" : "")
          << '\n';
    };
  }
  const auto result = train<float>(rc.train, data, opts);
  write_train_log_csv(dir / "train_log.csv", result.log);
  log << "parameters: " << result.log.parameter_count << '\n';
  log << "wrote " << (dir / "model.fets").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  fs::path model;
  std::size_t count = 100;
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t length = 0;  // 0: cycle through the training lengths
};

inline int cmd_generate(const GenerateArgs& a) {
  if (a.count == 0) throw CommandError("--count must be positive");
  const auto m = load_model(a.model);
  std::vector<std::size_t> lengths;
  const auto train_lengths = m.train_lengths();
  for (std::size_t i = 0; i < a.count; ++i) {
    if (a.length > 0) {
      lengths.push_back(a.length);
    } else if (!train_lengths.empty()) {
      lengths.push_back(train_lengths[i % train_lengths.size()]);
    } else {
      throw CommandError("checkpoint stores no training lengths; pass --length");
    }
  }
  Rng rng(a.seed);
  Dataset gen = m.bundle.normalizer.invert(generate_dataset(m.bundle, lengths, rng));
  gen.feature_names = m.feature_names();
  if (gen.feature_names.size() != gen.dim) {
    gen.feature_names.clear();
    for (std::size_t f = 0; f < gen.dim; ++f) gen.feature_names.push_back("f" + std::to_string(f));
  }
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_csv(a.out, gen, "seq_id");
  return 0;
}

// ---------------------------------------------------------------------------
// encode

struct EncodeArgs {
  fs::path model;
  std::optional<fs::path> config;  // data source; defaults to the checkpoint's
  std::optional<fs::path> csv;     // or a CSV with the model's feature columns
  std::optional<std::string> id_column;
  fs::path out;
  std::uint64_t seed = 0;
};

inline int cmd_encode(const EncodeArgs& a) {
  const auto m = load_model(a.model);
  Dataset raw;
  if (a.csv) {
    raw = load_csv(*a.csv, CsvSchema{m.feature_names(), a.id_column});
  } else {
    raw = load_eval_data(m, a.config);
  }
  Rng rng(a.seed);
  const auto codes = encode_dataset(m.bundle, m.bundle.normalizer.apply(raw), rng);
  std::ostringstream os;
  os << "seq_id";
  for (std::size_t k = 0; k < m.bundle.dims.latent_dim; ++k) os << ",z" << k;
  os << '\n';
  for (std::size_t i = 0; i < codes.size(); ++i) {
    os << raw.ids[i];
    for (double v : codes[i]) os << ',' << format_real(v);
    os << '\n';
  }
  write_text(a.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// sample-near

struct SampleNearArgs {
  fs::path model;
  fs::path anchor;
  std::optional<std::string> id_column;
  double noise_std = 0.1;
  std::size_t count = 100;
  fs::path out;
  std::uint64_t seed = 0;
};

inline fs::path latent_sidecar(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".latent.json");
  return p;
}

inline int cmd_sample_near(const SampleNearArgs& a) {
  if (a.count == 0) throw CommandError("--count must be positive");
  const auto m = load_model(a.model);
  const auto anchor = load_csv(a.anchor, CsvSchema{m.feature_names(), a.id_column});
  if (anchor.size() != 1) {
    throw CommandError("anchor file '" + a.anchor.string() + "' holds " + std::to_string(anchor.size()) +
                       " sequences; expected exactly one");
  }
  Rng rng(a.seed);
  auto near = sample_near(m.bundle, anchor.sequences.front(), a.noise_std, a.count, rng, false, m.untrained());
  near.samples.feature_names = m.feature_names();
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_csv(a.out, near.samples, "seq_id");
  const nlohmann::json sidecar = {{"anchor_code", near.anchor_code},
                                  {"noise_std", a.noise_std},
                                  {"count", a.count},
                                  {"seed", a.seed},
                                  {"untrained", near.untrained}};
  write_text(latent_sidecar(a.out), sidecar.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::vector<fs::path> models;
  std::optional<fs::path> config;
  std::vector<std::string> metrics = metric_names();
  std::size_t repeat_models = 3;
  std::size_t repeat_samples = 5;
  fs::path out;
  std::uint64_t seed = 0;
  int max_epochs = 1000;
  int patience = 50;
  bool quiet = false;
};

/// Expands "pred" to every horizon and rejects unknown names.
inline std::vector<std::string> resolve_metrics(const std::vector<std::string>& requested) {
  std::vector<std::string> out;
  auto add = [&](const std::string& m) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  };
  for (const auto& m : requested) {
    if (m == "pred") {
      for (const auto& p : {"pred1", "pred3", "pred5"}) add(p);
    } else if (std::find(metric_names().begin(), metric_names().end(), m) != metric_names().end()) {
      add(m);
    } else {
      throw CommandError("unknown metric '" + m + "'; valid metrics: " + join(metric_names(), ", ") + ", pred");
    }
  }
  if (out.empty()) throw CommandError("no metrics requested; valid metrics: " + join(metric_names(), ", ") + ", pred");
  return out;
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& log = std::cout) {
  if (a.models.empty()) throw CommandError("at least one --model is required");
  ProtocolSpec spec;
  spec.metrics = resolve_metrics(a.metrics);
  spec.models = a.repeat_models;
  spec.samples = a.repeat_samples;
  spec.seed = a.seed;
  spec.fit.max_epochs = a.max_epochs;
  spec.fit.patience = a.patience;
  if (spec.models == 0 || spec.samples == 0) throw CommandError("--repeat values must be positive");
  std::vector<LoadedModel> loaded;
  for (const auto& p : a.models) loaded.push_back(load_model(p));
  const Dataset real = load_eval_data(loaded.front(), a.config);
  std::vector<const ModelBundle<float>*> bundles;
  for (const auto& m : loaded) {
    if (m.bundle.dims.data_dim != real.dim) throw CommandError("model '" + m.path.string() + "' feature count differs");
    bundles.push_back(&m.bundle);
  }
  std::function<void(const std::string&)> progress;
  if (!a.quiet) progress = [&](const std::string& s) { log << s << '\n'; };
  EvalReport report = run_protocol(bundles, real, spec, progress);
  std::vector<std::string> paths;
  for (const auto& m : loaded) paths.push_back(m.path.string());
  report.meta["checkpoints"] = paths;
  write_text(a.out, to_json(report).dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  fs::path model;
  std::optional<fs::path> config;
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t bins = 20;
};

inline int cmd_diagnose(const DiagnoseArgs& a) {
  const auto m = load_model(a.model);
  const Dataset real = load_eval_data(m, a.config);
  std::vector<std::size_t> lengths;
  for (const auto& s : real.sequences) lengths.push_back(s.length);
  Rng rng(a.seed);
  const Dataset synth = m.bundle.normalizer.invert(generate_dataset(m.bundle, lengths, rng));
  const auto rep = distribution_report(real, synth, a.bins);
  fs::create_directories(a.out);
  if (!rep.spectral) {
    std::ostringstream os;
    os << "set,seq_id,pc1,pc2\n";
    for (std::size_t i = 0; i < rep.pca.real.size(); ++i) {
      os << "real," << real.ids[i] << ',' << format_real(rep.pca.real[i][0]) << ',' << format_real(rep.pca.real[i][1]) << '\n';
    }
    for (std::size_t i = 0; i < rep.pca.synthetic.size(); ++i) {
      os << "synthetic," << i << ',' << format_real(rep.pca.synthetic[i][0]) << ','
         << format_real(rep.pca.synthetic[i][1]) << '\n';
    }
    write_text(a.out / "pca.csv", os.str());
    return 0;
  }
  std::ostringstream dc;
  dc << "set,seq_id,frequency,amplitude,phase\n";
  auto rows = [&](const std::string& set, const std::vector<DominantComponent>& v, const std::vector<std::string>& ids) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      dc << set << ',' << (i < ids.size() ? ids[i] : std::to_string(i)) << ',' << v[i].frequency << ','
         << format_real(v[i].amplitude) << ',' << format_real(v[i].phase) << '\n';
    }
  };
  rows("real", rep.real, real.ids);
  rows("synthetic", rep.synthetic, {});
  write_text(a.out / "dominant_components.csv", dc.str());

  std::ostringstream hs;
  hs << "quantity,bin,lower,upper,real,synthetic\n";
  auto hist = [&](const std::string& q, const Histogram& h) {
    for (std::size_t b = 0; b < h.real.size(); ++b) {
      hs << q << ',' << b << ',' << format_real(h.edges[b]) << ',' << format_real(h.edges[b + 1]) << ',' << h.real[b]
         << ',' << h.synthetic[b] << '\n';
    }
  };
  hist("frequency", rep.frequency);
  hist("amplitude", rep.amplitude);
  hist("phase", rep.phase);
  write_text(a.out / "histograms.csv", hs.str());

  const nlohmann::json ks = {{"ks_frequency", rep.ks_frequency},
                             {"ks_amplitude", rep.ks_amplitude},
                             {"ks_phase", rep.ks_phase},
                             {"real_count", rep.real.size()},
                             {"synthetic_count", rep.synthetic.size()}};
  write_text(a.out / "ks_summary.json", ks.dump(2) + "\n");
  return 0;
}

}  // namespace fetsgan::cli
