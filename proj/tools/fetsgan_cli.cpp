#include "fetsgan/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fc = fetsgan::cli;

int main(int argc, char** argv) {
  CLI::App app{"fetsgan: adversarial autoencoder for time-series generation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Overrides every seed (config seed, sampling seed)");

  fc::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a run config");
  train_cmd->add_option("--config", train.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Output directory (overrides output_dir)");
  train_cmd->add_flag("--quiet", train.quiet, "Suppress per-epoch progress");

  fc::GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Sample sequences from the prior");
  gen_cmd->add_option("--model", gen.model, "Checkpoint file or run directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of sequences")->default_val(100);
  gen_cmd->add_option("--length", gen.length, "Sequence length (default: training lengths)");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();

  fc::EncodeArgs enc;
  std::optional<std::string> enc_config, enc_csv;
  auto* enc_cmd = app.add_subcommand("encode", "Write latent codes of a dataset");
  enc_cmd->add_option("--model", enc.model, "Checkpoint file or run directory")->required();
  enc_cmd->add_option("--config", enc_config, "Run config whose data source is encoded (default: the model's)");
  enc_cmd->add_option("--csv", enc_csv, "CSV with the model's feature columns");
  enc_cmd->add_option("--id-column", enc.id_column, "Sequence id column of --csv");
  enc_cmd->add_option("--out", enc.out, "Output CSV")->required();

  fc::SampleNearArgs near;
  auto* near_cmd = app.add_subcommand("sample-near", "Sample around the encoding of an anchor sequence");
  near_cmd->add_option("--model", near.model, "Checkpoint file or run directory")->required();
  near_cmd->add_option("--anchor", near.anchor, "CSV holding exactly one sequence")->required()->check(CLI::ExistingFile);
  near_cmd->add_option("--id-column", near.id_column, "Sequence id column of the anchor CSV");
  near_cmd->add_option("--noise-std", near.noise_std, "Standard deviation of the latent perturbation")->default_val(0.1);
  near_cmd->add_option("--count", near.count, "Number of samples")->default_val(100);
  near_cmd->add_option("--out", near.out, "Output CSV; the latent code goes to <out>.latent.json")->required();

  fc::EvaluateArgs eval;
  std::optional<std::string> eval_config;
  std::string metrics = "dis,pred1,pred3,pred5";
  std::string protocol = "3x5";
  auto* eval_cmd = app.add_subcommand("evaluate", "Discriminative and predictive scores");
  eval_cmd->add_option("--model", eval.models, "Checkpoint file or run directory (repeatable)")->required();
  eval_cmd->add_option("--config", eval_config, "Run config whose data source is the real data (default: the model's)");
  eval_cmd->add_option("--metrics", metrics, "Comma-separated: dis, pred1, pred3, pred5, pred")->default_val(metrics);
  eval_cmd->add_option("--protocol", protocol, "MODELSxSAMPLES repetitions")->default_val(protocol);
  eval_cmd->add_option("--max-epochs", eval.max_epochs, "Epoch cap for classifiers and forecasters")->default_val(1000);
  eval_cmd->add_option("--patience", eval.patience, "Plateau cutoff in epochs")->default_val(50);
  eval_cmd->add_option("--out", eval.out, "Output report JSON")->required();
  eval_cmd->add_flag("--quiet", eval.quiet, "Suppress per-run progress");

  fc::DiagnoseArgs diag;
  std::optional<std::string> diag_config;
  auto* diag_cmd = app.add_subcommand("diagnose", "Distribution diagnostics of generated data");
  diag_cmd->add_option("--model", diag.model, "Checkpoint file or run directory")->required();
  diag_cmd->add_option("--config", diag_config, "Run config whose data source is the real data (default: the model's)");
  diag_cmd->add_option("--bins", diag.bins, "Histogram bins for amplitude and phase")->default_val(20);
  diag_cmd->add_option("--out", diag.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      train.seed = seed;
      return fc::cmd_train(train);
    }
    if (*gen_cmd) {
      gen.seed = seed.value_or(0);
      return fc::cmd_generate(gen);
    }
    if (*enc_cmd) {
      enc.seed = seed.value_or(0);
      if (enc_config) enc.config = *enc_config;
      if (enc_csv) enc.csv = *enc_csv;
      return fc::cmd_encode(enc);
    }
    if (*near_cmd) {
      near.seed = seed.value_or(0);
      return fc::cmd_sample_near(near);
    }
    if (*eval_cmd) {
      eval.seed = seed.value_or(0);
      if (eval_config) eval.config = *eval_config;
      eval.metrics.clear();
      std::stringstream ss(metrics);
      for (std::string m; std::getline(ss, m, ',');) {
        if (!m.empty()) eval.metrics.push_back(m);
      }
      const auto x = protocol.find('x');
      try {
        if (x == std::string::npos) throw std::invalid_argument("missing 'x'");
        eval.repeat_models = std::stoul(protocol.substr(0, x));
        eval.repeat_samples = std::stoul(protocol.substr(x + 1));
      } catch (const std::exception&) {
        throw fc::CommandError("--protocol must look like 3x5, got '" + protocol + "'");
      }
      return fc::cmd_evaluate(eval);
    }
    if (*diag_cmd) {
      diag.seed = seed.value_or(0);
      if (diag_config) diag.config = *diag_config;
      return fc::cmd_diagnose(diag);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
