// Adversarial autoencoder training loop, checkpoint cadence, and the
// teacher-forced autoregressive baseline.
#pragma once

#include "fetsgan/checkpoint.hpp"
#include "fetsgan/config.hpp"
#include "fetsgan/networks.hpp"
#include "fetsgan/objectives.hpp"
#include "fetsgan/optim.hpp"
#include "fetsgan/recurrent_models.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

namespace fetsgan {

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& phase, LossBreakdown partial)
      : std::runtime_error("non-finite loss in phase '" + phase + "'"), partial_(std::move(partial)) {}
  const LossBreakdown& partial() const { return partial_; }

 private:
  LossBreakdown partial_;
};

template <typename T>
struct Optimizers {
  AdamState<T> encoder;
  AdamState<T> generator;
  AdamState<T> feature_disc;
  AdamState<T> latent_disc;
};

namespace detail {

template <typename T>
std::vector<Tensor<T>> detach_all(const std::vector<Tensor<T>>& xs) {
  std::vector<Tensor<T>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.detach());
  return out;
}

template <typename T>
void require_finite(const Tensor<T>& loss, const std::string& phase, const LossBreakdown& so_far) {
  if (!std::isfinite(static_cast<double>(loss.item()))) throw NonFiniteLoss(phase, so_far);
}

template <typename T>
void update(const ParamList<T>& params, AdamState<T>& state, double rate, double clip) {
  if (clip > 0.0) clip_grad_norm(params, clip);
  adam_step(params, state, rate);
}

template <typename T>
ParamList<T> concat_params(ParamList<T> a, const ParamList<T>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace detail

/// One optimization step on a normalized batch, in order: feature
/// discriminator, latent discriminator, then encoder and generator jointly.
/// Discriminator phases see detached encoder/generator outputs. The
/// reconstruction graph built up front is reused for the final phase, which is
/// equivalent to recomputing it since encoder and generator are unchanged by
/// then. `on_phase`, when set, is called after each phase's update.
template <typename T>
LossBreakdown train_step(ModelBundle<T>& m, Optimizers<T>& opt, const SeqBatch& batch, const TrainConfig& c,
                         Rng& rng, double rate, const std::function<void(const std::string&)>& on_phase = {}) {
  const bool use_fd = c.ablation != Ablation::no_feature_disc;
  const ReconMode mode = c.ablation == Ablation::no_fat ? ReconMode::full_sum : ReconMode::fat;
  const std::size_t B = batch.batch, steps = batch.max_len;
  const StepMask mask{batch.lengths};
  const auto x = batch_steps<T>(batch);

  LossBreakdown out;
  out.lambda = c.lambda;

  const auto noise_enc = draw_noise<T>(B, steps, m.dims.noise_dim, rng);
  const auto noise_gen = draw_noise<T>(B, steps, m.dims.noise_dim, rng);
  const Tensor<T> z_x = encode(m, x, mask, noise_enc);
  const auto x_bar = generate(m, z_x, noise_gen, steps);

  // Sequences decoded from prior draws, optionally shown to d_x as extra fakes.
  std::optional<std::vector<Tensor<T>>> x_prior;
  if (use_fd && c.prior_fakes) {
    const auto z_p = draw_prior<T>(B, m.dims.latent_dim, rng);
    x_prior = generate(m, z_p, draw_noise<T>(B, steps, m.dims.noise_dim, rng), steps);
  }

  const auto fd_params = m.feature_disc_params();
  const auto ld_params = m.latent_disc_params();
  const auto enc_params = m.encoder_params();
  const auto gen_params = m.generator_params();

  if (use_fd) {
    const auto fake = detail::detach_all(x_bar);
    for (int k = 0; k < c.disc_steps; ++k) {
      const auto y_real = discriminate_features(m, x, c.power_iters);
      const auto y_fake = discriminate_features(m, fake, c.power_iters);
      Tensor<T> l_dx = feature_disc_loss(y_real, mask, y_fake, mask);
      if (x_prior) {
        const auto y_prior = discriminate_features(m, detail::detach_all(*x_prior), c.power_iters);
        l_dx = scale(add(l_dx, feature_disc_loss(y_real, mask, y_prior, mask)), T(0.5));
      }
      detail::require_finite(l_dx, "feature_disc", out);
      zero_grad(fd_params);
      backward(l_dx);
      detail::update(fd_params, opt.feature_disc, rate, c.clip_norm);
      out.dx = static_cast<double>(l_dx.item());
    }
    if (on_phase) on_phase("feature_disc");
  }

  {
    const Tensor<T> post = z_x.detach();
    for (int k = 0; k < c.disc_steps; ++k) {
      const auto z_p = draw_prior<T>(B, m.dims.latent_dim, rng);
      const Tensor<T> l_dz = latent_disc_loss(discriminate_latent(m, z_p, c.power_iters),
                                              discriminate_latent(m, post, c.power_iters));
      detail::require_finite(l_dz, "latent_disc", out);
      zero_grad(ld_params);
      backward(l_dz);
      detail::update(ld_params, opt.latent_disc, rate, c.clip_norm);
      out.dz = static_cast<double>(l_dz.item());
    }
    if (on_phase) on_phase("latent_disc");
  }

  const auto recon = reconstruction_loss(x, x_bar, mask, static_cast<T>(c.epsilon), mode);
  const Tensor<T> l_ez = latent_enc_loss(discriminate_latent(m, z_x, c.power_iters));
  std::optional<Tensor<T>> l_fx;
  if (use_fd) {
    l_fx = feature_gen_loss(discriminate_features(m, x_bar, c.power_iters), mask);
    if (x_prior) {
      l_fx = scale(add(*l_fx, feature_gen_loss(discriminate_features(m, *x_prior, c.power_iters), mask)), T(0.5));
    }
  }
  const Tensor<T> total = composite_eg_loss(static_cast<T>(c.lambda), recon.loss, l_ez, l_fx);
  out.recon = static_cast<double>(recon.loss.item());
  out.ez = static_cast<double>(l_ez.item());
  if (l_fx) out.fx = static_cast<double>(l_fx->item());
  out.tau = recon.tau;
  detail::require_finite(total, "encoder_generator", out);

  const auto eg_params = detail::concat_params(enc_params, gen_params);
  zero_grad(eg_params);
  backward(total);
  if (c.clip_norm > 0.0) clip_grad_norm(eg_params, c.clip_norm);
  adam_step(enc_params, opt.encoder, rate);
  adam_step(gen_params, opt.generator, rate);
  // Discriminator grads picked up in this phase are discarded.
  zero_grad(fd_params);
  zero_grad(ld_params);
  if (on_phase) on_phase("encoder_generator");
  return out;
}

// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double recon = 0.0;
  std::optional<double> fx;
  std::optional<double> dx;
  double ez = 0.0;
  double dz = 0.0;
  double mean_tau = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  bool aborted = false;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::size_t parameter_count = 0;
};

inline void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write training log '" + path.string() + "'");
  out << "epoch,L_recon,L_fx,L_dx,L_ez,L_dz,mean_tau,lr\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << format_real(e.recon) << ',' << opt(e.fx) << ',' << opt(e.dx) << ','
        << format_real(e.ez) << ',' << format_real(e.dz) << ',' << format_real(e.mean_tau) << ','
        << format_real(e.lr) << '\n';
  }
}

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints are written here when set
  int checkpoint_every = 0;
  nlohmann::json meta = nlohmann::json::object();  // merged into every checkpoint
  std::function<void(const EpochLog&)> on_epoch;
  std::ostream* warnings = &std::cerr;
};

template <typename T>
struct TrainResult {
  ModelBundle<T> bundle;
  TrainLog log;
};

template <typename T>
nlohmann::json checkpoint_meta(const TrainConfig& c, const Dataset& d, int epochs_trained, const nlohmann::json& extra) {
  nlohmann::json meta = extra;
  if (!meta.contains("config")) meta["config"] = to_json(c);
  meta["feature_names"] = d.feature_names;
  std::vector<std::size_t> lengths;
  for (const auto& s : d.sequences) lengths.push_back(s.length);
  meta["train_lengths"] = lengths;
  meta["epochs_trained"] = epochs_trained;
  return meta;
}

/// Fits the normalizer on `raw`, then trains all four networks for
/// c.epochs epochs with the scheduled learning rate shared by every optimizer.
template <typename T>
TrainResult<T> train(const TrainConfig& c, const Dataset& raw, const TrainOptions& opts = {}) {
  validate(c);
  if (raw.empty()) throw ContractViolation("train: dataset is empty");
  if (raw.size() < c.batch_size && opts.warnings) {
    *opts.warnings << "warning: dataset of " << raw.size() << " sequences is smaller than batch size "
                   << c.batch_size << "; training on one smaller batch per epoch\n";
  }
  Rng rng(c.seed);
  TrainResult<T> result{init_models<T>(c, raw.dim, rng), {}};
  auto& m = result.bundle;
  m.normalizer = fit_normalizer(raw);
  const Dataset data = m.normalizer.apply(raw);
  result.log.parameter_count = count_parameters(m.dims);

  Optimizers<T> opt;
  const LrSchedule schedule{c.lr, c.epochs, c.decay_fraction, c.final_ratio};
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);
  auto save = [&](const std::filesystem::path& p, int epochs_done) {
    checkpoint_save(m, checkpoint_meta<T>(c, raw, epochs_done, opts.meta), p);
  };

  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochLog e;
    e.epoch = epoch;
    e.lr = lr_at(schedule, epoch);
    double recon = 0, fx = 0, dx = 0, ez = 0, dz = 0, tau = 0;
    std::size_t seen = 0;
    for (const auto& idx : epoch_batches(data.size(), c.batch_size, rng)) {
      const SeqBatch batch = make_batch(data, idx);
      LossBreakdown lb;
      try {
        lb = train_step(m, opt, batch, c, rng, e.lr);
      } catch (const NonFiniteLoss& err) {
        if (opts.warnings) {
          const auto& p = err.partial();
          *opts.warnings << "epoch " << epoch << " aborted: " << err.what() << "; last finite losses: recon="
                         << p.recon << " ez=" << p.ez << " dz=" << p.dz << " dx=" << p.dx.value_or(0.0) << '\n';
        }
        e.aborted = true;
        break;
      }
      const auto w = static_cast<double>(idx.size());
      recon += lb.recon * w;
      fx += lb.fx.value_or(0.0) * w;
      dx += lb.dx.value_or(0.0) * w;
      ez += lb.ez * w;
      dz += lb.dz * w;
      tau += lb.mean_tau() * w;
      seen += idx.size();
    }
    if (seen > 0) {
      const auto n = static_cast<double>(seen);
      e.recon = recon / n;
      e.ez = ez / n;
      e.dz = dz / n;
      e.mean_tau = tau / n;
      if (c.ablation != Ablation::no_feature_disc) {
        e.fx = fx / n;
        e.dx = dx / n;
      }
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(e);
    if (opts.on_epoch) opts.on_epoch(e);
    if (opts.out_dir && opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0 && epoch + 1 < c.epochs) {
      save(*opts.out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".fets"), epoch + 1);
    }
  }
  if (opts.out_dir) save(*opts.out_dir / "model.fets", c.epochs);
  return result;
}

// ---------------------------------------------------------------------------
// Autoregressive baseline trained only with teacher forcing.

template <typename T>
struct TeacherForcingBaseline {
  ForecastModel<T> model;
  Normalizer normalizer;
  FitHistory history;
};

/// Fits a next-step GRU forecaster on normalized ground-truth histories.
template <typename T>
TeacherForcingBaseline<T> train_baseline_tforcing(const TrainConfig& c, const Dataset& raw, FitConfig fc = {}) {
  if (raw.empty()) throw ContractViolation("train_baseline_tforcing: dataset is empty");
  Rng rng(c.seed);
  TeacherForcingBaseline<T> b;
  b.normalizer = fit_normalizer(raw);
  const Dataset data = b.normalizer.apply(raw);
  fc.hidden = c.hidden;
  fc.layers = c.layers;
  fc.lr = c.lr;
  fc.batch_size = c.batch_size;
  b.model = train_forecaster<T>(data, 1, fc, rng, &b.history);
  return b;
}

/// Feeds back the model's own predictions after a ground-truth prefix. The
/// recurrence is replayed from the start each step, so this is O(T^2).
template <typename T>
Sequence sample_free_running(const ForecastModel<T>& model, const Sequence& prefix, std::size_t prefix_len,
                             std::size_t length, std::size_t dim) {
  if (prefix_len == 0 || prefix_len > prefix.length || prefix_len > length) {
    throw ContractViolation("sample_free_running: invalid prefix length");
  }
  NoGradGuard guard;
  Sequence out{prefix_len, std::vector<double>(prefix.values.begin(),
                                              prefix.values.begin() + static_cast<std::ptrdiff_t>(prefix_len * dim))};
  std::vector<Tensor<T>> inputs;
  for (std::size_t t = 0; t < prefix_len; ++t) {
    std::vector<T> v(dim);
    for (std::size_t f = 0; f < dim; ++f) v[f] = static_cast<T>(out.values[t * dim + f]);
    inputs.push_back(Tensor<T>::from({1, dim}, v));
  }
  while (out.length < length) {
    const auto pred = model.forward(inputs).back();
    std::vector<T> v(dim);
    for (std::size_t f = 0; f < dim; ++f) {
      v[f] = std::clamp(pred[f], T(-1), T(1));
      out.values.push_back(static_cast<double>(v[f]));
    }
    ++out.length;
    inputs.push_back(Tensor<T>::from({1, dim}, v));
  }
  return out;
}

/// Draws `count` free-running samples, each seeded with a prefix taken from a
/// random training sequence. Output is normalized.
template <typename T>
Dataset sample_baseline(const TeacherForcingBaseline<T>& b, const Dataset& normalized, std::size_t count,
                        std::size_t prefix_len, Rng& rng) {
  Dataset out{normalized.dim, normalized.feature_names, {}, {}};
  std::uniform_int_distribution<std::size_t> pick(0, normalized.size() - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& src = normalized.sequences[pick(rng)];
    out.push(sample_free_running(b.model, src, prefix_len, src.length, normalized.dim), std::to_string(i));
  }
  return out;
}

}  // namespace fetsgan
