// Synthetic-data evaluation: dominant DFT components, two-sample KS
// statistics, discriminative and train-on-synthetic predictive scores,
// selective sampling near an encoding, and distribution diagnostics.
#pragma once

#include "fetsgan/networks.hpp"
#include "fetsgan/recurrent_models.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace fetsgan {

// ---------------------------------------------------------------------------
// Spectral summary

struct DominantComponent {
  std::size_t frequency = 0;  // DFT bin index
  double amplitude = 0.0;     // 2|X_k| / T
  double phase = 0.0;         // arg X_k in (-pi, pi]
};

/// X_k = sum_t x_t exp(-2 pi i k t / T) by the Goertzel recurrence.
inline std::complex<double> dft_bin(std::span<const double> x, std::size_t k) {
  const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(x.size());
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    const double s = v + coeff * s1 - s2;
    s2 = s1;
    s1 = s;
  }
  return {std::cos(w) * s1 - s2, std::sin(w) * s1};
}

/// Largest-magnitude bin in [1, floor(T/2)), ties to the lower index.
inline DominantComponent dominant_component(std::span<const double> x) {
  if (x.size() < 4) throw ContractViolation("dominant_component: sequence needs at least 4 steps");
  const std::size_t T = x.size();
  std::size_t best = 1;
  std::complex<double> best_x = dft_bin(x, 1);
  for (std::size_t k = 2; k < T / 2; ++k) {
    const auto v = dft_bin(x, k);
    if (std::abs(v) > std::abs(best_x)) {
      best = k;
      best_x = v;
    }
  }
  double phase = std::arg(best_x);
  if (phase <= -std::numbers::pi) phase = std::numbers::pi;
  return {best, 2.0 * std::abs(best_x) / static_cast<double>(T), phase};
}

inline DominantComponent dominant_component(const Sequence& s, std::size_t dim) {
  if (dim != 1) throw ContractViolation("dominant_component: expects a single-feature sequence, got " + std::to_string(dim));
  return dominant_component(std::span<const double>(s.values.data(), s.length));
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ContractViolation("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges; last bin closed
  std::vector<std::size_t> real;
  std::vector<std::size_t> synthetic;
};

inline std::vector<std::size_t> bin_counts(const std::vector<double>& v, const std::vector<double>& edges) {
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  for (double x : v) {
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    std::size_t b = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    counts[std::min(b, counts.size() - 1)]++;
  }
  return counts;
}

inline Histogram make_histogram(const std::vector<double>& real, const std::vector<double>& synth, double lo, double hi,
                                std::size_t bins) {
  Histogram h;
  if (!(hi > lo)) hi = lo + 1.0;
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  h.real = bin_counts(real, h.edges);
  h.synthetic = bin_counts(synth, h.edges);
  return h;
}

// ---------------------------------------------------------------------------
// PCA projection

struct Projection2D {
  std::vector<std::array<double, 2>> real;
  std::vector<std::array<double, 2>> synthetic;
};

inline Eigen::MatrixXd flatten(const Dataset& d, std::size_t length) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(length * d.dim));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& s = d.sequences[i];
    for (std::size_t j = 0; j < std::min(s.values.size(), length * d.dim); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.values[j];
    }
  }
  return out;
}

/// Two leading principal components of the flattened (zero-padded) real
/// sequences, applied to both sets. Each axis is signed so its largest
/// loading is positive.
inline Projection2D pca_project(const Dataset& real, const Dataset& synth) {
  const std::size_t L = std::max(real.max_length(), synth.max_length());
  const Eigen::MatrixXd xr = flatten(real, L), xs = flatten(synth, L);
  const Eigen::RowVectorXd mu = xr.colwise().mean();
  const Eigen::MatrixXd centered = xr.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(xr.rows()) - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index n = cov.rows();
  Eigen::MatrixXd axes(n, 2);
  for (int a = 0; a < 2; ++a) {
    Eigen::VectorXd v = n > a ? Eigen::VectorXd(eig.eigenvectors().col(n - 1 - a)) : Eigen::VectorXd::Zero(n);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(a) = v;
  }
  auto project = [&](const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd p = (x.rowwise() - mu) * axes;
    std::vector<std::array<double, 2>> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = {p(i, 0), p(i, 1)};
    return out;
  };
  return {project(xr), project(xs)};
}

// ---------------------------------------------------------------------------
// Distribution report

struct DistributionReport {
  bool spectral = false;  // single-feature data: DFT summaries instead of PCA
  std::vector<DominantComponent> real;
  std::vector<DominantComponent> synthetic;
  Histogram frequency, amplitude, phase;
  double ks_frequency = 0.0, ks_amplitude = 0.0, ks_phase = 0.0;
  Projection2D pca;
};

inline std::vector<DominantComponent> dominant_components(const Dataset& d) {
  std::vector<DominantComponent> out;
  for (const auto& s : d.sequences) out.push_back(dominant_component(s, d.dim));
  return out;
}

inline DistributionReport distribution_report(const Dataset& real, const Dataset& synth, std::size_t bins = 20) {
  if (real.dim != synth.dim) throw ShapeError("distribution_report: feature dimensions differ");
  DistributionReport r;
  if (real.dim != 1) {
    r.pca = pca_project(real, synth);
    return r;
  }
  r.spectral = true;
  r.real = dominant_components(real);
  r.synthetic = dominant_components(synth);
  auto field = [](const std::vector<DominantComponent>& v, auto get) {
    std::vector<double> out;
    for (const auto& c : v) out.push_back(get(c));
    return out;
  };
  const auto fr = field(r.real, [](auto& c) { return static_cast<double>(c.frequency); });
  const auto fs = field(r.synthetic, [](auto& c) { return static_cast<double>(c.frequency); });
  const auto ar = field(r.real, [](auto& c) { return c.amplitude; });
  const auto as = field(r.synthetic, [](auto& c) { return c.amplitude; });
  const auto pr = field(r.real, [](auto& c) { return c.phase; });
  const auto ps = field(r.synthetic, [](auto& c) { return c.phase; });
  r.ks_frequency = ks_statistic(fr, fs);
  r.ks_amplitude = ks_statistic(ar, as);
  r.ks_phase = ks_statistic(pr, ps);
  const std::size_t T = std::max(real.max_length(), synth.max_length());
  const std::size_t top = std::max<std::size_t>(2, T / 2);
  r.frequency = make_histogram(fr, fs, 0.5, static_cast<double>(top) - 0.5, top - 1);
  double amax = 0.0;
  for (double a : ar) amax = std::max(amax, a);
  for (double a : as) amax = std::max(amax, a);
  r.amplitude = make_histogram(ar, as, 0.0, amax, bins);
  r.phase = make_histogram(pr, ps, -std::numbers::pi, std::numbers::pi, bins);
  return r;
}

// ---------------------------------------------------------------------------
// Generation helpers

/// Prior samples decoded to normalized sequences of the given lengths.
template <typename T>
Dataset generate_dataset(const ModelBundle<T>& m, const std::vector<std::size_t>& lengths, Rng& rng,
                         std::size_t batch_size = 256) {
  NoGradGuard guard;
  Dataset out;
  out.dim = m.dims.data_dim;
  for (std::size_t start = 0; start < lengths.size(); start += batch_size) {
    const std::size_t B = std::min(batch_size, lengths.size() - start);
    std::size_t steps = 0;
    for (std::size_t i = 0; i < B; ++i) steps = std::max(steps, lengths[start + i]);
    const auto z = draw_prior<T>(B, m.dims.latent_dim, rng);
    const auto xs = generate(m, z, draw_noise<T>(B, steps, m.dims.noise_dim, rng), steps);
    for (std::size_t i = 0; i < B; ++i) {
      Sequence s{lengths[start + i], {}};
      for (std::size_t t = 0; t < s.length; ++t) {
        for (std::size_t f = 0; f < out.dim; ++f) s.values.push_back(static_cast<double>(xs[t].at(i, f)));
      }
      out.push(std::move(s), std::to_string(start + i));
    }
  }
  return out;
}

/// Latent codes (rows) of normalized sequences under fresh encoder noise.
template <typename T>
std::vector<std::vector<double>> encode_dataset(const ModelBundle<T>& m, const Dataset& normalized, Rng& rng,
                                                std::size_t batch_size = 256) {
  NoGradGuard guard;
  std::vector<std::vector<double>> codes;
  for (std::size_t start = 0; start < normalized.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(normalized.size(), start + batch_size); ++i) idx.push_back(i);
    const SeqBatch b = make_batch(normalized, idx);
    const auto z = encode(m, batch_steps<T>(b), StepMask{b.lengths}, draw_noise<T>(b.batch, b.max_len, m.dims.noise_dim, rng));
    for (std::size_t r = 0; r < b.batch; ++r) {
      std::vector<double> row;
      for (std::size_t k = 0; k < m.dims.latent_dim; ++k) row.push_back(static_cast<double>(z.at(r, k)));
      codes.push_back(std::move(row));
    }
  }
  return codes;
}

/// Mean over sequences of the summed per-step reconstruction error of
/// g(e(x)), the quantity the full-sum objective minimizes.
template <typename T>
double reconstruction_error(const ModelBundle<T>& m, const Dataset& normalized, Rng& rng, std::size_t batch_size = 256) {
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t start = 0; start < normalized.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(normalized.size(), start + batch_size); ++i) idx.push_back(i);
    const SeqBatch b = make_batch(normalized, idx);
    const auto x = batch_steps<T>(b);
    const StepMask mask{b.lengths};
    const auto z = encode(m, x, mask, draw_noise<T>(b.batch, b.max_len, m.dims.noise_dim, rng));
    const auto xbar = generate(m, z, draw_noise<T>(b.batch, b.max_len, m.dims.noise_dim, rng), b.max_len);
    const auto r = reconstruction_loss(x, xbar, mask, T(0.1), ReconMode::full_sum);
    total += static_cast<double>(r.loss.item()) * static_cast<double>(b.batch);
  }
  return total / static_cast<double>(normalized.size());
}

template <typename T>
struct NearSamples {
  Dataset samples;  // denormalized
  std::vector<double> anchor_code;
  bool untrained = false;
};

/// Encodes a raw-scale anchor, perturbs its code with N(0, noise_std^2),
/// clamps to [-1, 1] and decodes each perturbation. With shared_noise every
/// sample reuses one generator noise sequence.
template <typename T>
NearSamples<T> sample_near(const ModelBundle<T>& m, const Sequence& anchor, double noise_std, std::size_t count, Rng& rng,
                           bool shared_noise = false, bool untrained = false) {
  if (anchor.length == 0) throw ContractViolation("sample_near: empty anchor");
  if (noise_std < 0.0) throw ContractViolation("sample_near: noise_std must be >= 0");
  NoGradGuard guard;
  Dataset a{m.dims.data_dim, {}, {}, {}};
  a.push(anchor, "anchor");
  a = m.normalizer.apply(a);
  const SeqBatch b = make_batch(a, {0});
  const std::size_t steps = anchor.length, dz = m.dims.latent_dim;
  const auto code = encode(m, batch_steps<T>(b), StepMask{b.lengths}, draw_noise<T>(1, steps, m.dims.noise_dim, rng));
  NearSamples<T> out;
  out.untrained = untrained;
  for (std::size_t k = 0; k < dz; ++k) out.anchor_code.push_back(static_cast<double>(code[k]));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<T> zs(count * dz);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < dz; ++k) {
      zs[i * dz + k] = static_cast<T>(std::clamp(out.anchor_code[k] + noise_std * gauss(rng), -1.0, 1.0));
    }
  }
  std::vector<Tensor<T>> noise;
  if (shared_noise) {
    for (const auto& step : draw_noise<T>(1, steps, m.dims.noise_dim, rng)) {
      std::vector<T> rep;
      for (std::size_t i = 0; i < count; ++i) rep.insert(rep.end(), step.values().begin(), step.values().end());
      noise.push_back(Tensor<T>::from({count, m.dims.noise_dim}, rep));
    }
  } else {
    noise = draw_noise<T>(count, steps, m.dims.noise_dim, rng);
  }
  const auto xs = generate(m, Tensor<T>::from({count, dz}, zs), noise, steps);
  Dataset gen{m.dims.data_dim, {}, {}, {}};
  for (std::size_t i = 0; i < count; ++i) {
    Sequence s{steps, {}};
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t f = 0; f < gen.dim; ++f) s.values.push_back(static_cast<double>(xs[t].at(i, f)));
    }
    gen.push(std::move(s), std::to_string(i));
  }
  out.samples = m.normalizer.invert(gen);
  return out;
}

// ---------------------------------------------------------------------------
// Scores

struct DiscriminativeResult {
  double score = 0.0;  // |0.5 - held-out accuracy|
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

/// Trains a GRU classifier (real = 1, synthetic = 0) on a seeded split and
/// scores its held-out accuracy against chance.
template <typename T = float>
DiscriminativeResult discriminative_score(const Dataset& real, const Dataset& synth, const FitConfig& fc,
                                          std::uint64_t seed) {
  if (real.empty() || synth.empty()) throw ContractViolation("discriminative_score: empty dataset");
  if (real.dim != synth.dim) throw ShapeError("discriminative_score: feature dimensions differ");
  Rng rng(seed);
  Dataset all{real.dim, real.feature_names, {}, {}};
  std::vector<T> labels;
  for (std::size_t i = 0; i < real.size(); ++i) {
    all.push(real.sequences[i], "r" + std::to_string(i));
    labels.push_back(T(1));
  }
  for (std::size_t i = 0; i < synth.size(); ++i) {
    all.push(synth.sequences[i], "s" + std::to_string(i));
    labels.push_back(T(0));
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::round(fc.train_fraction * static_cast<double>(all.size()))), 1, all.size() - 1);
  std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> te(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    for (auto i : idx) out.push_back(labels[i]);
    return out;
  };
  const Dataset train_set = all.subset(tr), test_set = all.subset(te);
  const auto clf = train_classifier<T>(train_set, labels_of(tr), fc, rng);
  const double acc = classifier_accuracy(clf, test_set, labels_of(te));
  return {std::abs(0.5 - acc), acc, seed};
}

struct PredictiveResult {
  double mae = 0.0;          // normalized units
  double mae_denorm = 0.0;   // original units, when a normalizer is supplied
  std::size_t horizon = 1;
};

/// Train on synthetic, test on real: a GRU forecaster fit to predict x_{t+k}
/// from x_{1:t} on `synth`, scored by MAE over every valid position of `real`.
/// Both datasets are expected in normalized units.
template <typename T = float>
PredictiveResult predictive_score(const Dataset& real, const Dataset& synth, std::size_t horizon, const FitConfig& fc,
                                  std::uint64_t seed, const Normalizer* normalizer = nullptr) {
  if (real.empty() || synth.empty()) throw ContractViolation("predictive_score: empty dataset");
  if (horizon == 0) throw ContractViolation("predictive_score: horizon must be positive");
  if (horizon >= real.min_length() || horizon >= synth.min_length()) {
    throw ContractViolation("predictive_score: horizon " + std::to_string(horizon) +
                            " must be below the minimum sequence length");
  }
  Rng rng(seed);
  const auto model = train_forecaster<T>(synth, horizon, fc, rng);
  PredictiveResult r;
  r.horizon = horizon;
  r.mae = forecast_mae(model, real);
  if (normalizer) {
    r.mae_denorm = forecast_mae(model, real, 256, normalizer);
  } else {
    r.mae_denorm = r.mae;
  }
  return r;
}

/// Held-out accuracy of an MLP separating prior draws (label 1) from encoder
/// codes (label 0); 0.5 means the aggregated posterior matches the prior.
template <typename T = float>
double latent_probe_accuracy(const std::vector<std::vector<double>>& codes, std::size_t latent_dim, std::uint64_t seed,
                             int epochs = 200, std::size_t hidden = 64) {
  if (codes.empty()) throw ContractViolation("latent_probe_accuracy: no codes");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const std::size_t n = codes.size();
  std::vector<T> x;
  std::vector<T> y;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < latent_dim; ++k) x.push_back(static_cast<T>(unit(rng)));
    y.push_back(T(1));
  }
  for (const auto& c : codes) {
    for (std::size_t k = 0; k < latent_dim; ++k) x.push_back(static_cast<T>(c[k]));
    y.push_back(T(0));
  }
  std::vector<std::size_t> order(2 * n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = (8 * order.size()) / 10;
  Linear<T> l1(latent_dim, hidden, rng), l2(hidden, hidden, rng), l3(hidden, 1, rng);
  auto forward = [&](const std::vector<std::size_t>& idx) {
    std::vector<T> rows;
    for (auto i : idx) rows.insert(rows.end(), x.begin() + static_cast<std::ptrdiff_t>(i * latent_dim),
                                   x.begin() + static_cast<std::ptrdiff_t>((i + 1) * latent_dim));
    Tensor<T> h = Tensor<T>::from({idx.size(), latent_dim}, rows);
    h = leaky_relu(l1.apply(h), T(0.2));
    h = leaky_relu(l2.apply(h), T(0.2));
    return l3.apply(h);
  };
  ParamList<T> params;
  l1.collect("l1", params);
  l2.collect("l2", params);
  l3.collect("l3", params);
  AdamState<T> opt;
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  for (int e = 0; e < epochs; ++e) {
    for (const auto& b : epoch_batches(train_idx.size(), 128, rng)) {
      std::vector<std::size_t> idx;
      std::vector<T> t;
      for (auto j : b) {
        idx.push_back(train_idx[j]);
        t.push_back(y[train_idx[j]]);
      }
      const auto loss = bce_with_logits(forward(idx), t);
      zero_grad(params);
      backward(loss);
      adam_step(params, opt, 1e-3);
    }
  }
  NoGradGuard guard;
  const auto logits = forward(test_idx);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test_idx.size(); ++r) correct += (logits[r] > T(0)) == (y[test_idx[r]] > T(0.5)) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

// ---------------------------------------------------------------------------
// Report

struct MetricSummary {
  std::vector<double> values;
  std::vector<double> denorm;  // predictive metrics only

  double mean() const {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
  /// Sample standard deviation; 0 for a single value.
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double mu = mean();
    double s = 0.0;
    for (double v : values) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

inline nlohmann::json to_json(const MetricSummary& m) {
  nlohmann::json j = {{"mean", m.mean()}, {"std", m.stddev()}, {"runs", m.values.size()}, {"values", m.values}};
  if (!m.denorm.empty()) {
    MetricSummary d{m.denorm, {}};
    j["denormalized"] = {{"mean", d.mean()}, {"std", d.stddev()}, {"values", d.values}};
  }
  return j;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"dis", "pred1", "pred3", "pred5"};
  return names;
}

struct EvalReport {
  std::map<std::string, MetricSummary> metrics;
  nlohmann::json meta = nlohmann::json::object();
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, summary] : r.metrics) m[name] = to_json(summary);
  return {{"metrics", m}, {"meta", r.meta}};
}

struct ProtocolSpec {
  std::size_t models = 3;   // trained-model slots
  std::size_t samples = 5;  // synthetic draws per model slot
  std::vector<std::string> metrics = metric_names();
  FitConfig fit;
  std::uint64_t seed = 0;
};

/// Seed of draw `sample` for model slot `slot`.
inline std::uint64_t protocol_seed(std::uint64_t base, std::size_t slot, std::size_t sample) {
  return base + 1000 * static_cast<std::uint64_t>(slot) + static_cast<std::uint64_t>(sample);
}

/// Runs every requested metric models x samples times. Slot i uses
/// bundles[i % bundles.size()]; each draw generates a synthetic set matching
/// the real lengths and scores it in that bundle's normalized units.
template <typename T>
EvalReport run_protocol(const std::vector<const ModelBundle<T>*>& bundles, const Dataset& raw_real,
                        const ProtocolSpec& spec, const std::function<void(const std::string&)>& progress = {}) {
  if (bundles.empty()) throw ContractViolation("run_protocol: no models");
  if (raw_real.empty()) throw ContractViolation("run_protocol: empty dataset");
  if (spec.models == 0 || spec.samples == 0) throw ContractViolation("run_protocol: repetitions must be positive");
  for (const auto& name : spec.metrics) {
    if (std::find(metric_names().begin(), metric_names().end(), name) == metric_names().end()) {
      throw ContractViolation("unknown metric '" + name + "'");
    }
  }
  std::vector<std::size_t> lengths;
  for (const auto& s : raw_real.sequences) lengths.push_back(s.length);
  EvalReport report;
  for (const auto& name : spec.metrics) report.metrics[name];
  for (std::size_t slot = 0; slot < spec.models; ++slot) {
    const ModelBundle<T>& m = *bundles[slot % bundles.size()];
    const Dataset real = m.normalizer.apply(raw_real);
    for (std::size_t j = 0; j < spec.samples; ++j) {
      const auto seed = protocol_seed(spec.seed, slot, j);
      Rng rng(seed);
      const Dataset synth = generate_dataset(m, lengths, rng);
      for (const auto& name : spec.metrics) {
        auto& summary = report.metrics[name];
        if (name == "dis") {
          summary.values.push_back(discriminative_score<T>(real, synth, spec.fit, seed).score);
        } else {
          const std::size_t k = static_cast<std::size_t>(std::stoul(name.substr(4)));
          const auto r = predictive_score<T>(real, synth, k, spec.fit, seed, &m.normalizer);
          summary.values.push_back(r.mae);
          summary.denorm.push_back(r.mae_denorm);
        }
        if (progress) {
          progress("model " + std::to_string(slot) + " sample " + std::to_string(j) + " " + name + " = " +
                   std::to_string(summary.values.back()));
        }
      }
    }
  }
  report.meta = {{"models", spec.models},
                 {"samples", spec.samples},
                 {"distinct_checkpoints", bundles.size()},
                 {"seed", spec.seed},
                 {"seed_rule", "seed + 1000 * model_slot + sample"},
                 {"train_fraction", spec.fit.train_fraction},
                 {"max_epochs", spec.fit.max_epochs},
                 {"patience", spec.fit.patience},
                 {"dis_definition", "|0.5 - held-out accuracy| of a GRU classifier, real = 1, synthetic = 0"},
                 {"pred_definition", "MAE of a GRU forecaster trained on synthetic data, evaluated on real data"},
                 {"units", "normalized [-1, 1]; 'denormalized' entries are in original units"}};
  return report;
}

}  // namespace fetsgan
