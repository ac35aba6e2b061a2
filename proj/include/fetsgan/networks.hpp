// The four networks: sequence encoder, non-autoregressive generator,
// per-timestep feature discriminator and latent discriminator.
#pragma once

#include "fetsgan/config.hpp"
#include "fetsgan/data.hpp"
#include "fetsgan/layers.hpp"

#include <vector>

namespace fetsgan {

struct ModelDims {
  std::size_t data_dim = 1;
  std::size_t latent_dim = 4;
  std::size_t noise_dim = 4;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  std::size_t latent_disc_width = 64;
  std::size_t latent_disc_layers = 3;
  double leaky_slope = 0.2;

  static ModelDims from(const TrainConfig& c, std::size_t data_dim) {
    return {data_dim, c.latent_dim, c.noise_dim, c.hidden, c.layers, c.latent_disc_width, c.latent_disc_layers,
            c.leaky_slope};
  }
};

template <typename T>
struct Encoder {
  GruStack<T> rnn;
  Linear<T> head;
};

template <typename T>
struct Generator {
  GruStack<T> rnn;
  Linear<T> head;
};

template <typename T>
struct FeatureDiscriminator {
  GruStack<T> rnn;
  Linear<T> head;  // spectrally normalized
};

template <typename T>
struct LatentDiscriminator {
  std::vector<Linear<T>> layers;  // all spectrally normalized
};

template <typename T>
struct ModelBundle {
  ModelDims dims;
  Encoder<T> encoder;
  Generator<T> generator;
  FeatureDiscriminator<T> feature_disc;
  LatentDiscriminator<T> latent_disc;
  Normalizer normalizer;

  ParamList<T> encoder_params() const {
    ParamList<T> p;
    encoder.rnn.collect("encoder.rnn", p);
    encoder.head.collect("encoder.head", p);
    return p;
  }
  ParamList<T> generator_params() const {
    ParamList<T> p;
    generator.rnn.collect("generator.rnn", p);
    generator.head.collect("generator.head", p);
    return p;
  }
  ParamList<T> feature_disc_params() const {
    ParamList<T> p;
    feature_disc.rnn.collect("feature_disc.rnn", p);
    feature_disc.head.collect("feature_disc.head", p);
    return p;
  }
  ParamList<T> latent_disc_params() const {
    ParamList<T> p;
    for (std::size_t l = 0; l < latent_disc.layers.size(); ++l) {
      latent_disc.layers[l].collect("latent_disc.l" + std::to_string(l), p);
    }
    return p;
  }
  ParamList<T> all_params() const {
    ParamList<T> p = encoder_params();
    auto g = generator_params(), f = feature_disc_params(), z = latent_disc_params();
    p.insert(p.end(), g.begin(), g.end());
    p.insert(p.end(), f.begin(), f.end());
    p.insert(p.end(), z.begin(), z.end());
    return p;
  }

  /// Every spectrally normalized layer, feature head first.
  std::vector<Linear<T>*> spectral_layers() {
    std::vector<Linear<T>*> out{&feature_disc.head};
    for (auto& l : latent_disc.layers) out.push_back(&l);
    return out;
  }
};

/// Allocation order, and hence the rng stream, is fixed: encoder, generator,
/// feature discriminator, latent discriminator.
template <typename T>
ModelBundle<T> init_models(const ModelDims& d, Rng& rng) {
  if (d.data_dim == 0 || d.latent_dim == 0 || d.noise_dim == 0 || d.hidden == 0 || d.layers == 0) {
    throw ContractViolation("init_models: dimensions must be positive");
  }
  ModelBundle<T> m;
  m.dims = d;
  m.encoder.rnn = GruStack<T>(d.data_dim + d.noise_dim, d.hidden, d.layers, rng);
  m.encoder.head = Linear<T>(d.hidden, d.latent_dim, rng);
  m.generator.rnn = GruStack<T>(d.latent_dim + d.noise_dim, d.hidden, d.layers, rng);
  m.generator.head = Linear<T>(d.hidden, d.data_dim, rng);
  m.feature_disc.rnn = GruStack<T>(d.data_dim, d.hidden, d.layers, rng);
  m.feature_disc.head = Linear<T>(d.hidden, 1, rng, true);
  std::size_t in = d.latent_dim;
  for (std::size_t l = 0; l < d.latent_disc_layers; ++l) {
    m.latent_disc.layers.emplace_back(in, d.latent_disc_width, rng, true);
    in = d.latent_disc_width;
  }
  m.latent_disc.layers.emplace_back(in, 1, rng, true);
  m.normalizer.min.assign(d.data_dim, -1.0);
  m.normalizer.max.assign(d.data_dim, 1.0);
  return m;
}

template <typename T>
ModelBundle<T> init_models(const TrainConfig& c, std::size_t data_dim, Rng& rng) {
  return init_models<T>(ModelDims::from(c, data_dim), rng);
}

inline std::size_t gru_param_count(std::size_t in, std::size_t hidden, std::size_t depth) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t i = l == 0 ? in : hidden;
    n += 3 * hidden * i + 3 * hidden * hidden + 6 * hidden;
  }
  return n;
}

/// Trainable scalars in a bundle of the given shape.
inline std::size_t count_parameters(const ModelDims& d) {
  const std::size_t H = d.hidden;
  std::size_t n = 0;
  n += gru_param_count(d.data_dim + d.noise_dim, H, d.layers) + H * d.latent_dim + d.latent_dim;
  n += gru_param_count(d.latent_dim + d.noise_dim, H, d.layers) + H * d.data_dim + d.data_dim;
  n += gru_param_count(d.data_dim, H, d.layers) + H + 1;
  std::size_t in = d.latent_dim;
  for (std::size_t l = 0; l < d.latent_disc_layers; ++l) {
    n += in * d.latent_disc_width + d.latent_disc_width;
    in = d.latent_disc_width;
  }
  n += in + 1;
  return n;
}

// ---------------------------------------------------------------------------
// Noise

/// steps tensors of batch x dim, i.i.d. U(-1, 1).
template <typename T>
std::vector<Tensor<T>> draw_noise(std::size_t batch, std::size_t steps, std::size_t dim, Rng& rng) {
  std::vector<Tensor<T>> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(uniform_tensor<T>({batch, dim}, 1.0, rng, false));
  return out;
}

template <typename T>
Tensor<T> draw_prior(std::size_t batch, std::size_t latent_dim, Rng& rng) {
  return uniform_tensor<T>({batch, latent_dim}, 1.0, rng, false);
}

// ---------------------------------------------------------------------------
// Forward passes

/// Final valid top-layer state of the encoder GRU through a tanh head.
template <typename T>
Tensor<T> encode(const ModelBundle<T>& m, const std::vector<Tensor<T>>& x, const StepMask& mask,
                 const std::vector<Tensor<T>>& noise) {
  if (x.size() != noise.size()) {
    throw ContractViolation("encode: sequence has " + std::to_string(x.size()) + " steps but noise has " +
                            std::to_string(noise.size()));
  }
  if (x.empty()) throw ContractViolation("encode: empty sequence");
  const std::size_t B = x.front().rows();
  const Tensor<T> h = m.encoder.rnn.forward_packed(concat<T>({stack_rows(x), stack_rows(noise)}), B, mask.lengths);
  return tanh(m.encoder.head.apply(slice_rows(h, h.rows() - B, h.rows())));
}

/// Decodes z into steps outputs; z is fed at every step alongside the noise,
/// never the previous output.
template <typename T>
std::vector<Tensor<T>> generate(const ModelBundle<T>& m, const Tensor<T>& z, const std::vector<Tensor<T>>& noise,
                                std::size_t steps) {
  if (steps == 0) throw ContractViolation("generate: T must be positive");
  if (noise.size() < steps) {
    throw ContractViolation("generate: " + std::to_string(noise.size()) + " noise steps for T=" +
                            std::to_string(steps));
  }
  const std::vector<Tensor<T>> eta(noise.begin(), noise.begin() + static_cast<std::ptrdiff_t>(steps));
  const Tensor<T> h = m.generator.rnn.forward_packed(concat<T>({repeat_rows(z, steps), stack_rows(eta)}), z.rows());
  return split_rows(tanh(m.generator.head.apply(h)), steps);
}

/// Raw per-step scores (batch x 1 each). power_iters > 0 advances the
/// spectral-norm estimate, as done once per forward pass in training.
template <typename T>
std::vector<Tensor<T>> discriminate_features(ModelBundle<T>& m, const std::vector<Tensor<T>>& x, int power_iters) {
  if (x.empty()) throw ContractViolation("discriminate_features: empty sequence");
  const Tensor<T> h = m.feature_disc.rnn.forward_packed(stack_rows(x), x.front().rows());
  return split_rows(m.feature_disc.head.forward(h, power_iters), x.size());
}

template <typename T>
Tensor<T> discriminate_latent(ModelBundle<T>& m, const Tensor<T>& z, int power_iters) {
  Tensor<T> h = z;
  const auto& layers = m.latent_disc.layers;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = m.latent_disc.layers[l].forward(h, power_iters);
    if (l + 1 < layers.size()) h = leaky_relu(h, static_cast<T>(m.dims.leaky_slope));
  }
  return h;
}

}  // namespace fetsgan
