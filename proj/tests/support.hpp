#pragma once

#include "fetsgan/fetsgan.hpp"
#include "oracles.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace fetsgan::testing {

using TD = Tensor<double>;

inline TD random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return TD::from(std::move(shape), std::move(v), requires_grad);
}

/// Reduces any tensor to a scalar through fixed random weights, so every
/// output entry contributes a distinct gradient.
inline TD weighted_sum(const TD& out, std::mt19937_64& rng) {
  const TD w = random_tensor(out.shape(), rng, -1.0, 1.0, false);
  return sum(mul(out, w));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

/// Compares analytic gradients of f() against central differences for every
/// entry of every leaf. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const std::function<TD()>& f, const std::vector<TD>& leaves, double h = 1e-5,
                                 double floor = 1e-3) {
  for (auto l : leaves) l.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) {
    analytic.push_back(l.has_grad() ? std::vector<double>(l.grad().begin(), l.grad().end())
                                    : std::vector<double>(l.size(), 0.0));
  }
  GradCheck out;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto leaf = leaves[k];
    auto data = leaf.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = f().item();
      data[i] = saved - h;
      const double fm = f().item();
      data[i] = saved;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.entries;
    }
  }
  return out;
}

/// Random [b][t][f] values in [lo, hi].
inline oracle::Batch3 random_batch(std::size_t B, std::size_t T, std::size_t D, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  oracle::Batch3 out(B, std::vector<std::vector<double>>(T, std::vector<double>(D)));
  for (auto& s : out) {
    for (auto& step : s) {
      for (auto& v : step) v = u(rng);
    }
  }
  return out;
}

/// Per-step batch x D tensors from [b][t][f] values.
inline std::vector<TD> to_steps(const oracle::Batch3& x, bool requires_grad = false) {
  std::vector<TD> out;
  const std::size_t B = x.size(), T = x[0].size(), D = x[0][0].size();
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> v;
    for (std::size_t b = 0; b < B; ++b) v.insert(v.end(), x[b][t].begin(), x[b][t].end());
    out.push_back(TD::from({B, D}, std::move(v), requires_grad));
  }
  return out;
}

inline std::vector<TD> to_steps(const oracle::Scores& y) {
  oracle::Batch3 x(y.size());
  for (std::size_t b = 0; b < y.size(); ++b) {
    for (double v : y[b]) x[b].push_back({v});
  }
  return to_steps(x);
}

inline oracle::Scores random_scores(std::size_t B, std::size_t T, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.5, 1.0);
  oracle::Scores s(B, std::vector<double>(T));
  for (auto& row : s) {
    for (auto& v : row) v = g(rng);
  }
  return s;
}

inline std::vector<std::size_t> random_lengths(std::size_t B, std::size_t T, std::mt19937_64& rng) {
  std::vector<std::size_t> l(B);
  for (auto& v : l) v = 1 + rng() % T;
  l[rng() % B] = T;
  return l;
}

inline SinesSpec small_sines(std::size_t count, std::size_t length, std::uint64_t seed = 0) {
  SinesSpec s;
  s.count = count;
  s.length = length;
  s.seed = seed;
  return s;
}

inline TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden = 8;
  c.layers = 2;
  c.latent_disc_width = 8;
  c.latent_disc_layers = 2;
  c.batch_size = 8;
  c.epochs = 2;
  return c;
}

}  // namespace fetsgan::testing
