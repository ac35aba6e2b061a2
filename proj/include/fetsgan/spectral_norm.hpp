#pragma once

#include "fetsgan/tensor.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace fetsgan {

/// Persistent left/right singular-vector estimates for one weight matrix.
template <typename T>
struct SpectralNormState {
  std::vector<T> u;  // length rows
  std::vector<T> v;  // length cols
};

inline constexpr double kSigmaFloor = 1e-12;

namespace detail {

template <typename T>
bool normalize_into(std::vector<T>& dst, const std::vector<T>& src) {
  double n = 0.0;
  for (T x : src) n += static_cast<double>(x) * static_cast<double>(x);
  n = std::sqrt(n);
  if (n < kSigmaFloor) return false;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i] / n);
  return true;
}

}  // namespace detail

template <typename T, typename Rng>
SpectralNormState<T> init_spectral_state(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SpectralNormState<T> s;
  std::vector<T> raw(rows);
  for (auto& x : raw) x = static_cast<T>(normal(rng));
  s.u.assign(rows, T(0));
  if (!detail::normalize_into(s.u, raw)) s.u[0] = T(1);
  s.v.assign(cols, T(0));
  s.v[0] = T(1);
  return s;
}

/// Runs power iterations on w's values, updating the persistent estimates.
/// Returns sigma = u^T W v.
template <typename T>
double power_iterate(const Tensor<T>& w, SpectralNormState<T>& state, int iters) {
  const std::size_t m = w.rows(), n = w.cols();
  if (state.u.size() != m || state.v.size() != n) {
    throw ShapeError("spectral norm state does not match weight " + shape_str(w.shape()));
  }
  const auto W = detail::as_matrix(w.values(), m, n);
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  for (int k = 0; k < iters; ++k) {
    Vec wt_u = W.transpose() * Eigen::Map<const Vec>(state.u.data(), static_cast<Eigen::Index>(m));
    std::vector<T> tmp(wt_u.data(), wt_u.data() + n);
    detail::normalize_into(state.v, tmp);
    Vec w_v = W * Eigen::Map<const Vec>(state.v.data(), static_cast<Eigen::Index>(n));
    tmp.assign(w_v.data(), w_v.data() + m);
    detail::normalize_into(state.u, tmp);
  }
  Vec w_v = W * Eigen::Map<const Vec>(state.v.data(), static_cast<Eigen::Index>(n));
  double sigma = 0.0;
  for (std::size_t i = 0; i < m; ++i) sigma += static_cast<double>(state.u[i]) * static_cast<double>(w_v[i]);
  return sigma;
}

/// W / sigma(W) with sigma estimated as u^T W v from the persistent vectors
/// after power_iters further iterations (0 keeps them frozen). Gradients flow
/// through W in both numerator and sigma; u and v are treated as constants.
/// A matrix whose estimated sigma is below the floor passes through unchanged.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& w, SpectralNormState<T>& state, int power_iters) {
  detail::require_matrix("spectral_normalize", w);
  if (power_iters < 0) throw ContractViolation("spectral_normalize: negative power_iters");
  const double sigma = power_iterate(w, state, power_iters);
  const std::size_t m = w.rows(), n = w.cols();
  if (!(sigma > kSigmaFloor)) {
    Buffer<T> same = w.values();
    return detail::make_result<T>(w.shape(), std::move(same), {w}, [](detail::Node<T>& self) {
      if (auto* p = detail::grad_target(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    });
  }
  std::vector<T> out(w.size());
  const T inv = static_cast<T>(1.0 / sigma);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] * inv;
  std::vector<T> u = state.u, v = state.v;
  return detail::make_result<T>(
      w.shape(), std::move(out), {w}, [u, v, m, n, sigma](detail::Node<T>& self) {
        auto* p = detail::grad_target(self, 0);
        if (!p) return;
        const auto& wv = self.parents[0]->value;
        double inner = 0.0;
        for (std::size_t i = 0; i < wv.size(); ++i) {
          inner += static_cast<double>(self.grad[i]) * static_cast<double>(wv[i]);
        }
        const double coef = inner / (sigma * sigma);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            const std::size_t i = r * n + c;
            p->grad[i] += static_cast<T>(self.grad[i] / sigma - coef * u[r] * v[c]);
          }
        }
      });
}

}  // namespace fetsgan
