#pragma once

#include "fetsgan/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fetsgan {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"),
        param_(std::move(param)) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

template <typename T>
void zero_grad(const ParamList<T>& params) {
  for (auto p : params) p.tensor.zero_grad();
}

/// Adam moments for one parameter group. Shapes are bound on the first step.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// The whole step is rejected, untouched, if any gradient is non-finite.
template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, double rate) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), T(0));
      state.v.emplace_back(p.tensor.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (state.m[k].size() != p.tensor.size()) {
      throw ShapeError("adam_step: moment size mismatch for '" + p.name + "'");
    }
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }

  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto tensor = params[k].tensor;
    if (!tensor.has_grad()) continue;
    auto w = tensor.data();
    auto g = tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / c1;
      const double vhat = static_cast<double>(v[i]) / c2;
      w[i] -= static_cast<T>(rate * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto p : params) {
      if (!p.tensor.has_grad()) continue;
      for (auto& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

/// Constant rate, then geometric decay over the final decay_fraction of
/// epochs, reaching base_rate * final_ratio at total_epochs.
struct LrSchedule {
  double base_rate = 1e-3;
  int total_epochs = 1000;
  double decay_fraction = 0.1;
  double final_ratio = 0.1;

  double decay_start() const { return (1.0 - decay_fraction) * total_epochs; }
};

inline double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0 || epoch > s.total_epochs) {
    throw ContractViolation("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(s.total_epochs) + "]");
  }
  const double start = s.decay_start();
  if (epoch <= start || s.total_epochs <= start) return s.base_rate;
  const double progress = (epoch - start) / (s.total_epochs - start);
  return s.base_rate * std::pow(s.final_ratio, progress);
}

}  // namespace fetsgan
