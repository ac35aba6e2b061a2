#pragma once

#include "fetsgan/optim.hpp"
#include "fetsgan/spectral_norm.hpp"
#include "fetsgan/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fetsgan {

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> data(numel(shape));
  for (auto& x : data) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

/// Fully connected layer y = x W + b, W stored as in x out.
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;
  bool spectral = false;
  SpectralNormState<T> sn;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool spectral_norm = false)
      : weight(uniform_tensor<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng, true)),
        bias(Tensor<T>::zeros({out}, true)),
        spectral(spectral_norm) {
    if (spectral) sn = init_spectral_state<T>(in, out, rng);
  }

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  /// power_iters applies only to spectrally normalized layers.
  Tensor<T> effective_weight(int power_iters) {
    return spectral ? spectral_normalize(weight, sn, power_iters) : weight;
  }

  /// Uses the raw weight; for layers without spectral normalization.
  Tensor<T> apply(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }

  Tensor<T> forward(const Tensor<T>& x, int power_iters = 0) {
    return add_bias(matmul(x, effective_weight(power_iters)), bias);
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

/// Gated recurrent unit with reset, update and candidate gates packed in that
/// order along the 3H axis:
///   r = s(x Wr + h Ur + b), u = s(x Wu + h Uu + b),
///   n = tanh(x Wn + bn + r * (h Un + cn)), h' = n + u * (h - n).
template <typename T>
struct GruLayer {
  Tensor<T> w_ih;  // in x 3H
  Tensor<T> w_hh;  // H x 3H
  Tensor<T> b_ih;  // 3H
  Tensor<T> b_hh;  // 3H

  GruLayer() = default;
  GruLayer(std::size_t in, std::size_t hidden, Rng& rng)
      : w_ih(uniform_tensor<T>({in, 3 * hidden}, 1.0 / std::sqrt(static_cast<double>(in)), rng, true)),
        w_hh(uniform_tensor<T>({hidden, 3 * hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng,
                               true)),
        b_ih(Tensor<T>::zeros({3 * hidden}, true)),
        b_hh(Tensor<T>::zeros({3 * hidden}, true)) {}

  std::size_t hidden() const { return w_hh.rows(); }
  std::size_t input_size() const { return w_ih.rows(); }

  Tensor<T> step(const Tensor<T>& x, const Tensor<T>& h) const {
    const std::size_t H = hidden();
    const Tensor<T> gx = add_bias(matmul(x, w_ih), b_ih);
    const Tensor<T> gh = add_bias(matmul(h, w_hh), b_hh);
    const Tensor<T> r = sigmoid(add(slice_cols(gx, 0, H), slice_cols(gh, 0, H)));
    const Tensor<T> u = sigmoid(add(slice_cols(gx, H, 2 * H), slice_cols(gh, H, 2 * H)));
    const Tensor<T> n = tanh(add(slice_cols(gx, 2 * H, 3 * H), mul(r, slice_cols(gh, 2 * H, 3 * H))));
    return add(n, mul(u, sub(h, n)));
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".w_ih", w_ih});
    out.push_back({prefix + ".w_hh", w_hh});
    out.push_back({prefix + ".b_ih", b_ih});
    out.push_back({prefix + ".b_hh", b_hh});
  }
};

/// A whole GRU layer over a time-major packed sequence as one graph node.
/// Row t*batch + i of x is step t of sequence i. When lengths is non-empty,
/// rows at steps t >= lengths[i] copy the previous state instead of updating.
/// Returns the packed hidden states, steps*batch x H, with the same gate
/// algebra as GruLayer::step.
template <typename T>
Tensor<T> gru_sequence(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh, const Tensor<T>& b_ih,
                       const Tensor<T>& b_hh, std::size_t batch, const std::vector<std::size_t>& lengths = {}) {
  detail::require_matrix("gru_sequence", x);
  detail::require_matrix("gru_sequence", w_ih);
  detail::require_matrix("gru_sequence", w_hh);
  const std::size_t H = w_hh.rows(), G = 3 * H, in = x.cols();
  if (batch == 0 || x.rows() % batch != 0) {
    throw ShapeError("gru_sequence: " + shape_str(x.shape()) + " is not a whole number of batches of " +
                     std::to_string(batch));
  }
  if (w_ih.rows() != in || w_ih.cols() != G || w_hh.cols() != G || b_ih.size() != G || b_hh.size() != G) {
    throw ShapeError("gru_sequence: input " + shape_str(x.shape()) + " with weights " + shape_str(w_ih.shape()) +
                     ", " + shape_str(w_hh.shape()) + " and biases " + shape_str(b_ih.shape()) + ", " +
                     shape_str(b_hh.shape()));
  }
  if (!lengths.empty() && lengths.size() != batch) {
    throw ShapeError("gru_sequence: " + std::to_string(lengths.size()) + " lengths for batch " +
                     std::to_string(batch));
  }
  const std::size_t B = batch, S = x.rows() / batch;
  using Mat = detail::RowMat<T>;
  using Vec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  const auto Bi = static_cast<Eigen::Index>(B), Hi = static_cast<Eigen::Index>(H);
  const auto Wih = detail::as_matrix(w_ih.values(), in, G);
  const auto Whh = detail::as_matrix(w_hh.values(), H, G);
  const Eigen::Map<const Vec> bih(b_ih.values().data(), static_cast<Eigen::Index>(G));
  const Eigen::Map<const Vec> bhh(b_hh.values().data(), static_cast<Eigen::Index>(G));
  std::vector<std::size_t> masked_from(S, B);  // per step: are any rows frozen?
  if (!lengths.empty()) {
    for (std::size_t t = 0; t < S; ++t) {
      for (std::size_t i = 0; i < B; ++i) {
        if (t >= lengths[i]) masked_from[t] = 0;
      }
    }
  }

  Mat gx = detail::as_matrix(x.values(), S * B, in) * Wih;
  gx.rowwise() += bih;
  // Planes r, u, n and the recurrent candidate term, kept for backward. All
  // elementwise results land in Eigen-owned (aligned) storage: Eigen handles
  // unaligned heads with scalar math and the rest with packet approximations,
  // so the rounding would otherwise depend on heap addresses.
  auto cache = std::make_shared<Mat>(static_cast<Eigen::Index>(4 * S * B), Hi);
  auto plane_block = [&](std::size_t k, std::size_t t) {
    return cache->middleRows(static_cast<Eigen::Index>(k * S * B + t * B), Bi);
  };
  Mat states(static_cast<Eigen::Index>(S * B), Hi);
  Mat h = Mat::Zero(Bi, Hi);
  Mat gh(Bi, static_cast<Eigen::Index>(G));
  for (std::size_t t = 0; t < S; ++t) {
    gh.noalias() = h * Whh;
    gh.rowwise() += bhh;
    const auto rows = static_cast<Eigen::Index>(t * B);
    auto r = plane_block(0, t), u = plane_block(1, t), n = plane_block(2, t), hn = plane_block(3, t);
    r = (gx.block(rows, 0, Bi, Hi) + gh.leftCols(Hi)).array().logistic().matrix();
    u = (gx.block(rows, Hi, Bi, Hi) + gh.middleCols(Hi, Hi)).array().logistic().matrix();
    hn = gh.rightCols(Hi);
    n = (gx.block(rows, 2 * Hi, Bi, Hi).array() + r.array() * hn.array()).tanh().matrix();
    auto next = states.middleRows(rows, Bi);
    next = (n.array() + u.array() * (h.array() - n.array())).matrix();
    if (masked_from[t] == 0) {
      for (std::size_t i = 0; i < B; ++i) {
        if (t >= lengths[i]) next.row(static_cast<Eigen::Index>(i)) = h.row(static_cast<Eigen::Index>(i));
      }
    }
    h = next;
  }
  std::vector<T> out(states.data(), states.data() + states.size());

  return detail::make_result<T>({S * B, H}, std::move(out), {x, w_ih, w_hh, b_ih, b_hh},
                                [cache, lengths, masked_from, B, S, H, G, in](detail::Node<T>& self) {
    const auto Bi = static_cast<Eigen::Index>(B), Hi = static_cast<Eigen::Index>(H);
    const auto hs = detail::as_matrix(std::as_const(self.value), S * B, H);
    const auto dout = detail::as_matrix(std::as_const(self.grad), S * B, H);
    const auto Whh = detail::as_matrix(std::as_const(self.parents[2]->value), H, G);
    auto plane_block = [&](std::size_t k, std::size_t t) {
      return std::as_const(*cache).middleRows(static_cast<Eigen::Index>(k * S * B + t * B), Bi);
    };
    Mat dgx(static_cast<Eigen::Index>(S * B), static_cast<Eigen::Index>(G));
    Mat dgh(static_cast<Eigen::Index>(S * B), static_cast<Eigen::Index>(G));
    Mat dh = Mat::Zero(Bi, Hi);
    Mat hp_zero = Mat::Zero(Bi, Hi);
    for (std::size_t t = S; t-- > 0;) {
      const auto rows = static_cast<Eigen::Index>(t * B);
      dh += dout.middleRows(rows, Bi);
      const auto r = plane_block(0, t).array(), u = plane_block(1, t).array();
      const auto n = plane_block(2, t).array(), hn = plane_block(3, t).array();
      const Eigen::Map<const Mat> hp_map(t == 0 ? hp_zero.data() : self.value.data() + (t - 1) * B * H, Bi, Hi);
      const auto hp = hp_map.array();
      const auto g = dh.array();
      auto dar = dgx.block(rows, 0, Bi, Hi).array();
      auto dau = dgx.block(rows, Hi, Bi, Hi).array();
      auto dan = dgx.block(rows, 2 * Hi, Bi, Hi).array();
      dan = g * (T(1) - u) * (T(1) - n * n);
      dau = g * (hp - n) * u * (T(1) - u);
      dar = dan * hn * r * (T(1) - r);
      dgh.block(rows, 0, Bi, 2 * Hi) = dgx.block(rows, 0, Bi, 2 * Hi);
      dgh.block(rows, 2 * Hi, Bi, Hi).array() = dan * r;
      Mat dprev = (g * u).matrix();
      if (masked_from[t] == 0) {
        for (std::size_t i = 0; i < B; ++i) {
          if (t < lengths[i]) continue;
          const auto ii = static_cast<Eigen::Index>(i);
          dgx.row(rows + ii).setZero();
          dgh.row(rows + ii).setZero();
          dprev.row(ii) = dh.row(ii);
        }
      }
      dh = dprev;
      dh.noalias() += dgh.middleRows(rows, Bi) * Whh.transpose();
    }
    if (auto* p = detail::grad_target(self, 0)) {
      const auto Wih = detail::as_matrix(std::as_const(self.parents[1]->value), in, G);
      detail::as_matrix(p->grad, S * B, in).noalias() += dgx * Wih.transpose();
    }
    if (auto* p = detail::grad_target(self, 1)) {
      detail::as_matrix(p->grad, in, G).noalias() +=
          detail::as_matrix(std::as_const(self.parents[0]->value), S * B, in).transpose() * dgx;
    }
    if (auto* p = detail::grad_target(self, 2); p && S > 1) {
      const auto rows = static_cast<Eigen::Index>((S - 1) * B);
      detail::as_matrix(p->grad, H, G).noalias() += hs.topRows(rows).transpose() * dgh.bottomRows(rows);
    }
    if (auto* p = detail::grad_target(self, 3)) {
      Eigen::Map<Vec>(p->grad.data(), static_cast<Eigen::Index>(G)) += dgx.colwise().sum();
    }
    if (auto* p = detail::grad_target(self, 4)) {
      Eigen::Map<Vec>(p->grad.data(), static_cast<Eigen::Index>(G)) += dgh.colwise().sum();
    }
  });
}

/// Valid-step bookkeeping for a padded batch.
struct StepMask {
  std::vector<std::size_t> lengths;

  std::size_t batch() const { return lengths.size(); }
  bool all_valid(std::size_t t) const {
    for (auto l : lengths) {
      if (t >= l) return false;
    }
    return true;
  }
  std::vector<std::uint8_t> rows(std::size_t t) const {
    std::vector<std::uint8_t> keep(lengths.size());
    for (std::size_t i = 0; i < lengths.size(); ++i) keep[i] = t < lengths[i] ? 1 : 0;
    return keep;
  }
  static StepMask full(std::size_t batch, std::size_t steps) {
    return StepMask{std::vector<std::size_t>(batch, steps)};
  }
};

template <typename T>
struct GruStack {
  std::vector<GruLayer<T>> layers;

  GruStack() = default;
  GruStack(std::size_t in, std::size_t hidden, std::size_t depth, Rng& rng) {
    for (std::size_t l = 0; l < depth; ++l) layers.emplace_back(l == 0 ? in : hidden, hidden, rng);
  }

  std::size_t hidden() const { return layers.front().hidden(); }

  /// Runs the stack over a packed time-major sequence (steps*batch x in)
  /// from zero state and returns the packed top-layer states. With lengths,
  /// rows past their length keep their previous state, so the last block
  /// holds each row's final valid state.
  Tensor<T> forward_packed(const Tensor<T>& x, std::size_t batch, const std::vector<std::size_t>& lengths = {}) const {
    Tensor<T> h = x;
    for (const auto& layer : layers) {
      h = gru_sequence(h, layer.w_ih, layer.w_hh, layer.b_ih, layer.b_hh, batch, lengths);
    }
    return h;
  }

  /// Per-step interface over batch x in inputs.
  std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& inputs, const StepMask* mask = nullptr) const {
    if (inputs.empty()) throw ContractViolation("GruStack::forward: empty sequence");
    const std::size_t B = inputs.front().rows();
    if (mask && mask->batch() != B) {
      throw ShapeError("GruStack::forward: mask batch " + std::to_string(mask->batch()) +
                       " vs input batch " + std::to_string(B));
    }
    const Tensor<T> packed = forward_packed(stack_rows(inputs), B, mask ? mask->lengths : std::vector<std::size_t>{});
    return split_rows(packed, inputs.size());
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(prefix + ".l" + std::to_string(l), out);
  }
};

}  // namespace fetsgan
