// Reconstruction (first-above-threshold and full-sum), least-squares
// adversarial losses, and the joint encoder/generator objective.
#pragma once

#include "fetsgan/layers.hpp"
#include "fetsgan/tensor.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fetsgan {

/// Index (0-based) of the first l[t] > eps; if none exceeds eps, the index of
/// the largest l[t], earliest on ties.
template <typename R>
std::size_t fat_index(std::span<const R> l, R eps) {
  if (l.empty()) throw ContractViolation("fat_index: empty sequence");
  if (!(eps > R(0))) throw ContractViolation("fat_index: threshold must be positive");
  std::size_t best = 0;
  for (std::size_t t = 0; t < l.size(); ++t) {
    if (l[t] > eps) return t;
    if (l[t] > l[best]) best = t;
  }
  return best;
}

template <typename R>
std::size_t fat_index(const std::vector<R>& l, R eps) {
  return fat_index(std::span<const R>(l), eps);
}

enum class ReconMode { fat, full_sum };

template <typename T>
struct ReconResult {
  Tensor<T> loss;
  std::vector<std::size_t> tau;  // per sequence; selected steps in fat mode
};

namespace detail {

template <typename T>
Tensor<T> column(const std::vector<T>& v) {
  return Tensor<T>::from({v.size(), 1}, v);
}

// Sum over steps and valid rows of per-step batch x 1 columns.
template <typename T>
Tensor<T> masked_step_sum(const std::vector<Tensor<T>>& cols, const StepMask& mask) {
  Tensor<T> total;
  for (std::size_t t = 0; t < cols.size(); ++t) {
    Tensor<T> term;
    if (mask.all_valid(t)) {
      term = sum(cols[t]);
    } else {
      const auto keep = mask.rows(t);
      bool any = false;
      std::vector<T> m(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        m[i] = keep[i] ? T(1) : T(0);
        any = any || keep[i];
      }
      if (!any) continue;
      term = sum(mul(cols[t], column(m)));
    }
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor<T>::scalar(T(0));
}

}  // namespace detail

/// Feature-mean squared error per step: batch x 1 columns.
template <typename T>
std::vector<Tensor<T>> step_errors(const std::vector<Tensor<T>>& x, const std::vector<Tensor<T>>& xbar) {
  if (x.size() != xbar.size()) {
    throw ShapeError("reconstruction: " + std::to_string(x.size()) + " target steps vs " +
                     std::to_string(xbar.size()) + " reconstructed steps");
  }
  std::vector<Tensor<T>> out;
  out.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out.push_back(mean_cols(square(sub(x[t], xbar[t]))));
  return out;
}

/// FAT index of every sequence in the batch from step-error values.
template <typename T>
std::vector<std::size_t> select_tau(const std::vector<Tensor<T>>& errors, const StepMask& mask, T eps) {
  std::vector<std::size_t> tau(mask.batch());
  std::vector<T> l;
  for (std::size_t i = 0; i < mask.batch(); ++i) {
    const std::size_t len = std::min(mask.lengths[i], errors.size());
    l.resize(len);
    for (std::size_t t = 0; t < len; ++t) l[t] = errors[t][i];
    tau[i] = fat_index(l, eps);
  }
  return tau;
}

/// fat: batch mean of the step error at each sequence's FAT index, with the
/// index itself held constant. full_sum: batch mean of summed step errors.
template <typename T>
ReconResult<T> reconstruction_loss(const std::vector<Tensor<T>>& x, const std::vector<Tensor<T>>& xbar,
                                   const StepMask& mask, T eps, ReconMode mode) {
  const auto errors = step_errors(x, xbar);
  const auto B = static_cast<T>(mask.batch());
  ReconResult<T> r;
  r.tau = select_tau(errors, mask, eps);
  if (mode == ReconMode::full_sum) {
    r.loss = scale(detail::masked_step_sum(errors, mask), T(1) / B);
    return r;
  }
  Tensor<T> total;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    std::vector<T> sel(mask.batch(), T(0));
    bool any = false;
    for (std::size_t i = 0; i < mask.batch(); ++i) {
      if (r.tau[i] == t) {
        sel[i] = T(1);
        any = true;
      }
    }
    if (!any) continue;
    Tensor<T> term = sum(mul(errors[t], detail::column(sel)));
    total = total.defined() ? add(total, term) : term;
  }
  r.loss = scale(total, T(1) / B);
  return r;
}

// ---------------------------------------------------------------------------
// Least-squares adversarial losses. Sums run over valid steps; expectations
// are batch means.

/// 1/2 E_real[sum_t (1 - y_t)^2] + 1/2 E_fake[sum_t yhat_t^2]
template <typename T>
Tensor<T> feature_disc_loss(const std::vector<Tensor<T>>& y_real, const StepMask& real_mask,
                            const std::vector<Tensor<T>>& y_fake, const StepMask& fake_mask) {
  std::vector<Tensor<T>> real_terms, fake_terms;
  for (const auto& y : y_real) real_terms.push_back(square(add_scalar(y, T(-1))));
  for (const auto& y : y_fake) fake_terms.push_back(square(y));
  const Tensor<T> real = scale(detail::masked_step_sum(real_terms, real_mask), T(0.5) / static_cast<T>(real_mask.batch()));
  const Tensor<T> fake = scale(detail::masked_step_sum(fake_terms, fake_mask), T(0.5) / static_cast<T>(fake_mask.batch()));
  return add(real, fake);
}

/// 1/2 E_fake[sum_t (1 - yhat_t)^2]
template <typename T>
Tensor<T> feature_gen_loss(const std::vector<Tensor<T>>& y_fake, const StepMask& mask) {
  std::vector<Tensor<T>> terms;
  for (const auto& y : y_fake) terms.push_back(square(add_scalar(y, T(-1))));
  return scale(detail::masked_step_sum(terms, mask), T(0.5) / static_cast<T>(mask.batch()));
}

template <typename T>
struct AdversarialPair {
  Tensor<T> disc;
  Tensor<T> gen;
};

template <typename T>
AdversarialPair<T> feature_adv_losses(const std::vector<Tensor<T>>& y_real, const std::vector<Tensor<T>>& y_fake,
                                      const StepMask& mask) {
  return {feature_disc_loss(y_real, mask, y_fake, mask), feature_gen_loss(y_fake, mask)};
}

/// 1/2 E[(1 - y_prior)^2] + 1/2 E[y_post^2]
template <typename T>
Tensor<T> latent_disc_loss(const Tensor<T>& y_prior, const Tensor<T>& y_post) {
  return add(scale(mean(square(add_scalar(y_prior, T(-1)))), T(0.5)), scale(mean(square(y_post)), T(0.5)));
}

/// 1/2 E[(1 - y_post)^2]
template <typename T>
Tensor<T> latent_enc_loss(const Tensor<T>& y_post) {
  return scale(mean(square(add_scalar(y_post, T(-1)))), T(0.5));
}

template <typename T>
AdversarialPair<T> latent_adv_losses(const Tensor<T>& y_prior, const Tensor<T>& y_post) {
  return {latent_disc_loss(y_prior, y_post), latent_enc_loss(y_post)};
}

/// lambda * L_recon + L_ez + L_fx, minimized jointly by encoder and generator.
template <typename T>
Tensor<T> composite_eg_loss(T lambda, const Tensor<T>& recon, const Tensor<T>& ez,
                            const std::optional<Tensor<T>>& fx) {
  if (lambda < T(0)) throw ContractViolation("composite_eg_loss: lambda must be >= 0");
  Tensor<T> total = add(scale(recon, lambda), ez);
  return fx ? add(total, *fx) : total;
}

inline double composite_eg_loss(double lambda, double recon, double ez, double fx) {
  if (lambda < 0.0) throw ContractViolation("composite_eg_loss: lambda must be >= 0");
  return lambda * recon + ez + fx;
}

/// Scalar summary of one training step. Feature-space terms are absent when
/// the feature discriminator is ablated.
struct LossBreakdown {
  double recon = 0.0;
  std::optional<double> fx;
  std::optional<double> dx;
  double ez = 0.0;
  double dz = 0.0;
  double lambda = 10.0;
  std::vector<std::size_t> tau;

  double composite() const { return composite_eg_loss(lambda, recon, ez, fx.value_or(0.0)); }
  double mean_tau() const {
    if (tau.empty()) return 0.0;
    double s = 0.0;
    for (auto t : tau) s += static_cast<double>(t + 1);
    return s / static_cast<double>(tau.size());
  }
  bool finite() const {
    auto ok = [](double v) { return std::isfinite(v); };
    return ok(recon) && ok(ez) && ok(dz) && (!fx || ok(*fx)) && (!dx || ok(*dx));
  }
};

}  // namespace fetsgan
