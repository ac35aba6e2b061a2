// Supervised GRU models shared by the teacher-forcing baseline and the
// evaluation metrics: a k-step-ahead forecaster and a sequence classifier.
#pragma once

#include "fetsgan/data.hpp"
#include "fetsgan/layers.hpp"
#include "fetsgan/objectives.hpp"
#include "fetsgan/optim.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace fetsgan {

struct FitConfig {
  std::size_t hidden = 64;
  std::size_t layers = 3;
  double lr = 1e-3;
  int max_epochs = 1000;
  int patience = 50;  // epochs without training-loss improvement before stopping
  std::size_t batch_size = 128;
  double train_fraction = 0.8;
};

struct FitHistory {
  std::vector<double> epoch_loss;
  int epochs_run() const { return static_cast<int>(epoch_loss.size()); }
};

/// GRU stack with a linear head applied at every step.
template <typename T>
struct ForecastModel {
  GruStack<T> rnn;
  Linear<T> head;
  std::size_t horizon = 1;

  ForecastModel() = default;
  ForecastModel(std::size_t dim, std::size_t hidden, std::size_t layers, std::size_t k, Rng& rng)
      : rnn(dim, hidden, layers, rng), head(hidden, dim, rng), horizon(k) {}

  std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& x) const {
    std::vector<Tensor<T>> out;
    for (const auto& h : rnn.forward(x)) out.push_back(head.apply(h));
    return out;
  }

  ParamList<T> params() const {
    ParamList<T> p;
    rnn.collect("rnn", p);
    head.collect("head", p);
    return p;
  }
};

/// Mask selecting positions t whose target x_{t+k} exists.
inline StepMask forecast_mask(const SeqBatch& b, std::size_t k) {
  StepMask m;
  for (auto l : b.lengths) m.lengths.push_back(l > k ? l - k : 0);
  return m;
}

inline std::size_t valid_positions(const StepMask& m) {
  std::size_t n = 0;
  for (auto l : m.lengths) n += l;
  return n;
}

/// Mean over valid positions of the feature-mean squared k-step error.
template <typename T>
Tensor<T> forecast_loss(const ForecastModel<T>& model, const SeqBatch& b) {
  const auto x = batch_steps<T>(b);
  const std::size_t k = model.horizon;
  if (b.max_len <= k) throw ContractViolation("forecast_loss: horizon exceeds batch length");
  std::vector<Tensor<T>> inputs(x.begin(), x.end() - static_cast<std::ptrdiff_t>(k));
  const auto pred = model.forward(inputs);
  std::vector<Tensor<T>> targets(x.begin() + static_cast<std::ptrdiff_t>(k), x.end());
  const auto errs = step_errors(targets, pred);
  const StepMask mask = forecast_mask(b, k);
  const auto n = valid_positions(mask);
  if (n == 0) return Tensor<T>::scalar(T(0));
  return scale(detail::masked_step_sum(errs, mask), T(1) / static_cast<T>(n));
}

/// Mean absolute k-step error over all valid positions (and features). With a
/// normalizer, errors are rescaled to original units.
template <typename T>
double forecast_mae(const ForecastModel<T>& model, const Dataset& d, std::size_t batch_size = 256,
                    const Normalizer* normalizer = nullptr) {
  NoGradGuard guard;
  const std::size_t k = model.horizon;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < d.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(d.size(), start + batch_size); ++i) idx.push_back(i);
    const SeqBatch b = make_batch(d, idx);
    if (b.max_len <= k) continue;
    const auto x = batch_steps<T>(b);
    std::vector<Tensor<T>> inputs(x.begin(), x.end() - static_cast<std::ptrdiff_t>(k));
    const auto pred = model.forward(inputs);
    for (std::size_t t = 0; t + k < b.max_len; ++t) {
      for (std::size_t r = 0; r < b.batch; ++r) {
        if (t + k >= b.lengths[r]) continue;
        for (std::size_t f = 0; f < b.dim; ++f) {
          const double err = std::abs(static_cast<double>(pred[t].at(r, f)) - b.at(r, t + k, f));
          total += normalizer ? 0.5 * (normalizer->max[f] - normalizer->min[f]) * err : err;
          ++count;
        }
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

/// GRU stack whose final valid state feeds a single-logit head.
template <typename T>
struct SequenceClassifier {
  GruStack<T> rnn;
  Linear<T> head;

  SequenceClassifier() = default;
  SequenceClassifier(std::size_t dim, std::size_t hidden, std::size_t layers, Rng& rng)
      : rnn(dim, hidden, layers, rng), head(hidden, 1, rng) {}

  Tensor<T> logits(const SeqBatch& b) const {
    const auto x = batch_steps<T>(b);
    const StepMask mask{b.lengths};
    return head.apply(rnn.forward(x, &mask).back());
  }

  ParamList<T> params() const {
    ParamList<T> p;
    rnn.collect("rnn", p);
    head.collect("head", p);
    return p;
  }
};

/// Mini-batch Adam over `train`, stopping after max_epochs or once the epoch
/// loss has not improved for `patience` epochs.
template <typename T>
FitHistory fit_minibatch(const ParamList<T>& params, std::size_t n, const FitConfig& fc, Rng& rng,
                         const std::function<Tensor<T>(const std::vector<std::size_t>&)>& batch_loss) {
  FitHistory hist;
  AdamState<T> opt;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < fc.max_epochs; ++epoch) {
    double total = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : epoch_batches(n, fc.batch_size, rng)) {
      Tensor<T> loss = batch_loss(idx);
      zero_grad(params);
      backward(loss);
      adam_step(params, opt, fc.lr);
      total += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
      seen += idx.size();
    }
    const double mean_loss = total / static_cast<double>(seen);
    hist.epoch_loss.push_back(mean_loss);
    if (mean_loss < best) {
      best = mean_loss;
      since_best = 0;
    } else if (++since_best >= fc.patience) {
      break;
    }
  }
  return hist;
}

template <typename T>
ForecastModel<T> train_forecaster(const Dataset& d, std::size_t horizon, const FitConfig& fc, Rng& rng,
                                  FitHistory* history = nullptr) {
  if (d.empty()) throw ContractViolation("train_forecaster: empty dataset");
  if (horizon >= d.min_length()) {
    throw ContractViolation("forecast horizon " + std::to_string(horizon) + " must be below the minimum sequence length " +
                            std::to_string(d.min_length()));
  }
  ForecastModel<T> model(d.dim, fc.hidden, fc.layers, horizon, rng);
  auto h = fit_minibatch<T>(model.params(), d.size(), fc, rng, [&](const std::vector<std::size_t>& idx) {
    return forecast_loss(model, make_batch(d, idx));
  });
  if (history) *history = std::move(h);
  return model;
}

template <typename T>
SequenceClassifier<T> train_classifier(const Dataset& d, const std::vector<T>& labels, const FitConfig& fc, Rng& rng,
                                       FitHistory* history = nullptr) {
  SequenceClassifier<T> model(d.dim, fc.hidden, fc.layers, rng);
  auto h = fit_minibatch<T>(model.params(), d.size(), fc, rng, [&](const std::vector<std::size_t>& idx) {
    std::vector<T> y;
    for (auto i : idx) y.push_back(labels[i]);
    return bce_with_logits(model.logits(make_batch(d, idx)), y);
  });
  if (history) *history = std::move(h);
  return model;
}

/// Fraction of sequences whose logit sign matches the {0,1} label.
template <typename T>
double classifier_accuracy(const SequenceClassifier<T>& model, const Dataset& d, const std::vector<T>& labels,
                           std::size_t batch_size = 256) {
  NoGradGuard guard;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < d.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(d.size(), start + batch_size); ++i) idx.push_back(i);
    const auto logits = model.logits(make_batch(d, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const bool predicted = logits[r] > T(0);
      correct += predicted == (labels[idx[r]] > T(0.5)) ? 1 : 0;
    }
  }
  return d.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(d.size());
}

}  // namespace fetsgan
