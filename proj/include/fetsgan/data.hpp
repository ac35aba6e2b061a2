// Sequence datasets: sines synthesis, CSV ingestion, windowing, min-max
// normalization and padded batching.
#pragma once

#include "fetsgan/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fetsgan {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One sequence, stored row-major as length x dim.
struct Sequence {
  std::size_t length = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t f, std::size_t dim) const { return values[t * dim + f]; }
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> ids;
  std::vector<Sequence> sequences;

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
  std::size_t max_length() const {
    std::size_t m = 0;
    for (const auto& s : sequences) m = std::max(m, s.length);
    return m;
  }
  std::size_t min_length() const {
    if (sequences.empty()) return 0;
    std::size_t m = sequences.front().length;
    for (const auto& s : sequences) m = std::min(m, s.length);
    return m;
  }
  void push(Sequence s, std::string id) {
    sequences.push_back(std::move(s));
    ids.push_back(std::move(id));
  }
  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset out{dim, feature_names, {}, {}};
    for (auto i : idx) out.push(sequences[i], ids[i]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Sines

struct SinesSpec {
  std::size_t count = 1000;
  std::size_t length = 100;
  double amp_min = 0.5, amp_max = 1.5;
  double freq_min = 1.0, freq_max = 10.0;
  double phase_min = -std::numbers::pi, phase_max = std::numbers::pi;
  std::uint64_t seed = 0;
};

struct SineParams {
  double amplitude;
  double frequency;
  double phase;
};

inline void validate(const SinesSpec& s) {
  if (s.length < 2) throw DataError("sines: length must be at least 2");
  if (s.count == 0) throw DataError("sines: count must be positive");
  if (!(s.amp_min <= s.amp_max) || !(s.freq_min <= s.freq_max) || !(s.phase_min <= s.phase_max)) {
    throw DataError("sines: parameter ranges must be non-empty");
  }
}

inline std::vector<SineParams> draw_sine_params(const SinesSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<SineParams> out(spec.count);
  for (auto& p : out) {
    p.amplitude = draw(spec.amp_min, spec.amp_max);
    p.frequency = draw(spec.freq_min, spec.freq_max);
    p.phase = draw(spec.phase_min, spec.phase_max);
  }
  return out;
}

/// A * sin(2 pi f t_j + phi) sampled at t_j = j / length.
inline Sequence sine_sequence(const SineParams& p, std::size_t length) {
  Sequence s{length, std::vector<double>(length)};
  for (std::size_t j = 0; j < length; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(length);
    s.values[j] = p.amplitude * std::sin(2.0 * std::numbers::pi * p.frequency * t + p.phase);
  }
  return s;
}

inline Dataset synth_sines(const SinesSpec& spec) {
  Dataset d{1, {"value"}, {}, {}};
  const auto params = draw_sine_params(spec);
  for (std::size_t i = 0; i < params.size(); ++i) d.push(sine_sequence(params[i], spec.length), std::to_string(i));
  return d;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
  std::vector<std::string> columns;  // empty: every column except the id column
  std::optional<std::string> id_column;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::optional<double> parse_real(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a headed CSV. Rows sharing an id form one sequence, in order of first
/// appearance; without an id column the file is one sequence. Data rows are
/// numbered from 1 after the header in error messages.
inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV file '" + path.string() + "' has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  auto find = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("CSV file '" + path.string() + "' is missing column \"" + name + "\"");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::optional<std::size_t> id_idx;
  if (schema.id_column) id_idx = find(*schema.id_column);
  std::vector<std::size_t> feat_idx;
  std::vector<std::string> names;
  if (schema.columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (id_idx && i == *id_idx) continue;
      feat_idx.push_back(i);
      names.push_back(header[i]);
    }
  } else {
    for (const auto& c : schema.columns) {
      feat_idx.push_back(find(c));
      names.push_back(c);
    }
  }
  if (feat_idx.empty()) throw DataError("CSV file '" + path.string() + "' has no feature columns");

  Dataset d{feat_idx.size(), names, {}, {}};
  std::map<std::string, std::size_t> slot;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    const std::string id = id_idx ? cells[*id_idx] : std::string("0");
    auto [it, inserted] = slot.emplace(id, d.sequences.size());
    if (inserted) d.push(Sequence{}, id);
    auto& seq = d.sequences[it->second];
    for (std::size_t k = 0; k < feat_idx.size(); ++k) {
      const auto v = detail::parse_real(cells[feat_idx[k]]);
      if (!v) {
        throw DataError("unparseable value \"" + cells[feat_idx[k]] + "\" at (row " + std::to_string(row) +
                        ", column \"" + names[k] + "\")");
      }
      seq.values.push_back(*v);
    }
    ++seq.length;
  }
  if (d.empty()) throw DataError("CSV file '" + path.string() + "' has no data rows");
  return d;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

/// Writes sequences as rows of (seq_id, features...), mirroring load_csv.
inline void write_csv(const std::filesystem::path& path, const Dataset& d, const std::string& id_column = "seq_id") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  out << id_column;
  for (const auto& n : d.feature_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& s = d.sequences[i];
    for (std::size_t t = 0; t < s.length; ++t) {
      out << d.ids[i];
      for (std::size_t f = 0; f < d.dim; ++f) out << ',' << format_real(s.at(t, f, d.dim));
      out << '\n';
    }
  }
  if (!out) throw DataError("failed writing CSV file '" + path.string() + "'");
}

/// Overlapping windows [i*stride, i*stride + length) of one sequence.
inline Dataset slice_windows(const Sequence& series, std::size_t dim, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0) throw DataError("slice_windows: length and stride must be positive");
  if (series.length < length) {
    throw DataError("slice_windows: series of length " + std::to_string(series.length) +
                    " is shorter than window " + std::to_string(length));
  }
  Dataset d;
  d.dim = dim;
  const std::size_t count = (series.length - length) / stride + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const auto begin = series.values.begin() + static_cast<std::ptrdiff_t>(i * stride * dim);
    d.push(Sequence{length, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(length * dim))},
           std::to_string(i));
  }
  return d;
}

/// Windows every sequence of a dataset; sequences shorter than the window are
/// an error.
inline Dataset slice_windows(const Dataset& src, std::size_t length, std::size_t stride) {
  Dataset out{src.dim, src.feature_names, {}, {}};
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto w = slice_windows(src.sequences[i], src.dim, length, stride);
    for (std::size_t k = 0; k < w.size(); ++k) out.push(std::move(w.sequences[k]), src.ids[i] + ":" + w.ids[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-feature affine map of [min, max] onto [-1, 1].
struct Normalizer {
  std::vector<double> min;
  std::vector<double> max;

  static constexpr double kMinSpan = 1e-8;

  std::size_t dim() const { return min.size(); }
  double apply(double x, std::size_t f) const { return 2.0 * (x - min[f]) / (max[f] - min[f]) - 1.0; }
  double invert(double y, std::size_t f) const { return (y + 1.0) * 0.5 * (max[f] - min[f]) + min[f]; }

  Dataset apply(const Dataset& d) const { return map(d, [this](double x, std::size_t f) { return apply(x, f); }); }
  Dataset invert(const Dataset& d) const { return map(d, [this](double y, std::size_t f) { return invert(y, f); }); }

 private:
  template <typename F>
  Dataset map(const Dataset& d, F f) const {
    if (d.dim != dim()) {
      throw ShapeError("normalizer of dimension " + std::to_string(dim()) + " applied to data of dimension " +
                       std::to_string(d.dim));
    }
    Dataset out = d;
    for (auto& s : out.sequences) {
      for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = f(s.values[i], i % d.dim);
    }
    return out;
  }
};

inline Normalizer fit_normalizer(const Dataset& d) {
  if (d.empty()) throw DataError("fit_normalizer: empty dataset");
  Normalizer n{std::vector<double>(d.dim, std::numeric_limits<double>::infinity()),
               std::vector<double>(d.dim, -std::numeric_limits<double>::infinity())};
  for (const auto& s : d.sequences) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const std::size_t f = i % d.dim;
      n.min[f] = std::min(n.min[f], s.values[i]);
      n.max[f] = std::max(n.max[f], s.values[i]);
    }
  }
  for (std::size_t f = 0; f < d.dim; ++f) {
    if (n.max[f] - n.min[f] < Normalizer::kMinSpan) {
      const double mid = 0.5 * (n.max[f] + n.min[f]);
      // A power-of-two half span keeps mid -/+ half exact, so mid maps to 0.
      const double half = std::exp2(std::ceil(std::log2(0.5 * std::max(Normalizer::kMinSpan, std::abs(mid) * 1e-6))));
      n.min[f] = mid - half;
      n.max[f] = mid + half;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Batching

/// Padded batch: values are batch x max_len x dim with zeros past each length.
struct SeqBatch {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> mask;  // batch x max_len
  std::vector<std::size_t> ids;    // source indices

  double at(std::size_t b, std::size_t t, std::size_t f) const { return values[(b * max_len + t) * dim + f]; }
  bool valid(std::size_t b, std::size_t t) const { return mask[b * max_len + t] != 0; }
};

inline SeqBatch make_batch(const Dataset& d, const std::vector<std::size_t>& indices) {
  SeqBatch b;
  b.batch = indices.size();
  b.dim = d.dim;
  for (auto i : indices) b.max_len = std::max(b.max_len, d.sequences[i].length);
  b.values.assign(b.batch * b.max_len * b.dim, 0.0);
  b.mask.assign(b.batch * b.max_len, 0);
  b.ids = indices;
  for (std::size_t r = 0; r < b.batch; ++r) {
    const auto& s = d.sequences[indices[r]];
    b.lengths.push_back(s.length);
    std::copy(s.values.begin(), s.values.end(),
              b.values.begin() + static_cast<std::ptrdiff_t>(r * b.max_len * b.dim));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(r * b.max_len), s.length, std::uint8_t{1});
  }
  return b;
}

/// Splits a shuffled permutation of [0, n) into consecutive batches.
template <typename Rng>
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractViolation("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

/// Yields one shuffled epoch of padded batches.
class BatchIterator {
 public:
  BatchIterator(const Dataset& d, std::size_t batch_size, std::uint64_t seed) : data_(&d) {
    std::mt19937_64 rng(seed);
    batches_ = epoch_batches(d.size(), batch_size, rng);
  }

  std::optional<SeqBatch> next() {
    if (pos_ >= batches_.size()) return std::nullopt;
    return make_batch(*data_, batches_[pos_++]);
  }

  std::size_t count() const { return batches_.size(); }

 private:
  const Dataset* data_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t pos_ = 0;
};

/// Batch of per-step batch x dim tensors.
template <typename T>
std::vector<Tensor<T>> batch_steps(const SeqBatch& b) {
  std::vector<Tensor<T>> steps;
  steps.reserve(b.max_len);
  for (std::size_t t = 0; t < b.max_len; ++t) {
    std::vector<T> v(b.batch * b.dim);
    for (std::size_t r = 0; r < b.batch; ++r) {
      for (std::size_t f = 0; f < b.dim; ++f) v[r * b.dim + f] = static_cast<T>(b.at(r, t, f));
    }
    steps.push_back(Tensor<T>::from({b.batch, b.dim}, std::move(v)));
  }
  return steps;
}

}  // namespace fetsgan
