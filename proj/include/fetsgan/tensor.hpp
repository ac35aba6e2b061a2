// Dense tensors with a reverse-mode differentiation graph.
//
// A Tensor is a shared handle to a graph node. Ops create new nodes that
// remember their parents and a backward closure; backward() walks the graph in
// reverse topological order. Leaves (parameters) accumulate gradients across
// calls until zero_grad().
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace fetsgan {

using Shape = std::vector<std::size_t>;

/// Tensor storage. Eigen handles an unaligned head of a buffer with scalar
/// code, so aligning every buffer keeps results independent of heap layout.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }

  // Long recurrent chains would otherwise recurse once per node on teardown.
  ~Node() {
    std::vector<std::shared_ptr<Node>> pending = std::move(parents);
    while (!pending.empty()) {
      std::shared_ptr<Node> n = std::move(pending.back());
      pending.pop_back();
      if (n && n.use_count() == 1) {
        for (auto& p : n->parents) pending.push_back(std::move(p));
        n->parents.clear();
      }
    }
  }
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> data(numel(shape), T(0));
    return from(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    std::vector<T> data(numel(shape), fill);
    return from(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor from(Shape shape, const std::vector<T>& data, bool requires_grad = false) {
    return from_buffer(std::move(shape), Buffer<T>(data.begin(), data.end()), requires_grad);
  }

  static Tensor from_buffer(Shape shape, Buffer<T> data, bool requires_grad = false) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != data.size()) {
      throw ShapeError("shape " + shape_str(shape) + " does not hold " +
                       std::to_string(data.size()) + " values");
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return node_->shape.back(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  const Buffer<T>& values() const { return node_->value; }
  std::vector<T> to_vector() const { return {node_->value.begin(), node_->value.end()}; }
  T item() const {
    if (size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  /// New leaf sharing no graph history with this tensor.
  Tensor detach() const { return from(shape(), to_vector(), false); }

  /// Deep copy of a leaf, keeping its requires_grad flag.
  Tensor clone() const { return from(shape(), to_vector(), requires_grad()); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto out = Tensor<T>::from_buffer(std::move(shape), std::move(value), false);
  if (grad_disabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& t : inputs) node.parents.push_back(t.node());
  node.backward = std::move(backward);
  return out;
}

template <typename T>
Tensor<T> make_result(Shape shape, const std::vector<T>& value, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  return make_result<T>(std::move(shape), Buffer<T>(value.begin(), value.end()), std::move(inputs),
                        std::move(backward));
}

// Parent i participates in differentiation.
template <typename T>
Node<T>* grad_target(Node<T>& self, std::size_t i) {
  Node<T>* p = self.parents[i].get();
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> as_matrix(Buffer<T>& v, std::size_t r, std::size_t c) {
  return Eigen::Map<RowMat<T>>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
Eigen::Map<const RowMat<T>> as_matrix(const Buffer<T>& v, std::size_t r, std::size_t c) {
  return Eigen::Map<const RowMat<T>>(v.data(), static_cast<Eigen::Index>(r),
                                     static_cast<Eigen::Index>(c));
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": left operand " + shape_str(a.shape()) +
                     " does not match right operand " + shape_str(b.shape()));
  }
}

template <typename T>
void require_matrix(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D operand, got " + shape_str(a.shape()));
  }
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df_from_out) {
  std::vector<T> out(a.size());
  const auto& in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [df_from_out](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        p->grad[i] += self.grad[i] * df_from_out(p->value[i], self.value[i]);
      }
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = detail::grad_target(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
    if (auto* p = detail::grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * bv[i];
    }
    if (auto* p = detail::grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [factor](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T shift) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + shift;
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

/// Adds a length-n bias to every row of an m x n matrix.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  detail::require_matrix("add_bias", a);
  if (bias.size() != a.cols()) {
    throw ShapeError("add_bias: matrix " + shape_str(a.shape()) + " incompatible with bias " +
                     shape_str(bias.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a[r * n + c] + bias[c];
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a, bias}, [m, n](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
    if (auto* p = detail::grad_target(self, 1)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) p->grad[c] += self.grad[r * n + c];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); },
                       [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                       [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: left operand " + shape_str(a.shape()) + " and right operand " +
                     shape_str(b.shape()) + " have incompatible inner dimensions");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Buffer<T> out(m * n);
  detail::as_matrix(out, m, n).noalias() =
      detail::as_matrix(a.values(), m, k) * detail::as_matrix(b.values(), k, n);
  return detail::make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    const auto g = detail::as_matrix(std::as_const(self.grad), m, n);
    if (auto* p = detail::grad_target(self, 0)) {
      detail::as_matrix(p->grad, m, k).noalias() +=
          g * detail::as_matrix(std::as_const(self.parents[1]->value), k, n).transpose();
    }
    if (auto* p = detail::grad_target(self, 1)) {
      detail::as_matrix(p->grad, k, n).noalias() +=
          detail::as_matrix(std::as_const(self.parents[0]->value), m, k).transpose() * g;
    }
  });
}

/// Concatenates 2-D tensors with equal row counts along the last axis.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix("concat", p);
    if (p.rows() != m) {
      throw ShapeError("concat: operand " + shape_str(p.shape()) + " does not match operand " +
                       shape_str(parts.front().shape()) + " in row count");
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].values();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[k];
  }
  return detail::make_result<T>({m, total}, std::move(out), parts,
                                [m, total, widths](detail::Node<T>& self) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < widths.size(); ++k) {
                                    if (auto* p = detail::grad_target(self, k)) {
                                      for (std::size_t r = 0; r < m; ++r) {
                                        for (std::size_t c = 0; c < widths[k]; ++c) {
                                          p->grad[r * widths[k] + c] += self.grad[r * total + off + c];
                                        }
                                      }
                                    }
                                    off += widths[k];
                                  }
                                });
}

/// Columns [begin, end) of a 2-D tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require_matrix("slice_cols", a);
  if (begin >= end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for operand " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<T> out(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = a[r * n + begin + c];
  }
  return detail::make_result<T>({m, w}, std::move(out), {a}, [m, n, w, begin](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < w; ++c) p->grad[r * n + begin + c] += self.grad[r * w + c];
      }
    }
  });
}

/// Rows [begin, end) of a 2-D tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require_matrix("slice_rows", a);
  if (begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for operand " + shape_str(a.shape()));
  }
  const std::size_t n = a.cols();
  std::vector<T> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                     a.values().begin() + static_cast<std::ptrdiff_t>(end * n));
  return detail::make_result<T>({end - begin, n}, std::move(out), {a}, [begin, n](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[begin * n + i] += self.grad[i];
    }
  });
}

/// Stacks 2-D tensors with equal column counts along the first axis.
template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractViolation("stack_rows: no operands");
  const std::size_t n = parts.front().cols();
  std::vector<std::size_t> offsets;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_matrix("stack_rows", p);
    if (p.cols() != n) {
      throw ShapeError("stack_rows: operand " + shape_str(p.shape()) + " does not match operand " +
                       shape_str(parts.front().shape()) + " in column count");
    }
    offsets.push_back(rows * n);
    rows += p.rows();
  }
  std::vector<T> out;
  out.reserve(rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return detail::make_result<T>({rows, n}, std::move(out), parts, [offsets](detail::Node<T>& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (auto* p = detail::grad_target(self, k)) {
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[offsets[k] + i];
      }
    }
  });
}

/// Splits the rows of a 2-D tensor into `count` equal consecutive blocks.
template <typename T>
std::vector<Tensor<T>> split_rows(const Tensor<T>& a, std::size_t count) {
  detail::require_matrix("split_rows", a);
  if (count == 0 || a.rows() % count != 0) {
    throw ShapeError("split_rows: " + shape_str(a.shape()) + " cannot be split into " + std::to_string(count) +
                     " blocks");
  }
  const std::size_t b = a.rows() / count;
  std::vector<Tensor<T>> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(slice_rows(a, k * b, (k + 1) * b));
  return out;
}

/// Tiles a 2-D tensor `times` times along the first axis.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& a, std::size_t times) {
  detail::require_matrix("repeat_rows", a);
  if (times == 0) throw ShapeError("repeat_rows: times must be positive");
  std::vector<T> out;
  out.reserve(a.size() * times);
  for (std::size_t k = 0; k < times; ++k) out.insert(out.end(), a.values().begin(), a.values().end());
  return detail::make_result<T>({a.rows() * times, a.cols()}, std::move(out), {a}, [times](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      const std::size_t n = p->grad.size();
      for (std::size_t k = 0; k < times; ++k) {
        for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[k * n + i];
      }
    }
  });
}

/// Row-wise select: row r of the result is a's row when keep[r], else b's.
template <typename T>
Tensor<T> where_rows(const std::vector<std::uint8_t>& keep, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("where_rows", a, b);
  detail::require_matrix("where_rows", a);
  if (keep.size() != a.rows()) {
    throw ShapeError("where_rows: selector of length " + std::to_string(keep.size()) +
                     " for operand " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const auto& src = keep[r] ? a.values() : b.values();
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [keep, n](detail::Node<T>& self) {
    auto* pa = detail::grad_target(self, 0);
    auto* pb = detail::grad_target(self, 1);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      auto* p = keep[r] ? pa : pb;
      if (!p) continue;
      for (std::size_t c = 0; c < n; ++c) p->grad[r * n + c] += self.grad[r * n + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.values()) s += v;
  return detail::make_result<T>({1}, Buffer<T>{s}, {a}, [](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      for (auto& g : p->grad) g += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.values()) s += v * v;
  return detail::make_result<T>({1}, Buffer<T>{s}, {a}, [](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      const auto& av = self.parents[0]->value;
      for (std::size_t i = 0; i < av.size(); ++i) p->grad[i] += T(2) * av[i] * self.grad[0];
    }
  });
}

/// Mean over the last axis of a 2-D tensor, giving an m x 1 column.
template <typename T>
Tensor<T> mean_cols(const Tensor<T>& a) {
  detail::require_matrix("mean_cols", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m, T(0));
  for (std::size_t r = 0; r < m; ++r) {
    T s = T(0);
    for (std::size_t c = 0; c < n; ++c) s += a[r * n + c];
    out[r] = s / static_cast<T>(n);
  }
  return detail::make_result<T>({m, 1}, std::move(out), {a}, [m, n](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      const T inv = T(1) / static_cast<T>(n);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) p->grad[r * n + c] += self.grad[r] * inv;
      }
    }
  });
}

/// Mean binary cross-entropy between logits and {0,1} targets, computed stably.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets) {
  if (targets.size() != logits.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits[i];
    s += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return detail::make_result<T>({1}, Buffer<T>{s / static_cast<T>(n)}, {logits}, [targets, n](detail::Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < n; ++i) {
        const T x = xv[i];
        const T sig = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        p->grad[i] += self.grad[0] * (sig - targets[i]) / static_cast<T>(n);
      }
    }
  });
}

// ---------------------------------------------------------------------------

/// Differentiates a scalar loss, accumulating into every reachable leaf that
/// requires grad. Interior gradients are reset on each call.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (NodeT* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  NodeT* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

}  // namespace fetsgan
