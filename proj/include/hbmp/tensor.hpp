#pragma once

// Dense row-major tensors and the define-by-run gradient tape.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hbmp {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Handle to shared tensor storage. Copies alias the same buffer; use clone()
/// for an independent value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor dimension must be positive: " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->data.assign(shape_numel(shape), 0.0);
    t.impl_->shape = std::move(shape);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw DimensionError("tensor " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    Tensor t = zeros(std::move(shape), requires_grad);
    t.impl_->data = std::move(values);
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool r) { impl_->requires_grad = r; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Allocates a zero gradient buffer on first use. Tensors are handles, so
  /// this is available through const references too.
  std::span<double> grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }
  /// The gradient buffer without allocating; empty when none exists.
  std::span<const double> grad_view() const { return impl_->grad; }
  void zero_grad() const { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& o) const noexcept { return impl_ == o.impl_; }

  /// Index of the tape node that produced this tensor, or -1 for leaves.
  long producer() const { return impl_->producer; }

 private:
  friend class Tape;
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    long producer = -1;
  };
  std::shared_ptr<Impl> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

/// Ordered record of differentiable operations for one forward pass.
///
/// Each record owns a backward closure that reads its outputs' gradients and
/// accumulates into its inputs' gradients. backward() replays records in
/// reverse, which is a valid reverse topological order because inputs are
/// always recorded before the operations that consume them.
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const noexcept { return enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// True when an op over these inputs has to be recorded.
  bool tracks(std::initializer_list<const Tensor*> inputs) const {
    if (!enabled_) return false;
    for (auto* t : inputs)
      if (t->defined() && t->requires_grad()) return true;
    return false;
  }
  bool tracks(std::span<const Tensor> inputs) const {
    if (!enabled_) return false;
    for (auto& t : inputs)
      if (t.requires_grad()) return true;
    return false;
  }

  void record(std::string_view op, std::vector<Tensor> inputs, std::vector<Tensor> outputs,
              std::function<void()> backward) {
    const long index = static_cast<long>(nodes_.size());
    for (auto& in : inputs)
      if (in.impl_->producer >= index)
        throw std::logic_error("tape order violated by op " + std::string(op));
    for (auto& out : outputs) {
      out.impl_->producer = index;
      out.impl_->requires_grad = true;
    }
    nodes_.push_back(Node{std::string(op), std::move(inputs), std::move(outputs), std::move(backward)});
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor.
  void backward(Tensor loss) {
    if (loss.numel() != 1)
      throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      bool any = false;
      for (auto& out : it->outputs) any = any || out.has_grad();
      if (any) it->backward();
    }
  }

  void clear() { nodes_.clear(); }

  const std::string& op_name(std::size_t i) const { return nodes_.at(i).op; }

 private:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    std::vector<Tensor> outputs;
    std::function<void()> backward;
  };
  bool enabled_;
  std::vector<Node> nodes_;
};

}  // namespace hbmp
