#pragma once

// Differentiable tensor operations. Every op takes the tape first; when the
// tape is disabled or no input requires a gradient, nothing is recorded.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hbmp/random.hpp"
#include "hbmp/tensor.hpp"

namespace hbmp {

namespace test_hooks {
/// Sentinel hook: when set, the weight gradient of linear() is deliberately
/// wrong. Exists only so gradient-check failure paths can be exercised.
inline std::atomic<bool> corrupt_linear_backward{false};
}  // namespace test_hooks

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
}

template <typename F, typename D>
Tensor unary(Tape& tape, const Tensor& x, const char* name, F f, D dfdx) {
  Tensor y = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = f(xd[i]);
  if (tape.tracks({&x})) {
    tape.record(name, {x}, {y}, [x, y, dfdx]() mutable {
      auto gy = y.grad();
      auto gx = x.grad();
      auto xd = x.data();
      auto yd = y.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx(xd[i], yd[i]);
    });
  }
  return y;
}

}  // namespace detail

/// C = A·B for A[m×k], B[k×n].
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  Tensor c = Tensor::zeros({m, n});
  auto ad = a.data();
  auto bd = b.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      for (std::size_t j = 0; j < n; ++j) cd[i * n + j] += av * bd[p * n + j];
    }
  if (tape.tracks({&a, &b})) {
    tape.record("matmul", {a, b}, {c}, [a, b, c, m, k, n]() mutable {
      auto gc = c.grad();
      auto ad = a.data();
      auto bd = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gc[i * n + j] * bd[p * n + j];
            ga[i * k + p] += s;
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * gc[i * n + j];
          }
      }
    });
  }
  return c;
}

/// y = x·Wᵀ + bias for x[batch×in], W[out×in], bias[out] (bias may be undefined).
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias = {}) {
  detail::require_rank(x, 2, "linear");
  detail::require_rank(w, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in)
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  if (bias.defined() && bias.numel() != out)
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  Tensor y = Tensor::zeros({rows, out});
  auto xd = x.data();
  auto wd = w.data();
  auto yd = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xd[r * in];
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = &wd[o * in];
      double s = bias.defined() ? bias[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wo[i];
      yd[r * out + o] = s;
    }
  }
  if (tape.tracks({&x, &w, &bias})) {
    std::vector<Tensor> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    tape.record("linear", std::move(inputs), {y}, [x, w, bias, y, rows, in, out]() mutable {
      auto gy = y.grad();
      auto xd = x.data();
      auto wd = w.data();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < out; ++o) {
            const double g = gy[r * out + o];
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += g * wd[o * in + i];
          }
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
        const double scale = test_hooks::corrupt_linear_backward ? 1.5 : 1.0;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < out; ++o) {
            const double g = gy[r * out + o] * scale;
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += g * xd[r * in + i];
          }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < out; ++o) gb[o] += gy[r * out + o];
      }
    });
  }
  return y;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a[i] + b[i];
  if (tape.tracks({&a, &b})) {
    tape.record("add", {a, b}, {y}, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < gy.size(); ++i) a.grad()[i] += gy[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < gy.size(); ++i) b.grad()[i] += gy[i];
    });
  }
  return y;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a[i] - b[i];
  if (tape.tracks({&a, &b})) {
    tape.record("sub", {a, b}, {y}, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < gy.size(); ++i) a.grad()[i] += gy[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < gy.size(); ++i) b.grad()[i] -= gy[i];
    });
  }
  return y;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a[i] * b[i];
  if (tape.tracks({&a, &b})) {
    tape.record("mul", {a, b}, {y}, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a[i];
      }
    });
  }
  return y;
}

/// Backward uses sign(x), which is 0 at x = 0.
inline Tensor abs(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "sigmoid", [](double v) { return sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline constexpr double kLeakySlope = 0.01;

/// max(0, x) + slope·min(0, x). The subgradient at exactly 0 is taken as 1.
inline Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = kLeakySlope) {
  return detail::unary(
      tape, x, "leaky_relu",
      [slope](double v) { return std::max(0.0, v) + slope * std::min(0.0, v); },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

inline Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return detail::unary(
      tape, x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

/// Sum of all elements, as a scalar tensor.
inline Tensor sum(Tape& tape, const Tensor& x) {
  Tensor y = Tensor::zeros({1});
  double s = 0.0;
  for (double v : x.data()) s += v;
  y[0] = s;
  if (tape.tracks({&x})) {
    tape.record("sum", {x}, {y}, [x, y]() mutable {
      const double g = y.grad()[0];
      for (auto& gx : x.grad()) gx += g;
    });
  }
  return y;
}

/// Concatenation along `axis`; all other dimensions must agree.
inline Tensor concat(Tape& tape, const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d)
      if (d != axis && p.dim(d) != first[d]) ok = false;
    if (!ok)
      throw DimensionError("concat: shape mismatch " + shape_str(first) + " vs " +
                           shape_str(p.shape()));
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t row = out_shape[axis] * inner;

  Tensor y = Tensor::zeros(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data().begin() + o * w, w, y.data().begin() + o * row + off);
    off += w;
  }
  if (tape.tracks(std::span<const Tensor>(parts))) {
    tape.record("concat", parts, {y}, [parts, y, offsets, outer, inner, row, axis]() mutable {
      auto gy = y.grad();
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (!parts[k].requires_grad()) continue;
        auto gp = parts[k].grad();
        const std::size_t w = parts[k].dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < w; ++i) gp[o * w + i] += gy[o * row + offsets[k] + i];
      }
    });
  }
  return y;
}

/// Row-wise softmax of a [rows×C] tensor (no gradient).
inline Tensor softmax_rows(const Tensor& logits) {
  detail::require_rank(logits, 2, "softmax");
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  Tensor p = Tensor::zeros(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[r * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits[r * c + j] - mx);
    for (std::size_t j = 0; j < c; ++j) p[r * c + j] = std::exp(logits[r * c + j] - mx) / z;
  }
  return p;
}

/// Per-row −log softmax(logits)[label], without averaging.
inline std::vector<double> cross_entropy_per_row(const Tensor& logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  if (labels.size() != rows)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= c)
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(c) + ")");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[r * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits[r * c + j] - mx);
    out[r] = -(logits[r * c + label] - mx - std::log(z));
  }
  return out;
}

/// Mean softmax cross-entropy over the batch.
inline Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  const auto per_row = cross_entropy_per_row(logits, labels);
  double total = 0.0;
  for (double v : per_row) total += v;
  const std::size_t rows = per_row.size();
  Tensor loss = Tensor::scalar(total / static_cast<double>(rows));
  if (tape.tracks({&logits})) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape.record("softmax_cross_entropy", {logits}, {loss}, [logits, loss, lab, rows]() mutable {
      const double g = loss.grad()[0] / static_cast<double>(rows);
      Tensor p = softmax_rows(logits);
      const std::size_t c = logits.dim(1);
      auto gl = logits.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j)
          gl[r * c + j] += g * (p[r * c + j] - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
    });
  }
  return loss;
}

/// Keep-mask with entries 1/(1−p) (kept) or 0 (dropped).
inline std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng) {
  std::vector<double> mask(n);
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  return mask;
}

/// Inverted dropout; the identity when not training or p = 0.
inline Tensor dropout(Tape& tape, const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || p == 0.0) return x;
  auto mask = dropout_mask(x.numel(), p, rng);
  Tensor y = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] * mask[i];
  if (tape.tracks({&x})) {
    tape.record("dropout", {x}, {y}, [x, y, mask]() mutable {
      auto gy = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }
  return y;
}

/// Gathers rows of table[V×E] for ids laid out [batch×steps]; result is
/// [batch×steps×E]. Row 0 (padding) never receives a gradient.
inline Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids,
                               std::size_t batch, std::size_t steps) {
  detail::require_rank(table, 2, "embedding_lookup");
  if (ids.size() != batch * steps)
    throw DimensionError("embedding_lookup: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(batch) + "x" + std::to_string(steps));
  const std::size_t vocab = table.dim(0), e = table.dim(1);
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab));
  Tensor y = Tensor::zeros({batch, steps, e});
  for (std::size_t k = 0; k < ids.size(); ++k)
    std::copy_n(table.data().begin() + ids[k] * e, e, y.data().begin() + k * e);
  if (tape.tracks({&table})) {
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    tape.record("embedding_lookup", {table}, {y}, [table, y, idv, e]() mutable {
      auto gy = y.grad();
      auto gt = table.grad();
      for (std::size_t k = 0; k < idv.size(); ++k) {
        if (idv[k] == 0) continue;
        for (std::size_t j = 0; j < e; ++j) gt[idv[k] * e + j] += gy[k * e + j];
      }
    });
  }
  return y;
}

/// X[batch×T×D] → X[:, t, :] as [batch×D].
inline Tensor time_step(Tape& tape, const Tensor& x, std::size_t t) {
  detail::require_rank(x, 3, "time_step");
  const std::size_t b = x.dim(0), steps = x.dim(1), d = x.dim(2);
  if (t >= steps) throw DimensionError("time_step: t out of range for " + shape_str(x.shape()));
  Tensor y = Tensor::zeros({b, d});
  for (std::size_t i = 0; i < b; ++i)
    std::copy_n(x.data().begin() + (i * steps + t) * d, d, y.data().begin() + i * d);
  if (tape.tracks({&x})) {
    tape.record("time_step", {x}, {y}, [x, y, b, steps, d, t]() mutable {
      auto gy = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[(i * steps + t) * d + j] += gy[i * d + j];
    });
  }
  return y;
}

/// Stacks T tensors of shape [batch×D] into [batch×T×D].
inline Tensor stack_time(Tape& tape, const std::vector<Tensor>& steps) {
  if (steps.empty()) throw DimensionError("stack_time: no steps");
  const std::size_t b = steps[0].dim(0), d = steps[0].dim(1), t_len = steps.size();
  for (const auto& s : steps) detail::require_same_shape(s, steps[0], "stack_time");
  Tensor y = Tensor::zeros({b, t_len, d});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(steps[t].data().begin() + i * d, d, y.data().begin() + (i * t_len + t) * d);
  if (tape.tracks(std::span<const Tensor>(steps))) {
    tape.record("stack_time", steps, {y}, [steps, y, b, d, t_len]() mutable {
      auto gy = y.grad();
      for (std::size_t t = 0; t < t_len; ++t) {
        if (!steps[t].requires_grad()) continue;
        auto gs = steps[t].grad();
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) gs[i * d + j] += gy[(i * t_len + t) * d + j];
      }
    });
  }
  return y;
}

/// v[D] repeated as [rows×D].
inline Tensor broadcast_rows(Tape& tape, const Tensor& v, std::size_t rows) {
  const std::size_t d = v.numel();
  Tensor y = Tensor::zeros({rows, d});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data().begin(), d, y.data().begin() + r * d);
  if (tape.tracks({&v})) {
    tape.record("broadcast_rows", {v}, {y}, [v, y, rows, d]() mutable {
      auto gy = y.grad();
      auto gv = v.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gv[j] += gy[r * d + j];
    });
  }
  return y;
}

}  // namespace hbmp
