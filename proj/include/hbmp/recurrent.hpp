#pragma once

// LSTM cell, bidirectional LSTM over padded batches, and masked temporal max
// pooling.
//
// Gate layout inside the stacked weights is (input, forget, cell candidate,
// output), each block H rows tall:
//   i = σ(a_i)  f = σ(a_f)  g = tanh(a_g)  o = σ(a_o),  a = W_x·x + W_h·h + b
//   c' = f∘c + i∘g,  h' = o∘tanh(c')

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hbmp/ops.hpp"
#include "hbmp/random.hpp"
#include "hbmp/tensor.hpp"

namespace hbmp {

struct LstmParams {
  Tensor w_x;   // [4H×E]
  Tensor w_h;   // [4H×H]
  Tensor bias;  // [4H]

  std::size_t hidden() const { return w_h.dim(1); }
  std::size_t input_size() const { return w_x.dim(1); }

  static LstmParams zeros(std::size_t input, std::size_t hidden) {
    return {Tensor::zeros({4 * hidden, input}, true), Tensor::zeros({4 * hidden, hidden}, true),
            Tensor::zeros({4 * hidden}, true)};
  }

  /// Weights uniform on (−1/√H, 1/√H); forget-gate bias 1, other biases 0.
  static LstmParams init(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p = zeros(input, hidden);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& v : p.w_x.data()) v = rng.uniform(-bound, bound);
    for (auto& v : p.w_h.data()) v = rng.uniform(-bound, bound);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) p.bias[j] = 1.0;
    return p;
  }

  void validate() const {
    const std::size_t h = w_h.dim(1);
    if (w_x.rank() != 2 || w_h.rank() != 2 || w_x.dim(0) != 4 * h || w_h.dim(0) != 4 * h ||
        bias.numel() != 4 * h)
      throw DimensionError("inconsistent LSTM parameters: w_x " + shape_str(w_x.shape()) + ", w_h " +
                           shape_str(w_h.shape()) + ", bias " + shape_str(bias.shape()));
  }

  void append_to(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w_x", w_x});
    out.push_back({prefix + ".w_h", w_h});
    out.push_back({prefix + ".bias", bias});
  }
};

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  static BiLstmParams zeros(std::size_t input, std::size_t hidden) {
    return {LstmParams::zeros(input, hidden), LstmParams::zeros(input, hidden)};
  }
  static BiLstmParams init(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams f = LstmParams::init(input, hidden, rng);
    LstmParams b = LstmParams::init(input, hidden, rng);
    return {std::move(f), std::move(b)};
  }
  std::size_t hidden() const { return forward.hidden(); }
  void append_to(ParamList& out, const std::string& prefix) const {
    forward.append_to(out, prefix + ".fwd");
    backward.append_to(out, prefix + ".bwd");
  }
};

/// Hidden and cell state of one direction, each [batch×H].
struct StatePair {
  Tensor h;
  Tensor c;

  static StatePair zeros(std::size_t batch, std::size_t hidden) {
    return {Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
  }
};

/// Padded token ids [batch×steps] with per-row true lengths. Pad id is 0.
struct SentenceBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::int32_t> token_ids;
  std::vector<std::size_t> lengths;

  bool mask(std::size_t row, std::size_t t) const { return t < lengths[row]; }

  /// Pads every sequence to max(longest, min_steps).
  static SentenceBatch from_sequences(const std::vector<std::vector<std::int32_t>>& seqs,
                                      std::size_t min_steps = 0) {
    if (seqs.empty()) throw std::invalid_argument("SentenceBatch: no sequences");
    SentenceBatch b;
    b.batch = seqs.size();
    b.steps = min_steps;
    for (const auto& s : seqs) {
      if (s.empty()) throw std::invalid_argument("SentenceBatch: zero-length sentence");
      b.steps = std::max(b.steps, s.size());
    }
    b.token_ids.assign(b.batch * b.steps, 0);
    for (std::size_t i = 0; i < b.batch; ++i) {
      b.lengths.push_back(seqs[i].size());
      std::copy(seqs[i].begin(), seqs[i].end(), b.token_ids.begin() + i * b.steps);
    }
    return b;
  }

  /// Same sentences with `extra` additional pad steps.
  SentenceBatch padded(std::size_t extra) const {
    SentenceBatch b;
    b.batch = batch;
    b.steps = steps + extra;
    b.lengths = lengths;
    b.token_ids.assign(b.batch * b.steps, 0);
    for (std::size_t i = 0; i < batch; ++i)
      std::copy_n(token_ids.begin() + i * steps, steps, b.token_ids.begin() + i * b.steps);
    return b;
  }

  /// Row i as a singleton batch without padding.
  SentenceBatch row(std::size_t i) const {
    std::vector<std::int32_t> s(token_ids.begin() + i * steps,
                                token_ids.begin() + i * steps + lengths[i]);
    return from_sequences({s});
  }
};

namespace detail {

inline void check_lengths(std::span<const std::size_t> lengths, std::size_t batch, std::size_t steps) {
  if (lengths.size() != batch)
    throw DimensionError("expected " + std::to_string(batch) + " lengths, got " +
                         std::to_string(lengths.size()));
  for (auto len : lengths) {
    if (len == 0) throw std::invalid_argument("zero-length sentence in batch");
    if (len > steps)
      throw DimensionError("sentence length " + std::to_string(len) + " exceeds " +
                           std::to_string(steps) + " steps");
  }
}

}  // namespace detail

/// One LSTM step. Rows with active[r] == 0 carry their state through
/// unchanged (their inputs are still read but have no effect). An empty
/// `active` means every row is active.
inline StatePair lstm_step(Tape& tape, const Tensor& x, const StatePair& state, const LstmParams& p,
                           std::span<const std::uint8_t> active = {}) {
  const std::size_t b = x.dim(0), e = p.input_size(), hd = p.hidden(), g4 = 4 * hd;
  if (x.rank() != 2 || x.dim(1) != e)
    throw DimensionError("lstm_cell: input " + shape_str(x.shape()) + " vs input size " +
                         std::to_string(e));
  if (state.h.shape() != Shape{b, hd} || state.c.shape() != Shape{b, hd})
    throw DimensionError("lstm_cell: state " + shape_str(state.h.shape()) + "/" +
                         shape_str(state.c.shape()) + " vs expected [" + std::to_string(b) + "," +
                         std::to_string(hd) + "]");
  if (!active.empty() && active.size() != b) throw DimensionError("lstm_cell: mask size mismatch");

  auto is_active = [&](std::size_t r) { return active.empty() || active[r] != 0; };

  // acts holds i, f, g, o after their nonlinearities; tc holds tanh(c').
  std::vector<double> acts(b * g4, 0.0), tc(b * hd, 0.0);
  Tensor h_out = Tensor::zeros({b, hd});
  Tensor c_out = Tensor::zeros({b, hd});
  auto xd = x.data();
  auto hd_in = state.h.data();
  auto cd_in = state.c.data();
  auto wx = p.w_x.data();
  auto wh = p.w_h.data();
  auto bias = p.bias.data();
  for (std::size_t r = 0; r < b; ++r) {
    if (!is_active(r)) {
      std::copy_n(hd_in.begin() + r * hd, hd, h_out.data().begin() + r * hd);
      std::copy_n(cd_in.begin() + r * hd, hd, c_out.data().begin() + r * hd);
      continue;
    }
    const double* xr = &xd[r * e];
    const double* hr = &hd_in[r * hd];
    double* ar = &acts[r * g4];
    for (std::size_t j = 0; j < g4; ++j) {
      double s = bias[j];
      const double* wxj = &wx[j * e];
      for (std::size_t k = 0; k < e; ++k) s += wxj[k] * xr[k];
      const double* whj = &wh[j * hd];
      for (std::size_t k = 0; k < hd; ++k) s += whj[k] * hr[k];
      ar[j] = s;
    }
    for (std::size_t j = 0; j < hd; ++j) {
      const double i = sigmoid(ar[j]);
      const double f = sigmoid(ar[hd + j]);
      const double g = std::tanh(ar[2 * hd + j]);
      const double o = sigmoid(ar[3 * hd + j]);
      ar[j] = i;
      ar[hd + j] = f;
      ar[2 * hd + j] = g;
      ar[3 * hd + j] = o;
      const double c = f * cd_in[r * hd + j] + i * g;
      const double t = std::tanh(c);
      c_out[r * hd + j] = c;
      tc[r * hd + j] = t;
      h_out[r * hd + j] = o * t;
    }
  }

  if (tape.tracks({&x, &state.h, &state.c, &p.w_x, &p.w_h, &p.bias})) {
    std::vector<std::uint8_t> act_rows(b, 1);
    if (!active.empty()) act_rows.assign(active.begin(), active.end());
    Tensor xin = x, h_in = state.h, c_in = state.c, w_x = p.w_x, w_h = p.w_h, bs = p.bias;
    tape.record(
        "lstm_cell", {x, state.h, state.c, p.w_x, p.w_h, p.bias}, {h_out, c_out},
        [=, acts = std::move(acts), tc = std::move(tc)]() mutable {
          std::vector<double> dh_next(b * hd, 0.0), dc_next(b * hd, 0.0);
          if (h_out.has_grad()) std::copy(h_out.grad().begin(), h_out.grad().end(), dh_next.begin());
          if (c_out.has_grad()) std::copy(c_out.grad().begin(), c_out.grad().end(), dc_next.begin());
          std::vector<double> dpre(b * g4, 0.0);
          std::vector<double> dh_prev(b * hd, 0.0), dc_prev(b * hd, 0.0);
          auto cprev = c_in.data();
          for (std::size_t r = 0; r < b; ++r) {
            if (!act_rows[r]) {
              for (std::size_t j = 0; j < hd; ++j) {
                dh_prev[r * hd + j] = dh_next[r * hd + j];
                dc_prev[r * hd + j] = dc_next[r * hd + j];
              }
              continue;
            }
            const double* ar = &acts[r * g4];
            double* dr = &dpre[r * g4];
            for (std::size_t j = 0; j < hd; ++j) {
              const double i = ar[j], f = ar[hd + j], g = ar[2 * hd + j], o = ar[3 * hd + j];
              const double t = tc[r * hd + j];
              const double dh = dh_next[r * hd + j];
              const double dc = dc_next[r * hd + j] + dh * o * (1.0 - t * t);
              dr[j] = dc * g * i * (1.0 - i);
              dr[hd + j] = dc * cprev[r * hd + j] * f * (1.0 - f);
              dr[2 * hd + j] = dc * i * (1.0 - g * g);
              dr[3 * hd + j] = dh * t * o * (1.0 - o);
              dc_prev[r * hd + j] = dc * f;
            }
          }
          auto xd = xin.data();
          auto hprev = h_in.data();
          auto wxd = w_x.data();
          auto whd = w_h.data();
          const bool need_x = xin.requires_grad(), need_h = h_in.requires_grad();
          std::vector<double> dx(need_x ? b * e : 0, 0.0);
          for (std::size_t r = 0; r < b; ++r) {
            if (!act_rows[r]) continue;
            const double* dr = &dpre[r * g4];
            for (std::size_t j = 0; j < g4; ++j) {
              const double d = dr[j];
              if (d == 0.0) continue;
              if (need_x)
                for (std::size_t k = 0; k < e; ++k) dx[r * e + k] += d * wxd[j * e + k];
              if (need_h)
                for (std::size_t k = 0; k < hd; ++k) dh_prev[r * hd + k] += d * whd[j * hd + k];
            }
          }
          if (w_x.requires_grad()) {
            auto g = w_x.grad();
            for (std::size_t r = 0; r < b; ++r) {
              if (!act_rows[r]) continue;
              for (std::size_t j = 0; j < g4; ++j) {
                const double d = dpre[r * g4 + j];
                if (d == 0.0) continue;
                for (std::size_t k = 0; k < e; ++k) g[j * e + k] += d * xd[r * e + k];
              }
            }
          }
          if (w_h.requires_grad()) {
            auto g = w_h.grad();
            for (std::size_t r = 0; r < b; ++r) {
              if (!act_rows[r]) continue;
              for (std::size_t j = 0; j < g4; ++j) {
                const double d = dpre[r * g4 + j];
                if (d == 0.0) continue;
                for (std::size_t k = 0; k < hd; ++k) g[j * hd + k] += d * hprev[r * hd + k];
              }
            }
          }
          if (bs.requires_grad()) {
            auto g = bs.grad();
            for (std::size_t r = 0; r < b; ++r)
              for (std::size_t j = 0; j < g4; ++j) g[j] += dpre[r * g4 + j];
          }
          if (need_x) {
            auto g = xin.grad();
            for (std::size_t k = 0; k < dx.size(); ++k) g[k] += dx[k];
          }
          if (need_h) {
            auto g = h_in.grad();
            for (std::size_t k = 0; k < dh_prev.size(); ++k) g[k] += dh_prev[k];
          }
          if (c_in.requires_grad()) {
            auto g = c_in.grad();
            for (std::size_t k = 0; k < dc_prev.size(); ++k) g[k] += dc_prev[k];
          }
        });
  }
  return {h_out, c_out};
}

/// Standard (unmasked) LSTM cell.
inline StatePair lstm_cell(Tape& tape, const Tensor& x, const StatePair& state, const LstmParams& p) {
  return lstm_step(tape, x, state, p);
}

struct BiLstmOutput {
  Tensor sequence;  // [batch×T×2H], h_t = [fwd_t, bwd_t]
  StatePair forward_final;
  StatePair backward_final;
};

/// Runs both directions over x[batch×T×E]. The forward direction reads
/// t = 0..len−1, the backward direction len−1..0; each row's state is frozen
/// outside its true length, so finals are the states after the last consumed
/// token and padding never leaks into real positions.
inline BiLstmOutput bilstm(Tape& tape, const Tensor& x, std::span<const std::size_t> lengths,
                           const StatePair& init_fwd, const StatePair& init_bwd, const BiLstmParams& p) {
  detail::require_rank(x, 3, "bilstm");
  const std::size_t b = x.dim(0), steps = x.dim(1);
  detail::check_lengths(lengths, b, steps);
  p.forward.validate();
  p.backward.validate();
  if (p.forward.hidden() != p.backward.hidden() || p.forward.input_size() != p.backward.input_size())
    throw DimensionError("bilstm: forward and backward directions disagree in size");

  std::vector<Tensor> inputs;
  inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) inputs.push_back(time_step(tape, x, t));

  std::vector<std::uint8_t> active(b);
  auto set_active = [&](std::size_t t) {
    for (std::size_t r = 0; r < b; ++r) active[r] = t < lengths[r] ? 1 : 0;
  };

  std::vector<Tensor> fwd_h(steps), bwd_h(steps);
  StatePair s = init_fwd;
  for (std::size_t t = 0; t < steps; ++t) {
    set_active(t);
    s = lstm_step(tape, inputs[t], s, p.forward, active);
    fwd_h[t] = s.h;
  }
  StatePair fwd_final = s;

  s = init_bwd;
  for (std::size_t t = steps; t-- > 0;) {
    set_active(t);
    s = lstm_step(tape, inputs[t], s, p.backward, active);
    bwd_h[t] = s.h;
  }
  Tensor seq = concat(tape, {stack_time(tape, fwd_h), stack_time(tape, bwd_h)}, 2);
  return {seq, fwd_final, s};
}

inline BiLstmOutput bilstm(Tape& tape, const Tensor& x, const SentenceBatch& batch,
                           const StatePair& init_fwd, const StatePair& init_bwd, const BiLstmParams& p) {
  return bilstm(tape, x, batch.lengths, init_fwd, init_bwd, p);
}

/// out[i][d] = max over t < len_i of seq[i][t][d]. The gradient goes to the
/// first maximizing timestep.
inline Tensor temporal_max_pool(Tape& tape, const Tensor& seq, std::span<const std::size_t> lengths) {
  detail::require_rank(seq, 3, "temporal_max_pool");
  const std::size_t b = seq.dim(0), steps = seq.dim(1), d = seq.dim(2);
  if (lengths.size() != b) throw DimensionError("temporal_max_pool: mask does not match batch");
  for (auto len : lengths) {
    if (len == 0) throw std::invalid_argument("temporal_max_pool: fully masked row");
    if (len > steps) throw DimensionError("temporal_max_pool: length exceeds steps");
  }
  Tensor out = Tensor::zeros({b, d});
  std::vector<std::size_t> arg(b * d, 0);
  auto sd = seq.data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t best_t = 0;
      double best = sd[(i * steps) * d + k];
      for (std::size_t t = 1; t < lengths[i]; ++t) {
        const double v = sd[(i * steps + t) * d + k];
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
      out[i * d + k] = best;
      arg[i * d + k] = best_t;
    }
  if (tape.tracks({&seq})) {
    tape.record("temporal_max_pool", {seq}, {out}, [seq, out, arg, steps, d]() mutable {
      auto go = out.grad();
      auto gs = seq.grad();
      for (std::size_t n = 0; n < go.size(); ++n) {
        const std::size_t i = n / d, k = n % d;
        gs[(i * steps + arg[n]) * d + k] += go[n];
      }
    });
  }
  return out;
}

inline Tensor temporal_max_pool(Tape& tape, const Tensor& seq, const SentenceBatch& batch) {
  return temporal_max_pool(tape, seq, batch.lengths);
}

}  // namespace hbmp
