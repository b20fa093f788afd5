#pragma once

// Sentence encoders: HBMP and the four comparison architectures.
//
// All variants run L bidirectional LSTM layers, max-pool each layer's output
// over time and concatenate the pooled vectors, so every variant yields a
// [batch × L·2H] embedding. They differ in what each layer reads and how it
// is initialized:
//
//   variant     layer input            initial state            weights
//   hbmp        embeddings             previous layer's finals  per layer
//   ens         embeddings             zeros                    per layer
//   ens-train   embeddings             learned vectors          per layer
//   ens-tied    embeddings             zeros                    shared
//   stack       previous layer output  zeros                    per layer

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hbmp/ops.hpp"
#include "hbmp/random.hpp"
#include "hbmp/recurrent.hpp"
#include "hbmp/tensor.hpp"

namespace hbmp {

enum class EncoderVariant { hbmp, ens, ens_train, ens_tied, stack };

inline constexpr std::array<EncoderVariant, 5> kAllVariants{
    EncoderVariant::hbmp, EncoderVariant::ens, EncoderVariant::ens_train, EncoderVariant::ens_tied,
    EncoderVariant::stack};

/// Config-file spelling.
inline std::string_view variant_key(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::hbmp: return "hbmp";
    case EncoderVariant::ens: return "ens";
    case EncoderVariant::ens_train: return "ens-train";
    case EncoderVariant::ens_tied: return "ens-tied";
    case EncoderVariant::stack: return "stack";
  }
  return "?";
}

inline std::string_view variant_name(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::hbmp: return "HBMP";
    case EncoderVariant::ens: return "BiLSTM-Ens";
    case EncoderVariant::ens_train: return "BiLSTM-Ens-Train";
    case EncoderVariant::ens_tied: return "BiLSTM-Ens-Tied";
    case EncoderVariant::stack: return "BiLSTM-Stack";
  }
  return "?";
}

inline EncoderVariant parse_variant(std::string_view key) {
  for (auto v : kAllVariants)
    if (variant_key(v) == key) return v;
  throw std::invalid_argument("unknown encoder variant '" + std::string(key) +
                              "' (expected hbmp, ens, ens-train, ens-tied or stack)");
}

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::hbmp;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::size_t hidden = 600;  // per direction
  std::size_t layers = 3;

  std::size_t output_width() const { return layers * 2 * hidden; }

  void validate() const {
    if (vocab_size < 2 || embed_dim == 0 || hidden == 0 || layers == 0)
      throw std::invalid_argument("encoder config needs vocab_size >= 2 and positive dims/layers");
  }
};

/// Learned initial states of one layer, each a [H] vector broadcast over the batch.
struct InitialStates {
  Tensor fwd_h, fwd_c, bwd_h, bwd_c;
};

struct EncoderParams {
  Tensor embedding;                   // [V×E], row 0 is padding
  std::vector<BiLstmParams> layers;   // L entries, or one when tied
  std::vector<InitialStates> initial; // L entries for ens-train only

  const BiLstmParams& layer(std::size_t k) const { return layers.size() == 1 ? layers[0] : layers[k]; }

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    p.embedding = Tensor::zeros({cfg.vocab_size, cfg.embed_dim}, true);
    auto emb = p.embedding.data();
    for (std::size_t i = cfg.embed_dim; i < emb.size(); ++i) emb[i] = rng.uniform(-0.5, 0.5);
    const std::size_t stored = cfg.variant == EncoderVariant::ens_tied ? 1 : cfg.layers;
    for (std::size_t k = 0; k < stored; ++k) {
      const bool stacked = cfg.variant == EncoderVariant::stack && k > 0;
      p.layers.push_back(BiLstmParams::init(stacked ? 2 * cfg.hidden : cfg.embed_dim, cfg.hidden, rng));
    }
    if (cfg.variant == EncoderVariant::ens_train)
      for (std::size_t k = 0; k < cfg.layers; ++k)
        p.initial.push_back({Tensor::zeros({cfg.hidden}, true), Tensor::zeros({cfg.hidden}, true),
                             Tensor::zeros({cfg.hidden}, true), Tensor::zeros({cfg.hidden}, true)});
    return p;
  }

  ParamList parameters() const {
    ParamList out;
    out.push_back({"encoder.embedding", embedding});
    for (std::size_t k = 0; k < layers.size(); ++k)
      layers[k].append_to(out, "encoder.layer" + std::to_string(k));
    for (std::size_t k = 0; k < initial.size(); ++k) {
      const std::string pre = "encoder.init" + std::to_string(k);
      out.push_back({pre + ".fwd_h", initial[k].fwd_h});
      out.push_back({pre + ".fwd_c", initial[k].fwd_c});
      out.push_back({pre + ".bwd_h", initial[k].bwd_h});
      out.push_back({pre + ".bwd_c", initial[k].bwd_c});
    }
    return out;
  }
};

struct EncodeOptions {
  /// Replace the HBMP layer handoff with zero states (structural test hook).
  bool zero_handoff = false;
};

/// Per-layer intermediates, filled when a trace is passed to encode().
struct EncodeTrace {
  std::vector<Tensor> sequences;
  std::vector<Tensor> pooled;
};

inline Tensor encode(Tape& tape, const SentenceBatch& batch, const EncoderParams& params,
                     const EncoderConfig& cfg, const EncodeOptions& opts = {},
                     EncodeTrace* trace = nullptr) {
  const std::size_t b = batch.batch, hidden = cfg.hidden;
  detail::check_lengths(batch.lengths, b, batch.steps);
  Tensor embedded = embedding_lookup(tape, params.embedding, batch.token_ids, b, batch.steps);

  std::vector<Tensor> pooled;
  Tensor input = embedded;
  StatePair prev_fwd, prev_bwd;
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    StatePair init_fwd, init_bwd;
    if (cfg.variant == EncoderVariant::hbmp && k > 0 && !opts.zero_handoff) {
      init_fwd = prev_fwd;
      init_bwd = prev_bwd;
    } else if (cfg.variant == EncoderVariant::ens_train) {
      const auto& s = params.initial.at(k);
      init_fwd = {broadcast_rows(tape, s.fwd_h, b), broadcast_rows(tape, s.fwd_c, b)};
      init_bwd = {broadcast_rows(tape, s.bwd_h, b), broadcast_rows(tape, s.bwd_c, b)};
    } else {
      init_fwd = StatePair::zeros(b, hidden);
      init_bwd = StatePair::zeros(b, hidden);
    }
    BiLstmOutput out = bilstm(tape, input, batch.lengths, init_fwd, init_bwd, params.layer(k));
    pooled.push_back(temporal_max_pool(tape, out.sequence, batch.lengths));
    if (trace) {
      trace->sequences.push_back(out.sequence);
      trace->pooled.push_back(pooled.back());
    }
    prev_fwd = out.forward_final;
    prev_bwd = out.backward_final;
    if (cfg.variant == EncoderVariant::stack) input = out.sequence;
  }
  return pooled.size() == 1 ? pooled[0] : concat(tape, pooled, 1);
}

struct ParamCensus {
  std::vector<std::pair<std::string, std::size_t>> tensors;
  std::size_t embedding = 0;
  std::size_t recurrent = 0;
  std::size_t initial_states = 0;

  std::size_t total() const { return embedding + recurrent + initial_states; }
};

inline ParamCensus param_census(const EncoderParams& params) {
  ParamCensus c;
  for (const auto& [name, t] : params.parameters()) {
    c.tensors.emplace_back(name, t.numel());
    if (name == "encoder.embedding")
      c.embedding += t.numel();
    else if (name.rfind("encoder.init", 0) == 0)
      c.initial_states += t.numel();
    else
      c.recurrent += t.numel();
  }
  return c;
}

}  // namespace hbmp
