#pragma once

#include <vector>

#include "hbmp/encoders.hpp"
#include "hbmp/nli_head.hpp"

namespace hbmp {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t mlp_width = 600;
  std::size_t classes = 3;
  double dropout = 0.1;

  HeadConfig head() const { return {4 * encoder.output_width(), mlp_width, classes, dropout}; }
};

/// Shared sentence encoder applied to premise and hypothesis, followed by the
/// pair classifier.
struct NliModel {
  ModelConfig config;
  EncoderParams encoder;
  HeadParams head;

  static NliModel init(const ModelConfig& cfg, Rng& rng) {
    EncoderParams enc = EncoderParams::init(cfg.encoder, rng);
    HeadParams head = HeadParams::init(cfg.head(), rng);
    return {cfg, std::move(enc), std::move(head)};
  }

  ParamList parameters() const {
    ParamList out = encoder.parameters();
    for (auto& p : head.parameters()) out.push_back(std::move(p));
    return out;
  }

  Tensor logits(Tape& tape, const SentenceBatch& premise, const SentenceBatch& hypothesis,
                bool training, Rng& rng) const {
    if (premise.batch != hypothesis.batch)
      throw DimensionError("premise and hypothesis batches differ in size");
    Tensor u = encode(tape, premise, encoder, config.encoder);
    Tensor v = encode(tape, hypothesis, encoder, config.encoder);
    return classify(tape, combine(tape, u, v), head, training, rng);
  }

  /// Deep copy of every parameter.
  NliModel clone() const {
    NliModel m = *this;
    m.encoder.embedding = encoder.embedding.clone();
    for (auto& layer : m.encoder.layers)
      for (auto* p : {&layer.forward, &layer.backward}) {
        p->w_x = p->w_x.clone();
        p->w_h = p->w_h.clone();
        p->bias = p->bias.clone();
      }
    for (auto& s : m.encoder.initial)
      for (auto* t : {&s.fwd_h, &s.fwd_c, &s.bwd_h, &s.bwd_c}) *t = t->clone();
    for (auto* a : {&m.head.hidden1, &m.head.hidden2, &m.head.output}) {
      a->weight = a->weight.clone();
      a->bias = a->bias.clone();
    }
    return m;
  }

  /// Copies parameter values from a model of identical configuration.
  void assign_from(const NliModel& other) {
    auto dst = parameters();
    auto src = other.parameters();
    if (dst.size() != src.size()) throw DimensionError("assign_from: parameter lists differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].tensor.shape() != src[i].tensor.shape())
        throw DimensionError("assign_from: " + dst[i].name + " shape differs");
      std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), dst[i].tensor.data().begin());
    }
  }
};

inline std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 1; j < c; ++j)
      if (logits[r * c + j] > logits[r * c + out[r]]) out[r] = static_cast<int>(j);
  return out;
}

}  // namespace hbmp
