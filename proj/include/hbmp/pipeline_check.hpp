#pragma once

// Finite-difference check of the whole classifier pipeline
// (embed → encode → combine → classify → cross-entropy) at tiny sizes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hbmp/gradcheck.hpp"
#include "hbmp/model.hpp"

namespace hbmp {

struct PipelineCheckDims {
  std::size_t vocab = 7;
  std::size_t embed = 4;
  std::size_t hidden = 3;
  std::size_t layers = 2;
  std::size_t steps = 4;
  std::size_t batch = 2;
  std::size_t mlp = 5;
};

inline constexpr double kGradCheckThreshold = 1e-4;

/// Smallest non-zero analytic gradient magnitude that central differences at
/// eps = 1e-5 resolve against an O(1) loss in double precision.
inline constexpr double kResolvableGradient = 1e-7;

struct BlockError {
  std::string name;
  double max_error = 0.0;
};

struct PipelineCheckReport {
  EncoderVariant variant = EncoderVariant::hbmp;
  std::uint64_t seed = 0;  // seed of the draw that was checked
  std::size_t draws = 0;
  std::vector<BlockError> blocks;
  double max_error = 0.0;
  bool passed() const { return draws > 0 && max_error < kGradCheckThreshold; }
};

namespace detail {

struct PipelineProblem {
  NliModel model;
  SentenceBatch premise, hypothesis;
  std::vector<int> labels;
};

inline PipelineProblem draw_pipeline_problem(EncoderVariant variant, const PipelineCheckDims& d,
                                             std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.encoder = {variant, d.vocab, d.embed, d.hidden, d.layers};
  cfg.mlp_width = d.mlp;
  cfg.classes = 3;
  cfg.dropout = 0.0;
  NliModel model = NliModel::init(cfg, rng);
  for (auto& [name, t] : model.parameters())
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t j = 0; j < d.embed; ++j) model.encoder.embedding[j] = 0.0;

  auto sentences = [&] {
    std::vector<std::vector<std::int32_t>> seqs;
    for (std::size_t r = 0; r < d.batch; ++r) {
      const std::size_t len = r == 0 ? d.steps : 1 + rng.index(d.steps);
      std::vector<std::int32_t> s;
      for (std::size_t t = 0; t < len; ++t) s.push_back(static_cast<std::int32_t>(1 + rng.index(d.vocab - 1)));
      seqs.push_back(std::move(s));
    }
    return SentenceBatch::from_sequences(seqs);
  };
  PipelineProblem p{std::move(model), sentences(), sentences(), {}};
  for (std::size_t r = 0; r < d.batch; ++r) p.labels.push_back(static_cast<int>(rng.index(3)));
  return p;
}

}  // namespace detail

/// Checks every parameter block of one variant. A draw is only compared when
/// all of its non-zero analytic gradients are resolvable; otherwise the next
/// draw is taken, up to `max_draws`.
inline PipelineCheckReport check_pipeline(EncoderVariant variant, const PipelineCheckDims& dims = {},
                                          std::uint64_t seed = 1, std::size_t max_draws = 32) {
  if (dims.vocab < 2 || dims.embed == 0 || dims.hidden == 0 || dims.layers == 0 || dims.steps == 0 ||
      dims.batch == 0 || dims.mlp == 0)
    throw std::invalid_argument("gradcheck dimensions must be positive (vocab >= 2)");
  PipelineCheckReport report;
  report.variant = variant;
  for (std::size_t draw = 0; draw < max_draws; ++draw) {
    const std::uint64_t s = Rng::mix(seed + draw);
    auto prob = detail::draw_pipeline_problem(variant, dims, s);
    const ParamList params = prob.model.parameters();
    Rng unused(0);
    auto loss = [&](Tape& t) {
      return softmax_cross_entropy(t, prob.model.logits(t, prob.premise, prob.hypothesis, false, unused),
                                   prob.labels);
    };

    Tape tape;
    tape.backward(loss(tape));
    double smallest = INFINITY;
    for (const auto& p : params)
      for (double g : p.tensor.grad_view())
        if (g != 0.0) smallest = std::min(smallest, std::fabs(g));
    report.draws = draw + 1;
    if (smallest < kResolvableGradient) continue;

    std::vector<Tensor> inputs;
    for (const auto& p : params) inputs.push_back(p.tensor);
    const GradCheckResult r = grad_check(loss, inputs);
    report.seed = s;
    for (std::size_t k = 0; k < params.size(); ++k) report.blocks.push_back({params[k].name, r.per_input[k]});
    report.max_error = r.max_error;
    return report;
  }
  report.max_error = INFINITY;
  return report;
}

}  // namespace hbmp
