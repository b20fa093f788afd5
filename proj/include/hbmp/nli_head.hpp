#pragma once

// Sentence-pair feature combination and the MLP classifier:
//   features = (u, v, |u−v|, u∘v)
//   logits   = W3·drop(lrelu(W2·drop(lrelu(W1·features))))

#include <cmath>
#include <string>

#include "hbmp/ops.hpp"
#include "hbmp/random.hpp"
#include "hbmp/tensor.hpp"

namespace hbmp {

struct Affine {
  Tensor weight;  // [out×in]
  Tensor bias;    // [out]

  /// Weights uniform on (−1/√fan_in, 1/√fan_in), zero bias.
  static Affine init(std::size_t in, std::size_t out, Rng& rng) {
    Affine a{Tensor::zeros({out, in}, true), Tensor::zeros({out}, true)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : a.weight.data()) w = rng.uniform(-bound, bound);
    return a;
  }
  std::size_t in() const { return weight.dim(1); }
  std::size_t out() const { return weight.dim(0); }
};

struct HeadConfig {
  std::size_t input_width = 0;  // 4 × encoder width
  std::size_t mlp_width = 600;
  std::size_t classes = 3;
  double dropout = 0.1;
};

struct HeadParams {
  Affine hidden1;
  Affine hidden2;
  Affine output;
  double dropout = 0.1;

  static HeadParams init(const HeadConfig& cfg, Rng& rng) {
    if (cfg.input_width == 0 || cfg.mlp_width == 0 || cfg.classes < 2)
      throw std::invalid_argument("head config needs positive widths and at least 2 classes");
    Affine l1 = Affine::init(cfg.input_width, cfg.mlp_width, rng);
    Affine l2 = Affine::init(cfg.mlp_width, cfg.mlp_width, rng);
    Affine l3 = Affine::init(cfg.mlp_width, cfg.classes, rng);
    return {std::move(l1), std::move(l2), std::move(l3), cfg.dropout};
  }

  ParamList parameters() const {
    return {{"head.hidden1.weight", hidden1.weight}, {"head.hidden1.bias", hidden1.bias},
            {"head.hidden2.weight", hidden2.weight}, {"head.hidden2.bias", hidden2.bias},
            {"head.output.weight", output.weight},   {"head.output.bias", output.bias}};
  }
};

inline Tensor combine(Tape& tape, const Tensor& u, const Tensor& v) {
  if (u.shape() != v.shape())
    throw DimensionError("combine: embedding widths differ, " + shape_str(u.shape()) + " vs " +
                         shape_str(v.shape()));
  Tensor diff = abs(tape, sub(tape, u, v));
  Tensor prod = mul(tape, u, v);
  return concat(tape, {u, v, diff, prod}, u.rank() - 1);
}

inline Tensor classify(Tape& tape, const Tensor& features, const HeadParams& head, bool training, Rng& rng) {
  if (features.rank() != 2 || features.dim(1) != head.hidden1.in())
    throw DimensionError("classify: features " + shape_str(features.shape()) + " but head expects width " +
                         std::to_string(head.hidden1.in()));
  Tensor h = leaky_relu(tape, linear(tape, features, head.hidden1.weight, head.hidden1.bias));
  h = dropout(tape, h, head.dropout, rng, training);
  h = leaky_relu(tape, linear(tape, h, head.hidden2.weight, head.hidden2.bias));
  h = dropout(tape, h, head.dropout, rng, training);
  return linear(tape, h, head.output.weight, head.output.bias);
}

}  // namespace hbmp
