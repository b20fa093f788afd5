#include <gtest/gtest.h>

#include "hbmp/encoders.hpp"
#include "hbmp/gradcheck.hpp"

using namespace hbmp;

namespace {

EncoderConfig tiny(EncoderVariant v) { return {v, 7, 4, 3, 2}; }

SentenceBatch tiny_batch() { return SentenceBatch::from_sequences({{2, 3, 6, 1}, {5, 4}}); }

Tensor weighted(Tape& t, const Tensor& y) {
  Tensor w = Tensor::zeros(y.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.2 + 0.11 * static_cast<double>(i % 9);
  return sum(t, mul(t, y, w));
}

}  // namespace

TEST(Variant, KeysRoundTrip) {
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(variant_key(v)), v);
  EXPECT_EQ(variant_key(EncoderVariant::ens_train), "ens-train");
  EXPECT_THROW(parse_variant("gru"), std::invalid_argument);
}

TEST(EncoderParams, LayoutPerVariant) {
  Rng rng(1);
  auto hb = EncoderParams::init(tiny(EncoderVariant::hbmp), rng);
  EXPECT_EQ(hb.layers.size(), 2u);
  EXPECT_TRUE(hb.initial.empty());
  auto tied = EncoderParams::init(tiny(EncoderVariant::ens_tied), rng);
  EXPECT_EQ(tied.layers.size(), 1u);
  EXPECT_TRUE(tied.layer(1).forward.w_x.same_storage(tied.layer(0).forward.w_x));
  auto st = EncoderParams::init(tiny(EncoderVariant::stack), rng);
  EXPECT_EQ(st.layers[0].forward.input_size(), 4u);
  EXPECT_EQ(st.layers[1].forward.input_size(), 6u);
  auto tr = EncoderParams::init(tiny(EncoderVariant::ens_train), rng);
  EXPECT_EQ(tr.initial.size(), 2u);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(hb.embedding[j], 0.0);
}

TEST(EncoderParams, ParameterNames) {
  Rng rng(2);
  auto p = EncoderParams::init(tiny(EncoderVariant::ens_train), rng).parameters();
  EXPECT_EQ(p.front().name, "encoder.embedding");
  EXPECT_EQ(p[1].name, "encoder.layer0.fwd.w_x");
  EXPECT_EQ(p.back().name, "encoder.init1.bwd_c");
}

TEST(EncoderConfig, Validation) {
  Rng rng(3);
  EncoderConfig bad = tiny(EncoderVariant::hbmp);
  bad.layers = 0;
  EXPECT_THROW(EncoderParams::init(bad, rng), std::invalid_argument);
}

TEST(Census, TiedIsOneThirdOfEnsembleAtThreeLayers) {
  Rng rng(4);
  EncoderConfig ens{EncoderVariant::ens, 10, 5, 4, 3};
  EncoderConfig tied = ens;
  tied.variant = EncoderVariant::ens_tied;
  auto a = param_census(EncoderParams::init(ens, rng));
  auto b = param_census(EncoderParams::init(tied, rng));
  EXPECT_EQ(a.recurrent, 3 * b.recurrent);
  EXPECT_EQ(a.embedding, b.embedding);
}

TEST(Census, RecurrentCountsFromShapeArithmetic) {
  Rng rng(5);
  const std::size_t v = 10, e = 5, h = 4, l = 3;
  auto dir = [](std::size_t in, std::size_t hid) { return 4 * hid * in + 4 * hid * hid + 4 * hid; };
  auto hb = param_census(EncoderParams::init({EncoderVariant::hbmp, v, e, h, l}, rng));
  EXPECT_EQ(hb.recurrent, l * 2 * dir(e, h));
  EXPECT_EQ(hb.embedding, v * e);
  auto st = param_census(EncoderParams::init({EncoderVariant::stack, v, e, h, l}, rng));
  EXPECT_EQ(st.recurrent, 2 * dir(e, h) + (l - 1) * 2 * dir(2 * h, h));
  auto tr = param_census(EncoderParams::init({EncoderVariant::ens_train, v, e, h, l}, rng));
  EXPECT_EQ(tr.initial_states, l * 2 * 2 * h);
  EXPECT_EQ(tr.recurrent, hb.recurrent);
}

TEST(Encode, OutputWidthIsLayersTimesTwoH) {
  for (auto v : kAllVariants) {
    Rng rng(6);
    auto cfg = tiny(v);
    auto p = EncoderParams::init(cfg, rng);
    Tape tape;
    EncodeTrace trace;
    Tensor out = encode(tape, tiny_batch(), p, cfg, {}, &trace);
    EXPECT_EQ(out.shape(), (Shape{2, 12}));
    ASSERT_EQ(trace.pooled.size(), 2u);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(out[r * 12 + k * 6 + j], trace.pooled[k][r * 6 + j]);
  }
}

TEST(Encode, ZeroHandoffEqualsEnsembleBitwise) {
  Rng rng(7);
  auto cfg = tiny(EncoderVariant::hbmp);
  cfg.layers = 3;
  auto p = EncoderParams::init(cfg, rng);
  auto ens_cfg = cfg;
  ens_cfg.variant = EncoderVariant::ens;
  Tape tape;
  Tensor a = encode(tape, tiny_batch(), p, cfg, {.zero_handoff = true});
  Tensor b = encode(tape, tiny_batch(), p, ens_cfg);
  Tensor c = encode(tape, tiny_batch(), p, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    differs = differs || a[i] != c[i];
  }
  EXPECT_TRUE(differs);
}

TEST(Encode, FirstLayerSequenceSharedWithStack) {
  Rng rng(8);
  auto cfg = tiny(EncoderVariant::hbmp);
  auto hb = EncoderParams::init(cfg, rng);
  auto st_cfg = cfg;
  st_cfg.variant = EncoderVariant::stack;
  auto st = EncoderParams::init(st_cfg, rng);
  st.embedding = hb.embedding;
  st.layers[0] = hb.layers[0];
  Tape tape;
  EncodeTrace ta, tb;
  encode(tape, tiny_batch(), hb, cfg, {}, &ta);
  encode(tape, tiny_batch(), st, st_cfg, {}, &tb);
  for (std::size_t i = 0; i < ta.sequences[0].numel(); ++i)
    EXPECT_NEAR(ta.sequences[0][i], tb.sequences[0][i], 1e-12);
}

TEST(Encode, ZeroLearnedInitialStatesMatchEnsemble) {
  Rng rng(9);
  auto cfg = tiny(EncoderVariant::ens_train);
  auto p = EncoderParams::init(cfg, rng);
  auto ens_cfg = cfg;
  ens_cfg.variant = EncoderVariant::ens;
  Tape tape;
  Tensor a = encode(tape, tiny_batch(), p, cfg);
  Tensor b = encode(tape, tiny_batch(), p, ens_cfg);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Encode, PaddingInvariance) {
  for (auto v : kAllVariants) {
    Rng rng(10);
    auto cfg = tiny(v);
    auto p = EncoderParams::init(cfg, rng);
    Tape tape;
    Tensor a = encode(tape, tiny_batch(), p, cfg);
    Tensor b = encode(tape, tiny_batch().padded(5), p, cfg);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]) << variant_key(v);
  }
}

TEST(Encode, BatchRowsAreIndependent) {
  Rng rng(11);
  auto cfg = tiny(EncoderVariant::hbmp);
  auto p = EncoderParams::init(cfg, rng);
  auto batch = tiny_batch();
  Tape tape;
  Tensor all = encode(tape, batch, p, cfg);
  Tensor second = encode(tape, batch.row(1), p, cfg);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(all[12 + j], second[j]);
}

TEST(Encode, GradCheckEveryVariant) {
  for (auto v : kAllVariants) {
    Rng rng(12);
    auto cfg = tiny(v);
    auto p = EncoderParams::init(cfg, rng);
    for (auto& s : p.initial)
      for (auto* t : {&s.fwd_h, &s.fwd_c, &s.bwd_h, &s.bwd_c})
        for (auto& x : t->data()) x = rng.uniform(-0.5, 0.5);
    std::vector<Tensor> inputs;
    for (auto& [name, t] : p.parameters()) inputs.push_back(t);
    auto r = grad_check([&](Tape& t) { return weighted(t, encode(t, tiny_batch(), p, cfg)); }, inputs);
    EXPECT_LT(r.max_error, 1e-4) << variant_key(v);
  }
}
