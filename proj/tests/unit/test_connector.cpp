#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <interconnect/analysis.hpp>
#include <interconnect/connector.hpp>
#include <interconnect/encoder.hpp>
#include <interconnect/gradcheck.hpp>
#include <interconnect/model.hpp>
#include <interconnect/ops.hpp>

#include "test_util.hpp"

namespace ic = interconnect;
using ic::Tensor;
using ic::test::random_tensor;

namespace {

ic::LayerWeights<double> weights(std::vector<double> w, std::size_t dim) {
  ic::LayerWeights<double> lw;
  const std::size_t n = w.size();
  lw.w = Tensor<double>({n}, std::move(w));
  lw.ln_gain = Tensor<double>({dim}, 1.0);
  lw.ln_bias = Tensor<double>({dim}, 0.0);
  return lw;
}

ic::EncoderOutput<double> random_encoder_output(std::size_t layers, std::size_t frames, std::size_t dim,
                                                std::uint64_t seed) {
  ic::EncoderOutput<double> enc;
  enc.downsampler_output = random_tensor({frames, dim}, ic::mix_keys(seed, 100));
  for (std::size_t l = 0; l < layers; ++l) enc.layer_outputs.push_back(random_tensor({frames, dim}, ic::mix_keys(seed, l)));
  return enc;
}

const ic::ConnectorConfig kInter{ic::ConnectorMode::InterConnection, false, false};

}  // namespace

TEST(Aggregate, HandComputedCase) {
  ic::EncoderOutput<double> enc;
  enc.layer_outputs = {Tensor<double>::matrix({{1, 3}}), Tensor<double>::matrix({{1, -1}})};
  const auto lw = weights({1, 0.5}, 2);
  const auto out = ic::aggregate(enc, &lw, kInter);
  EXPECT_NEAR(out[0], -1.0, 1e-4);
  EXPECT_NEAR(out[1], 1.0, 1e-4);
}

TEST(Aggregate, OneHotWeightSelectsLayer) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto enc = random_encoder_output(4, 5, 6, seed);
    for (std::size_t l = 0; l < 4; ++l) {
      std::vector<double> w(4, 0.0);
      w[l] = 1.0;
      const auto lw = weights(w, 6);
      const auto out = ic::aggregate(enc, &lw, kInter);
      const auto want = ic::layer_norm(enc.layer_outputs[l], lw.ln_gain, lw.ln_bias);
      for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], want[i]);
    }
  }
}

TEST(Aggregate, AllZeroWeightsGiveZeros) {
  const auto enc = random_encoder_output(3, 4, 5, 1);
  const auto lw = weights({0, 0, 0}, 5);
  const auto out = ic::aggregate(enc, &lw, kInter);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

// Layer outputs come from a desk encoder, whose residual stream keeps the
// pre-norm variance well above LayerNorm's eps; invariance is exact only up
// to a term of order eps / variance.
TEST(Aggregate, PositiveScaleInvariance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ic::ParamLayout layout;
    const auto ec = ic::EncoderConfig::desk();
    ic::append_encoder_layout(layout, ec);
    ic::ParamStore<double> store(layout, seed);
    ic::TransformerEncoder<double> encoder(store, ec);
    ic::ForwardContext ctx;
    const auto enc = encoder.encode(random_tensor({6, ec.dim}, seed), ctx);
    std::vector<double> w(4), scaled(4);
    const double alpha = std::exp2(2.0 * ic::uniform01(seed, 60) - 1.0);
    for (std::size_t l = 0; l < 4; ++l) {
      w[l] = 1.0 + 0.5 * ic::standard_normal(seed, 50 + l);
      scaled[l] = alpha * w[l];
    }
    const auto lw1 = weights(w, ec.dim);
    const auto lw2 = weights(scaled, ec.dim);
    const auto a = ic::aggregate(enc, &lw1, kInter);
    const auto b = ic::aggregate(enc, &lw2, kInter);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
  }
}

TEST(Aggregate, DoublingTheWeightsKeepsTheOutput) {
  const auto enc = random_encoder_output(4, 5, 64, 8);
  const auto lw1 = weights({1, 1, 1, 1}, 64), lw2 = weights({2, 2, 2, 2}, 64);
  const auto a = ic::aggregate(enc, &lw1, kInter), b = ic::aggregate(enc, &lw2, kInter);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Aggregate, WeightedSumIsLinearInWeights) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto enc = random_encoder_output(3, 4, 6, seed);
    const auto w1 = random_tensor({3}, ic::mix_keys(seed, 1));
    const auto w2 = random_tensor({3}, ic::mix_keys(seed, 2));
    const double a = ic::standard_normal(seed, 3), b = ic::standard_normal(seed, 4);
    const auto combined = ic::add(ic::scale(w1, a), ic::scale(w2, b));
    const auto lhs = ic::weighted_layer_sum<double>(enc.layer_outputs, combined);
    const auto rhs = ic::add(ic::scale(ic::weighted_layer_sum<double>(enc.layer_outputs, w1), a),
                             ic::scale(ic::weighted_layer_sum<double>(enc.layer_outputs, w2), b));
    for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-6);
  }
}

TEST(Aggregate, FinalLayerReturnsLastOutput) {
  const auto enc = random_encoder_output(3, 4, 5, 2);
  const ic::ConnectorConfig final_cfg{ic::ConnectorMode::FinalLayer, false, false};
  EXPECT_TRUE(ic::aggregate<double>(enc, nullptr, final_cfg).is_same(enc.layer_outputs.back()));
}

TEST(Aggregate, IncludeLayerZeroAddsTheStackInput) {
  const auto enc = random_encoder_output(2, 3, 4, 3);
  const ic::ConnectorConfig cfg{ic::ConnectorMode::InterConnection, false, true};
  const auto lw = weights({1, 0, 0}, 4);
  const auto out = ic::aggregate(enc, &lw, cfg);
  const auto want = ic::layer_norm(enc.downsampler_output, lw.ln_gain, lw.ln_bias);
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], want[i]);
  EXPECT_EQ(ic::connector_operand_count(cfg, 2), 3u);
}

TEST(Aggregate, WeightCountMismatchIsConfigError) {
  const auto enc = random_encoder_output(3, 2, 4, 4);
  const auto lw = weights({1, 1}, 4);
  EXPECT_THROW(ic::aggregate(enc, &lw, kInter), ic::ConfigError);
}

TEST(Aggregate, GradientsReachWeightsAndLayers) {
  auto enc = random_encoder_output(3, 4, 6, 5);
  auto lw = weights({0.3, -0.2, 0.9}, 6);
  for (auto& h : enc.layer_outputs) h.set_requires_grad(true);
  lw.w.set_requires_grad(true);
  lw.ln_gain.set_requires_grad(true);
  lw.ln_bias.set_requires_grad(true);
  const auto proj = random_tensor({4, 6}, 9);
  std::vector<ic::GradCheckParam> params{{"w", lw.w}, {"gain", lw.ln_gain}, {"bias", lw.ln_bias}};
  for (std::size_t l = 0; l < 3; ++l) params.push_back({"H" + std::to_string(l), enc.layer_outputs[l]});
  const auto report = ic::finite_diff_check(
      [&] { return ic::sum(ic::mul(ic::aggregate(enc, &lw, kInter), proj)); }, params);
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
  for (double g : lw.w.grad()) EXPECT_NE(g, 0.0);
}

TEST(LayerWeightFault, GradientCheckerCatchesIt) {
  auto enc = random_encoder_output(3, 4, 6, 6);
  auto lw = weights({0.3, -0.2, 0.9}, 6);
  lw.w.set_requires_grad(true);
  const auto proj = random_tensor({4, 6}, 9);
  const ic::GradCheckParam params[] = {{"w", lw.w}};
  auto loss = [&] { return ic::sum(ic::mul(ic::aggregate(enc, &lw, kInter), proj)); };
  ic::testing::set_layer_weight_grad_fault(true);
  const auto bad = ic::finite_diff_check(loss, params);
  ic::testing::set_layer_weight_grad_fault(false);
  EXPECT_FALSE(bad.passed());
  EXPECT_TRUE(ic::finite_diff_check(loss, params).passed());
}

TEST(ReportWeights, Cases) {
  const double uniform[] = {1, 1, 1, 1};
  EXPECT_EQ(ic::report_weights(uniform, true), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  const double two[] = {2, 0};
  EXPECT_EQ(ic::report_weights(two, true), (std::vector<double>{1, 0}));
  const double raw[] = {0.123456789, -2.5, 1e-300};
  EXPECT_EQ(ic::report_weights(raw, false), std::vector<double>(std::begin(raw), std::end(raw)));
  const double zeros[] = {0, 0};
  EXPECT_EQ(ic::report_weights(zeros, true), (std::vector<double>{0, 0}));
}

TEST(ReportWeights, FromStoredParameters) {
  const auto lw = weights({0.5, 1.5}, 2);
  EXPECT_EQ(ic::report_weights(lw, false), (std::vector<double>{0.5, 1.5}));
  EXPECT_EQ(ic::report_weights(lw, true), (std::vector<double>{0.25, 0.75}));
}

TEST(ConnectorParams, ClosedForm) {
  EXPECT_EQ(ic::interconnect_param_count(24, 1024), 2072u);
  EXPECT_EQ(ic::interconnect_param_count(1, 1), 3u);
  EXPECT_EQ(ic::interconnect_param_count(4, 64), 132u);
}

TEST(ConnectorParams, MatchesLayoutDifferenceBetweenModes) {
  for (auto base : {ic::ModelConfig::desk(), ic::ModelConfig::paper_shape()}) {
    auto inter = base;
    inter.connector.mode = ic::ConnectorMode::InterConnection;
    auto final_cfg = base;
    final_cfg.connector.mode = ic::ConnectorMode::FinalLayer;
    for (auto strategy : ic::kAllFreezeStrategies) {
      auto trainable = [&](const ic::ModelConfig& c) {
        std::size_t n = 0;
        for (const auto& s : ic::model_layout(c)) n += ic::is_trainable(s, strategy) ? s.numel() : 0;
        return n;
      };
      EXPECT_EQ(trainable(inter) - trainable(final_cfg),
                ic::interconnect_param_count(base.encoder.num_layers, base.encoder.dim));
    }
  }
}

TEST(Adaptor, LengthChains) {
  ic::AdaptorConfig cfg;
  EXPECT_EQ(ic::conv1d_output_length(49, 3, 2, 1), 25u);
  EXPECT_EQ(ic::conv1d_output_length(25, 3, 2, 1), 13u);
  EXPECT_EQ(ic::conv1d_output_length(13, 3, 2, 1), 7u);
  EXPECT_EQ(ic::adapted_length(49, cfg), 7u);
  EXPECT_EQ(ic::adapted_length(8, cfg), 1u);
  EXPECT_EQ(ic::adapted_length(1, cfg), 1u);
  EXPECT_EQ(ic::adapted_length(1024, cfg), 128u);
}

TEST(Adaptor, ForwardShapeAndZeroInput) {
  ic::AdaptorConfig cfg;
  cfg.channels = 8;
  ic::ParamLayout layout;
  ic::append_adaptor_layout(layout, cfg);
  ic::ParamStore<double> params(layout, 4);
  ic::LengthAdaptor<double> adaptor(params, cfg);
  ic::ForwardContext ctx;
  for (std::size_t t : {1u, 8u, 49u}) {
    const auto y = adaptor(random_tensor({t, 8}, t), ctx);
    EXPECT_EQ(y.shape(), (ic::Shape{ic::adapted_length(t, cfg), 8}));
  }
  const auto z = adaptor(Tensor<double>({10, 8}), ctx);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(adaptor(Tensor<double>({10, 4}), ctx), ic::ShapeError);
}
