#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <interconnect/analysis.hpp>
#include <interconnect/decoder.hpp>
#include <interconnect/diagnostics.hpp>
#include <interconnect/model.hpp>
#include <interconnect/ops.hpp>

#include "test_util.hpp"

namespace ic = interconnect;
using ic::Tensor;
using ic::test::random_tensor;

namespace {

struct DecoderFixture {
  ic::DecoderConfig config{2, 16, 32, 2, 20};
  ic::ParamLayout layout;
  ic::ParamStore<double> params;

  explicit DecoderFixture(std::uint64_t seed = 5) {
    ic::append_decoder_layout(layout, config);
    params = ic::ParamStore<double>(layout, seed);
  }

  void zero(const std::string& name) {
    for (auto& e : params.entries()) {
      if (e.spec.name == name) std::fill(e.tensor.data().begin(), e.tensor.data().end(), 0.0);
    }
  }
};

}  // namespace

TEST(TargetFormat, SequenceAndTeacherForcing) {
  const int body[] = {7, 8};
  const auto seq = ic::make_target_sequence(4, body);
  EXPECT_EQ(seq, (std::vector<int>{4, ic::tokens::kBos, 7, 8, ic::tokens::kEos}));
  const auto tf = ic::teacher_forcing(seq);
  EXPECT_EQ(tf.inputs, (std::vector<int>{4, ic::tokens::kBos, 7, 8}));
  EXPECT_EQ(tf.targets, (std::vector<int>{ic::tokens::kIgnore, 7, 8, ic::tokens::kEos}));
  const int two[] = {1, 2};
  EXPECT_THROW(ic::teacher_forcing(two), ic::ContractError);
}

TEST(Decoder, LengthOneInputGivesOneRow) {
  DecoderFixture f;
  ic::TransformerDecoder<double> dec(f.params, f.config);
  ic::ForwardContext ctx;
  const auto memory = random_tensor({3, 16}, 1);
  const int ids[] = {4};
  const auto logits = dec.logits(ids, &memory, ctx);
  EXPECT_EQ(logits.shape(), (ic::Shape{1, 20}));
}

TEST(Decoder, FutureTokensDoNotAffectThePast) {
  DecoderFixture f;
  ic::TransformerDecoder<double> dec(f.params, f.config);
  ic::ForwardContext ctx;
  const auto memory = random_tensor({4, 16}, 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<int> ids(6);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(ic::uniform01(seed, i) * 20);
    const auto base = dec.logits(ids, &memory, ctx);
    for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
      auto changed = ids;
      changed[t + 1] = (changed[t + 1] + 7) % 20;
      const auto other = dec.logits(changed, &memory, ctx);
      for (std::size_t r = 0; r <= t; ++r) {
        for (std::size_t c = 0; c < 20; ++c) EXPECT_EQ(base.at(r, c), other.at(r, c)) << "t=" << t;
      }
    }
  }
}

TEST(Decoder, ZeroedCrossAttentionEqualsLanguageModel) {
  DecoderFixture f;
  for (int l = 0; l < 2; ++l) {
    f.zero("decoder.layers." + std::to_string(l) + ".cross_attn.o.weight");
    f.zero("decoder.layers." + std::to_string(l) + ".cross_attn.o.bias");
  }
  ic::TransformerDecoder<double> dec(f.params, f.config);
  ic::ForwardContext ctx;
  const auto memory = Tensor<double>({3, 16});
  const int ids[] = {3, 1, 9, 12};
  const auto with = dec.logits(ids, &memory, ctx);
  const auto without = dec.logits(ids, nullptr, ctx);
  for (std::size_t i = 0; i < with.numel(); ++i) EXPECT_EQ(with[i], without[i]);
}

TEST(Decoder, OutputDistributionsSumToOne) {
  DecoderFixture f;
  ic::TransformerDecoder<double> dec(f.params, f.config);
  ic::ForwardContext ctx;
  const auto memory = random_tensor({5, 16}, 3);
  const int ids[] = {3, 1, 6, 7, 8};
  const auto p = ic::softmax(dec.logits(ids, &memory, ctx));
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double total = 0;
    for (std::size_t c = 0; c < p.cols(); ++c) total += p.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Decoder, OutOfVocabularyInputIsIndexError) {
  DecoderFixture f;
  ic::TransformerDecoder<double> dec(f.params, f.config);
  ic::ForwardContext ctx;
  const int ids[] = {3, 20};
  EXPECT_THROW(dec.logits(ids, nullptr, ctx), ic::IndexError);
}

TEST(Decoder, SharedEmbeddingIsTheOnlyVocabularyTable) {
  DecoderFixture f;
  const auto& config = f.config;
  const auto& layout = f.layout;
  std::size_t vocab_tables = 0;
  for (const auto& s : layout) {
    if (!s.shape.empty() && s.shape[0] == config.vocab_size) ++vocab_tables;
  }
  EXPECT_EQ(vocab_tables, 1u);
  const std::size_t expected = config.vocab_size * config.dim +
                               config.num_layers * (ic::transformer_block_params(config.dim, config.ffn_dim) +
                                                    4 * (config.dim * config.dim + config.dim) + 2 * config.dim) +
                               2 * config.dim;
  EXPECT_EQ(ic::layout_numel(layout), expected);
}

TEST(Generate, GreedyEqualsBeamOfOne) {
  DecoderFixture f(11);
  ic::TransformerDecoder<double> dec(f.params, f.config);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto memory = random_tensor({4, 16}, seed);
    const int prefix[] = {3, ic::tokens::kBos};
    const auto greedy = dec.generate(memory, prefix, 8, ic::SearchMode::greedy());
    const auto beam = dec.generate(memory, prefix, 8, ic::SearchMode::beam(1));
    EXPECT_EQ(greedy, beam);
    EXPECT_EQ(greedy, dec.generate(memory, prefix, 8, ic::SearchMode::greedy()));
    EXPECT_LE(greedy.size(), 8u);
  }
}

TEST(Generate, MaxLengthOneGivesOneToken) {
  DecoderFixture f;
  ic::TransformerDecoder<double> dec(f.params, f.config);
  const auto memory = random_tensor({4, 16}, 7);
  const int prefix[] = {3, ic::tokens::kBos};
  EXPECT_EQ(dec.generate(memory, prefix, 1, ic::SearchMode::greedy()).size(), 1u);
  EXPECT_EQ(dec.generate(memory, prefix, 1, ic::SearchMode::beam(3)).size(), 1u);
  EXPECT_THROW(dec.generate(memory, prefix, 0, ic::SearchMode::greedy()), ic::ContractError);
}

TEST(Generate, BeamRespectsMaxLength) {
  DecoderFixture f(13);
  ic::TransformerDecoder<double> dec(f.params, f.config);
  const auto memory = random_tensor({4, 16}, 8);
  const int prefix[] = {3, ic::tokens::kBos};
  const auto out = dec.generate(memory, prefix, 5, ic::SearchMode::beam(4));
  EXPECT_FALSE(out.empty());
  EXPECT_LE(out.size(), 5u);
}

// ---- the assembled model ------------------------------------------------------

TEST(Model, DeskForwardShapes) {
  ic::SpeechTranslator<double> model(ic::ModelConfig::desk(), 1);
  ic::ForwardContext ctx;
  const auto wave = random_tensor({160}, 2);
  const auto enc = model.encode(wave, ctx);
  const std::size_t frames = ic::encoder_output_length(160, model.config().downsampler);
  ASSERT_EQ(enc.layer_outputs.size(), 4u);
  EXPECT_EQ(enc.layer_outputs[0].shape(), (ic::Shape{frames, 64}));
  const auto mem = model.bridge(enc, ctx);
  EXPECT_EQ(mem.dim(0), ic::adapted_length(frames, model.config().adaptor));
  const int ids[] = {3, 1, 10};
  EXPECT_EQ(model.logits(wave, ids, ctx).shape(), (ic::Shape{3, 64}));
}

TEST(Model, LayerWeightsStartUniform) {
  ic::SpeechTranslator<double> model(ic::ModelConfig::desk(), 1);
  ASSERT_NE(model.layer_weights(), nullptr);
  for (double w : model.layer_weights()->w.data()) EXPECT_EQ(w, 0.25);
  auto final_cfg = ic::ModelConfig::desk();
  final_cfg.connector.mode = ic::ConnectorMode::FinalLayer;
  ic::SpeechTranslator<double> baseline(final_cfg, 1);
  EXPECT_EQ(baseline.layer_weights(), nullptr);
}

TEST(Model, SameSeedSameParameters) {
  ic::SpeechTranslator<float> a(ic::ModelConfig::desk(), 42);
  ic::SpeechTranslator<float> b(ic::ModelConfig::desk(), 42);
  ic::SpeechTranslator<float> c(ic::ModelConfig::desk(), 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params().entries()[i].tensor;
    const auto& y = b.params().entries()[i].tensor;
    const auto& z = c.params().entries()[i].tensor;
    for (std::size_t k = 0; k < x.numel(); ++k) {
      EXPECT_EQ(x[k], y[k]);
      any_diff = any_diff || x[k] != z[k];
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, MismatchedDimsAreConfigErrors) {
  auto cfg = ic::ModelConfig::desk();
  cfg.decoder.dim = 32;
  EXPECT_THROW(ic::model_layout(cfg), ic::ConfigError);
}

TEST(Model, EveryEncoderBlockReceivesGradientThroughTheConnector) {
  ic::ModelConfig cfg = ic::ModelConfig::desk();
  cfg.encoder = {3, 16, 32, 2, 0};
  cfg.adaptor.channels = 16;
  cfg.decoder = {1, 16, 32, 2, 64};
  for (auto mode : {ic::ConnectorMode::InterConnection, ic::ConnectorMode::FinalLayer}) {
    cfg.connector.mode = mode;
    ic::SpeechTranslator<double> model(cfg, 3);
    model.apply_freeze(ic::FreezeStrategy::FullFineTune);
    ic::Tape<double> tape;
    ic::TapeGuard<double> guard(tape);
    ic::ForwardContext ctx;
    const int ids[] = {3, 1, 10, 11};
    auto loss = ic::sum(ic::mul(model.logits(random_tensor({96}, 4), ids, ctx), random_tensor({4, 64}, 5)));
    tape.backward(loss);
    for (int l = 0; l < 3; ++l) {
      const auto& g = model.params().get("encoder.layers." + std::to_string(l) + ".ffn.fc1.weight").grad();
      double norm = 0;
      for (double v : g) norm += v * v;
      EXPECT_GT(norm, 0.0) << "block " << l << " mode " << ic::to_string(mode);
    }
    if (mode == ic::ConnectorMode::InterConnection) {
      for (double v : model.layer_weights()->w.grad()) EXPECT_NE(v, 0.0);
    }
  }
}

TEST(Model, FullLossGradientUnderEveryStrategy) {
  ic::ModelConfig cfg = ic::ModelConfig::desk();
  cfg.encoder = {2, 8, 16, 2, 0};
  cfg.downsampler = {{{4, 4, 2}, {4, 2, 2}}};
  cfg.adaptor.channels = 8;
  cfg.decoder = {1, 8, 16, 2, 64};
  ic::TaskSpec task;
  task.samples_per_token = 8;
  task.min_len = 2;
  task.max_len = 3;
  ic::GradCheckOptions options;
  options.max_coords_per_tensor = 2;
  const auto results = ic::model_gradcheck(cfg, task, ic::kAllFreezeStrategies, options, 1, 1);
  ASSERT_EQ(results.size(), 3u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.report.passed()) << ic::to_string(r.strategy) << " " << r.report.max_rel_error;
    const auto layout = ic::model_layout(cfg);
    std::size_t trainable = 0;
    for (const auto& s : layout) trainable += ic::is_trainable(s, r.strategy) ? 1 : 0;
    EXPECT_EQ(r.report.entries.size(), trainable);
  }
}
