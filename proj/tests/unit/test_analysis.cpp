#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include <interconnect/analysis.hpp>
#include <interconnect/figures.hpp>

#include "test_util.hpp"

namespace ic = interconnect;
namespace pt = boost::property_tree;

namespace {

using Seqs = std::vector<std::vector<int>>;

std::size_t count_elements(const pt::ptree& tree, const std::string& tag, const std::string& cls) {
  std::size_t n = 0;
  for (const auto& [name, child] : tree) {
    if (name == tag && child.get<std::string>("<xmlattr>.class", "") == cls) ++n;
    n += count_elements(child, tag, cls);
  }
  return n;
}

pt::ptree parse_svg(const std::string& text) {
  std::istringstream in(text);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

}  // namespace

TEST(Bleu, IdentityScoresOneHundred) {
  const Seqs refs{{1, 2, 3, 4, 5}, {6, 7, 8, 9}, {3, 3, 4, 5, 6, 7}};
  EXPECT_DOUBLE_EQ(ic::corpus_bleu(refs, refs), 100.0);
  EXPECT_DOUBLE_EQ(ic::corpus_bleu(refs, refs, 4, ic::BleuSmoothing::None), 100.0);
}

TEST(Bleu, NoOverlapScoresZero) {
  const Seqs hyps{{1, 2, 3, 4}}, refs{{5, 6, 7, 8}};
  EXPECT_EQ(ic::corpus_bleu(hyps, refs), 0.0);
}

TEST(Bleu, ClippedUnigramPrecision) {
  const Seqs hyps{{1, 1, 1, 1}}, refs{{1, 2}};
  const auto d = ic::corpus_bleu_detail(hyps, refs, 1);
  EXPECT_DOUBLE_EQ(d.precisions[0], 0.25);
  EXPECT_DOUBLE_EQ(d.brevity_penalty, 1.0);
  EXPECT_NEAR(d.bleu, 25.0, 1e-12);
}

TEST(Bleu, BrevityPenalty) {
  const Seqs hyps{{1, 2}}, refs{{1, 2, 3, 4}};
  const auto d = ic::corpus_bleu_detail(hyps, refs, 1);
  EXPECT_NEAR(d.brevity_penalty, std::exp(1.0 - 2.0), 1e-12);
  EXPECT_NEAR(d.bleu, 100.0 * std::exp(-1.0), 1e-9);
}

TEST(Bleu, BoundedForRandomCorpora) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Seqs hyps, refs;
    for (int s = 0; s < 5; ++s) {
      std::vector<int> h, r;
      const int lh = 1 + static_cast<int>(ic::uniform01(seed, 10 * s) * 8);
      const int lr = 1 + static_cast<int>(ic::uniform01(seed, 10 * s + 1) * 8);
      for (int i = 0; i < lh; ++i) h.push_back(static_cast<int>(ic::uniform01(seed, 1000 + 10 * s + i) * 4));
      for (int i = 0; i < lr; ++i) r.push_back(static_cast<int>(ic::uniform01(seed, 5000 + 10 * s + i) * 4));
      hyps.push_back(h);
      refs.push_back(r);
    }
    const double b = ic::corpus_bleu(hyps, refs);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 100.0);
  }
}

TEST(Bleu, ContractErrors) {
  const Seqs one{{1}}, two{{1}, {2}}, none;
  EXPECT_THROW(ic::corpus_bleu(one, two), ic::ContractError);
  EXPECT_THROW(ic::corpus_bleu(none, none), ic::ContractError);
}

TEST(BlockParams, ClosedForm) {
  EXPECT_EQ(ic::transformer_block_params(1024, 4096), 12'596'224u);
  EXPECT_EQ(ic::transformer_block_params(1, 1), 16u);
  EXPECT_EQ(ic::transformer_block_params(64, 256), 49'984u);
}

TEST(BlockParams, MatchesAConstructedBlock) {
  for (auto [d, f] : {std::pair<std::size_t, std::size_t>{64, 256}, {8, 16}, {12, 5}}) {
    ic::ParamLayout layout;
    ic::append_encoder_layout(layout, {1, d, f, 4, 0});
    std::size_t n = 0;
    for (const auto& s : layout) n += s.name.rfind("encoder.layers.0.", 0) == 0 ? s.numel() : 0;
    EXPECT_EQ(n, ic::transformer_block_params(d, f)) << d << "x" << f;
  }
}

TEST(ParamCount, ConnectorDelta) {
  EXPECT_EQ(ic::connector_delta(ic::ModelConfig::desk()), 132u);
  EXPECT_EQ(ic::connector_delta(ic::ModelConfig::paper_shape()), 2072u);
}

TEST(ParamCount, TotalsAreInvariantAcrossStrategies) {
  for (auto cfg : {ic::ModelConfig::desk(), ic::ModelConfig::paper_shape()}) {
    const auto report = ic::count_params(cfg);
    EXPECT_EQ(report.totals.total, ic::layout_numel(ic::model_layout(cfg)));
    for (const auto& s : report.totals.strategies) {
      EXPECT_EQ(s.trainable + s.frozen, report.totals.total) << ic::to_string(s.strategy);
      if (s.strategy == ic::FreezeStrategy::FullFineTune) EXPECT_EQ(s.trainable, report.totals.total);
    }
    std::size_t sum = 0;
    for (const auto& c : report.components) sum += c.total;
    EXPECT_EQ(sum, report.totals.total);
  }
}

TEST(ParamCount, EncoderFrozenTrainsNoEncoderWeights) {
  const auto report = ic::count_params(ic::ModelConfig::desk());
  for (const auto& c : report.components) {
    if (c.component != "encoder") continue;
    for (const auto& s : c.strategies) {
      if (s.strategy == ic::FreezeStrategy::EncoderFrozen) EXPECT_EQ(s.trainable, 0u);
    }
  }
}

TEST(WeightDiff, ElementwiseAbsoluteAndSymmetric) {
  const double a[] = {0.5, 0.2}, b[] = {0.3, 0.4};
  const auto d = ic::weight_diff(a, b);
  EXPECT_NEAR(d[0], 0.2, 1e-15);
  EXPECT_NEAR(d[1], 0.2, 1e-15);
  EXPECT_EQ(d, ic::weight_diff(b, a));
  const double c[] = {1.0};
  EXPECT_THROW(ic::weight_diff(a, c), ic::ContractError);
}

TEST(Cosine, Cases) {
  const double a[] = {0.3, -1.2, 4.0};
  EXPECT_NEAR(ic::cosine_similarity(a, a), 1.0, 1e-12);
  const double x[] = {1, 0}, y[] = {0, 2}, neg[] = {-2, 0};
  EXPECT_NEAR(ic::cosine_similarity(x, y), 0.0, 1e-12);
  EXPECT_NEAR(ic::cosine_similarity(x, neg), -1.0, 1e-12);
  const double zero[] = {0, 0};
  EXPECT_THROW(ic::cosine_similarity(x, zero), ic::ContractError);
}

TEST(WeightReport, NormalizesByAbsoluteSum) {
  const double raw[] = {1.0, -3.0};
  const auto r = ic::make_weight_report("m", raw);
  EXPECT_EQ(r.raw, (std::vector<double>{1.0, -3.0}));
  EXPECT_NEAR(std::abs(r.normalized[0]) + std::abs(r.normalized[1]), 1.0, 1e-15);
}

TEST(WeightReport, FinalLayerModelHasNoWeights) {
  auto cfg = ic::ModelConfig::desk();
  cfg.connector.mode = ic::ConnectorMode::FinalLayer;
  ic::SpeechTranslator<float> model(cfg, 1);
  EXPECT_THROW(ic::make_weight_report("m", model), ic::ContractError);
  cfg.connector.mode = ic::ConnectorMode::InterConnection;
  ic::SpeechTranslator<float> inter(cfg, 1);
  EXPECT_EQ(ic::make_weight_report("m", inter).raw.size(), 4u);
}

TEST(Csv, FormatNumberRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9, 0.0}) {
    EXPECT_EQ(std::stod(ic::format_number(v)), v);
  }
}

TEST(Csv, WriteReadRoundTrip) {
  ic::test::TempDir dir("csv");
  const ic::CsvTable table{{"a", "b"}, {{"1", "x"}, {"2.5", "y"}}};
  ic::write_csv(dir / "t.csv", table);
  const auto back = ic::read_csv(dir / "t.csv");
  EXPECT_EQ(back.header, table.header);
  EXPECT_EQ(back.rows, table.rows);
  EXPECT_EQ(back.column("b"), 1u);
}

TEST(Svg, BarChartIsWellFormedWithOneBarPerLayer) {
  ic::test::TempDir dir("svg");
  const double raw[] = {0.1, 0.4, 0.2, 0.3, 0.9, 0.05};
  const auto report = ic::make_weight_report("bi <a&b>", raw);
  ic::write_weights_csv(dir / "w.csv", report);
  const auto table = ic::read_csv(dir / "w.csv");
  ASSERT_EQ(table.rows.size(), 6u);
  const auto svg = ic::bar_chart_svg(table, "layer", "normalized_weight", "weights <&>");
  const auto tree = parse_svg(svg);
  EXPECT_EQ(count_elements(tree, "rect", "bar"), 6u);
}

TEST(Svg, ScatterIsWellFormed) {
  const ic::CsvTable table{{"label", "params", "bleu"}, {{"a", "10", "3"}, {"b", "20", "5"}, {"c", "20", "5"}}};
  const auto tree = parse_svg(ic::scatter_svg(table, "params", "bleu", "label", "t"));
  EXPECT_EQ(count_elements(tree, "circle", "point"), 3u);
}

TEST(Figures, EmitWritesEveryReport) {
  ic::test::TempDir dir("figs");
  ic::FigureInputs in;
  const double m[] = {0.1, 0.2, 0.3, 0.4}, b[] = {0.4, 0.3, 0.2, 0.1};
  in.weights = {ic::make_weight_report("multi", m), ic::make_weight_report("bi-A", b)};
  in.params = ic::count_params(ic::ModelConfig::desk());
  in.param_bleu = {{"final", 100, 10.0}, {"inter", 104, 12.0}};
  const auto out = ic::emit_figures(in, dir.path());
  for (const auto& f : out.files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  for (const char* name : {"weights_multi.svg", "weights_bi-A.svg", "diff_bi-A.csv", "diff_bi-A.svg", "cosine.csv",
                           "params.csv", "params.svg", "param_bleu.svg"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  ASSERT_EQ(out.cosine.size(), 1u);
  EXPECT_NEAR(out.cosine[0], ic::cosine_similarity(m, b), 1e-15);
  for (const auto& f : out.files) {
    if (f.extension() == ".svg") EXPECT_NO_THROW(parse_svg(ic::test::read_file(f))) << f;
  }
  const auto diff = ic::read_csv(dir / "diff_bi-A.csv");
  ASSERT_EQ(diff.rows.size(), 4u);
  EXPECT_NEAR(std::stod(diff.rows[0][diff.column("abs_diff")]), 0.3, 1e-12);
  EXPECT_THROW(ic::emit_figures({}, dir.path()), ic::ContractError);
}
