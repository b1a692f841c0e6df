// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include <interconnect/analysis.hpp>
#include <interconnect/checkpoint.hpp>
#include <interconnect/diagnostics.hpp>
#include <interconnect/encoder.hpp>
#include <interconnect/evaluate.hpp>
#include <interconnect/synthdata.hpp>
#include <interconnect/training.hpp>

#include "cli.hpp"
#include "test_util.hpp"

namespace ic = interconnect;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::vector<float>> snapshot(const ic::ParamStore<float>& store) {
  std::vector<std::vector<float>> out;
  for (const auto& e : store.entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

int run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  return ic::cli::run(args, out, err);
}

// 1 -------------------------------------------------------------------------

Outcome parameter_arithmetic() {
  const auto t0 = Clock::now();
  const auto paper = ic::ModelConfig::paper_shape();
  const std::size_t delta = ic::connector_delta(paper);
  const std::size_t block = ic::transformer_block_params(1024, 4096);
  ic::test::TempDir dir("acc-count");
  const int code = run_cli({"--out", dir.path().string(), "count-params", "--preset", "paper-shape"});
  const double secs = seconds_since(t0);
  return {delta == 2072 && block == 12'596'224 && code == 0 && secs < 1.0,
          fmt::format("delta={} block={} cli_exit={} {:.3f}s", delta, block, code, secs)};
}

// 2 -------------------------------------------------------------------------

Outcome gradient_verification() {
  const auto t0 = Clock::now();
  ic::GradCheckOptions opts;
  opts.step = 1e-5;
  opts.tolerance = 1e-4;
  opts.max_coords_per_tensor = 3;
  opts.seed = 1;
  const auto results = ic::model_gradcheck(ic::ModelConfig::desk(), ic::TaskSpec{},
                                           std::span<const ic::FreezeStrategy>(ic::kAllFreezeStrategies), opts, 1);
  double worst = 0.0;
  std::size_t tensors = 0;
  bool ok = results.size() == 3;
  for (const auto& r : results) {
    worst = std::max(worst, r.report.max_rel_error);
    tensors += r.report.entries.size();
    ok = ok && r.report.passed() && !r.report.entries.empty();
  }
  const double secs = seconds_since(t0);
  return {ok && worst < 1e-4 && secs < 120.0,
          fmt::format("max_rel_err={:.3e} over {} tensors, 3 strategies, {:.1f}s", worst, tensors, secs)};
}

// 3 -------------------------------------------------------------------------

ic::LayerWeights<double> layer_weights(std::vector<double> w, std::size_t dim, std::uint64_t seed) {
  ic::LayerWeights<double> lw;
  const std::size_t n = w.size();
  lw.w = ic::Tensor<double>({n}, std::move(w));
  lw.ln_gain = ic::test::random_tensor({dim}, ic::mix_keys(seed, 500));
  lw.ln_bias = ic::test::random_tensor({dim}, ic::mix_keys(seed, 501));
  return lw;
}

Outcome connector_identities() {
  const ic::ConnectorConfig cfg{ic::ConnectorMode::InterConnection, false, false};
  double onehot_err = 0.0, scale_err = 0.0, linear_err = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t L = 4, T = 6, d = 64;
    // Layer outputs of a desk encoder, so the pre-norm variance is realistic.
    ic::ParamLayout layout;
    const auto ec = ic::EncoderConfig::desk();
    ic::append_encoder_layout(layout, ec);
    ic::ParamStore<double> store(layout, seed);
    ic::TransformerEncoder<double> encoder(store, ec);
    ic::ForwardContext ctx;
    const auto enc = encoder.encode(ic::test::random_tensor({T, d}, seed), ctx);

    const std::size_t pick = seed % L;
    std::vector<double> onehot(L, 0.0);
    onehot[pick] = 1.0;
    const auto lw = layer_weights(onehot, d, seed);
    const auto got = ic::aggregate(enc, &lw, cfg);
    const auto want = ic::layer_norm(enc.layer_outputs[pick], lw.ln_gain, lw.ln_bias);
    for (std::size_t i = 0; i < got.numel(); ++i) onehot_err = std::max(onehot_err, std::abs(got[i] - want[i]));

    std::vector<double> w(L), scaled(L);
    const double alpha = std::exp2(2.0 * ic::uniform01(seed, 7) - 1.0);
    for (std::size_t l = 0; l < L; ++l) {
      w[l] = 1.0 + 0.5 * ic::standard_normal(seed, 10 + l);
      scaled[l] = alpha * w[l];
    }
    const auto lw1 = layer_weights(w, d, seed), lw2 = layer_weights(scaled, d, seed);
    const auto a = ic::aggregate(enc, &lw1, cfg), b = ic::aggregate(enc, &lw2, cfg);
    for (std::size_t i = 0; i < a.numel(); ++i) scale_err = std::max(scale_err, std::abs(a[i] - b[i]));

    const auto w1 = ic::test::random_tensor({L}, ic::mix_keys(seed, 20));
    const auto w2 = ic::test::random_tensor({L}, ic::mix_keys(seed, 21));
    const double p = ic::standard_normal(seed, 30), q = ic::standard_normal(seed, 31);
    const auto lhs = ic::weighted_layer_sum<double>(enc.layer_outputs, ic::add(ic::scale(w1, p), ic::scale(w2, q)));
    const auto rhs = ic::add(ic::scale(ic::weighted_layer_sum<double>(enc.layer_outputs, w1), p),
                             ic::scale(ic::weighted_layer_sum<double>(enc.layer_outputs, w2), q));
    for (std::size_t i = 0; i < lhs.numel(); ++i) linear_err = std::max(linear_err, std::abs(lhs[i] - rhs[i]));
  }
  return {onehot_err == 0.0 && scale_err <= 1e-5 && linear_err <= 1e-6,
          fmt::format("one-hot max|diff|={:.1e} scale={:.2e} linearity={:.2e} (20 instances each)", onehot_err,
                      scale_err, linear_err)};
}

// 4 -------------------------------------------------------------------------

// LNA trainable set written out from parameter names alone: LayerNorms
// anywhere, encoder self-attention, decoder cross-attention, and every newly
// initialized module.
bool lna_trainable_by_name(const std::string& name) {
  auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
  if (starts("connector.") || starts("adaptor.") || starts("encoder.extra_layers.")) return true;
  if (starts("encoder.") && name.find(".self_attn.") != std::string::npos) return true;
  if (starts("decoder.") && name.find(".cross_attn.") != std::string::npos) return true;
  std::istringstream parts(name);
  for (std::string seg; std::getline(parts, seg, '.');) {
    if (seg == "ln" || seg.rfind("ln_", 0) == 0 || (seg.size() > 3 && seg.compare(seg.size() - 3, 3, "_ln") == 0)) {
      return true;
    }
  }
  return false;
}

Outcome freezing_contract() {
  ic::TaskSpec task;
  task.min_len = 2;
  task.max_len = 4;
  const auto corpus = ic::generate_corpus(task, 40, ic::Split::Train);
  ic::TrainConfig tc;
  tc.batch_size = 2;
  ic::TriStageSchedule sched;
  sched.base_lr = 1e-3;
  sched.total_steps = 100;

  std::size_t frozen_checked[2] = {0, 0}, frozen_changed[2] = {0, 0}, trained_moved[2] = {0, 0};
  const ic::FreezeStrategy strategies[] = {ic::FreezeStrategy::EncoderFrozen, ic::FreezeStrategy::Lna};
  for (int k = 0; k < 2; ++k) {
    ic::SpeechTranslator<float> model(ic::ModelConfig::desk(), 21);
    const auto before = snapshot(model.params());
    ic::Trainer<float> trainer(model, corpus, tc, strategies[k], sched);
    trainer.run_until(100);
    const auto after = snapshot(model.params());
    const auto& entries = model.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& spec = entries[i].spec;
      const bool encoder_side = spec.component == ic::Component::Downsampler ||
                                spec.component == ic::Component::Encoder ||
                                spec.component == ic::Component::EncoderExtra;
      const bool must_freeze = k == 0 ? encoder_side : !lna_trainable_by_name(spec.name);
      if (must_freeze) {
        ++frozen_checked[k];
        frozen_changed[k] += before[i] != after[i];
      } else if (before[i] != after[i]) {
        ++trained_moved[k];
      }
    }
  }
  const bool ok = frozen_changed[0] == 0 && frozen_changed[1] == 0 && frozen_checked[0] > 0 && frozen_checked[1] > 0 &&
                  trained_moved[0] > 0 && trained_moved[1] > 0;
  return {ok, fmt::format("encoder-frozen: {}/{} frozen tensors changed; lna: {}/{} changed; 100 steps each",
                          frozen_changed[0], frozen_checked[0], frozen_changed[1], frozen_checked[1])};
}

// 5 -------------------------------------------------------------------------

std::vector<double> desk_run(ic::ConnectorMode mode, std::uint64_t seed, const std::vector<ic::Sample>& train,
                             const std::vector<ic::Sample>& test) {
  ic::ModelConfig mc = ic::ModelConfig::desk();
  mc.connector.mode = mode;
  ic::SpeechTranslator<float> model(mc, ic::mix_keys(seed, 11));
  ic::DenoisingConfig dc;
  dc.steps = 500;
  dc.seed = ic::mix_keys(seed, 7);
  ic::pretrain_encoder_denoising(model, std::span<const ic::Sample>(train), dc);

  ic::TrainConfig tc;
  tc.batch_size = 8;
  tc.accumulation = 1;
  tc.label_smoothing = 0.1;
  tc.adam.beta1 = 0.9;
  tc.seed = ic::mix_keys(seed, 3);
  ic::TriStageSchedule sched;
  sched.base_lr = 2e-3;
  sched.total_steps = 1500;
  ic::Trainer<float> trainer(model, train, tc, ic::FreezeStrategy::EncoderFrozen, sched);
  trainer.run_until(sched.total_steps);

  const auto rows = ic::evaluate_bleu(model, test, 16).rows;
  std::vector<double> bleu;
  for (const auto& r : rows) bleu.push_back(r.bleu);
  return bleu;
}

double median3(double a, double b, double c) { return std::max(std::min(a, b), std::min(std::max(a, b), c)); }

Outcome desk_main_claim() {
  const auto t0 = Clock::now();
  const ic::TaskSpec task;
  const auto train = ic::generate_corpus(task, 1200, ic::Split::Train);
  const auto test = ic::generate_corpus(task, 90, ic::Split::Test);
  std::vector<std::vector<double>> inter, final_layer;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    inter.push_back(desk_run(ic::ConnectorMode::InterConnection, seed, train, test));
    final_layer.push_back(desk_run(ic::ConnectorMode::FinalLayer, seed, train, test));
  }
  int wins = 0;
  std::string detail;
  const char* names[] = {"A", "B", "C"};
  for (std::size_t d = 0; d < 3; ++d) {
    const double mi = median3(inter[0][d], inter[1][d], inter[2][d]);
    const double mf = median3(final_layer[0][d], final_layer[1][d], final_layer[2][d]);
    wins += mi >= mf;
    detail += fmt::format("{}: inter {:.2f} vs final {:.2f}; ", names[d], mi, mf);
  }
  const double secs = seconds_since(t0);
  return {wins >= 2 && secs < 1800.0, detail + fmt::format("{}/3 directions, {:.0f}s", wins, secs)};
}

// 6 -------------------------------------------------------------------------

Outcome scheduler_endpoints() {
  const ic::TriStageSchedule s;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  const double e0 = rel(ic::lr_at(0, s), 2.5e-6);
  const double e1 = rel(ic::lr_at(s.warmup_end(), s), 2.5e-4);
  const double e2 = rel(ic::lr_at(s.total_steps, s), 2.5e-6);
  const double worst = std::max({e0, e1, e2});
  return {worst <= 1e-12, fmt::format("max relative error {:.1e} at steps 0/{}/{}", worst, s.warmup_end(),
                                      s.total_steps)};
}

// 7 -------------------------------------------------------------------------

Outcome loss_properties() {
  double ce_err = 0.0, uniform_err = 0.0, max_norm = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t rows = 5, vocab = 11;
    const auto logits = ic::test::random_tensor({rows, vocab}, seed, 3.0);
    std::vector<int> targets(rows);
    for (std::size_t r = 0; r < rows; ++r) targets[r] = static_cast<int>(ic::uniform01(seed, 100 + r) * vocab);
    targets[0] = 3;  // at least one scored position
    long double ref = 0;
    std::size_t scored = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (targets[r] == ic::tokens::kPad) continue;  // padding is not scored
      ++scored;
      long double mx = logits.at(r, 0), z = 0;
      for (std::size_t c = 1; c < vocab; ++c) mx = std::max<long double>(mx, logits.at(r, c));
      for (std::size_t c = 0; c < vocab; ++c) z += std::exp(static_cast<long double>(logits.at(r, c)) - mx);
      ref += -(logits.at(r, static_cast<std::size_t>(targets[r])) - mx - std::log(z));
    }
    const ic::Tensor<double> seqs[] = {logits};
    const std::vector<int> tgt[] = {targets};
    const double loss = ic::label_smoothed_loss<double>(seqs, tgt, 0.0).item();
    ce_err = std::max(ce_err, std::abs(loss - static_cast<double>(ref / scored)));

    const ic::Tensor<double> flat[] = {ic::Tensor<double>({rows, 64}, 0.5)};
    const double uniform = ic::label_smoothed_loss<double>(flat, tgt, 0.0).item();
    uniform_err = std::max(uniform_err, std::abs(uniform - std::log(64.0)));
  }
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::vector<ic::Tensor<double>> grads;
    const double mag = std::pow(10.0, 4.0 * ic::uniform01(seed, 0) - 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
      auto t = ic::Tensor<double>({4 + k});
      auto g = t.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = mag * ic::standard_normal(seed, 10 * k + i);
      grads.push_back(t);
    }
    ic::clip_gradients<double>(grads, 20.0);
    double s = 0;
    for (const auto& t : grads) {
      for (double g : t.grad()) s += g * g;
    }
    max_norm = std::max(max_norm, std::sqrt(s));
  }
  return {ce_err <= 1e-7 && uniform_err <= 1e-6 && max_norm <= 20.0 + 1e-6,
          fmt::format("ce |diff|={:.1e} uniform |diff|={:.1e} max clipped norm={:.9f}", ce_err, uniform_err,
                      max_norm)};
}

// 8 -------------------------------------------------------------------------

Outcome metric_identities() {
  const ic::TaskSpec task;
  const auto corpus = ic::generate_corpus(task, 60, ic::Split::Test);
  std::vector<std::vector<int>> refs;
  for (const auto& s : corpus) refs.push_back(s.target);
  const double self = ic::corpus_bleu(refs, refs);
  double oracle_min = 100.0;
  for (const auto& r : ic::bleu_by_direction(corpus, ic::oracle_hypotheses(task, corpus))) {
    oracle_min = std::min(oracle_min, r.bleu);
  }
  bool trivial = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<double> a(6), b(6);
    for (std::size_t i = 0; i < 6; ++i) {
      a[i] = ic::standard_normal(seed, i);
      b[i] = ic::standard_normal(seed, 50 + i);
    }
    const auto zero = ic::weight_diff(a, a);
    trivial = trivial && std::all_of(zero.begin(), zero.end(), [](double v) { return v == 0.0; });
    trivial = trivial && ic::weight_diff(a, b) == ic::weight_diff(b, a);
    trivial = trivial && std::abs(ic::cosine_similarity(a, a) - 1.0) <= 1e-12;
    trivial = trivial && ic::cosine_similarity(a, b) == ic::cosine_similarity(b, a);
  }
  return {self == 100.0 && oracle_min == 100.0 && trivial,
          fmt::format("bleu(x,x)={} oracle min={} diff/cosine identities {}", self, oracle_min,
                      trivial ? "hold" : "broken")};
}

// 9 -------------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> tree_bytes(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), ic::test::read_file(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome reproducibility() {
  ic::test::TempDir dir("acc-repro");
  const fs::path root = dir / "run";
  const auto config = (dir / "run.json").string();
  std::ofstream(config) << R"({"train_samples": 40, "dev_samples": 6, "test_samples": 12, "seed": 5,
                              "schedule": {"total_steps": 20}, "train": {"batch_size": 4},
                              "data_dir": ")" + (root / "data").string() + R"("})";
  auto with = [&](const std::string& out, std::vector<std::string> rest) {
    std::vector<std::string> args{"--config", config, "--jobs", "1", "--out", (root / out).string()};
    args.insert(args.end(), rest.begin(), rest.end());
    return run_cli(args);
  };
  // Two independent runs into the same directory, wiped in between.
  std::vector<std::vector<std::pair<std::string, std::string>>> trees;
  for (int k = 0; k < 2; ++k) {
    fs::remove_all(root);
    int codes = with("data", {"gen-data"});
    codes += with("train", {"train"});
    codes += with("eval", {"eval", "--checkpoint", (root / "train" / "checkpoint").string()});
    codes += with("figs", {"analyze", (root / "train" / "checkpoint").string()});
    if (codes != 0) return {false, fmt::format("pipeline run {} failed", k + 1)};
    trees.push_back(tree_bytes(root));
  }
  if (trees[0].size() != trees[1].size()) return {false, "different file sets"};
  std::size_t differing = 0;
  for (std::size_t i = 0; i < trees[0].size(); ++i) differing += trees[0][i] != trees[1][i];
  return {differing == 0 && !trees[0].empty(),
          fmt::format("{} files compared (data, checkpoint, logs, CSVs, SVGs), {} differ", trees[0].size(), differing)};
}

// 10 ------------------------------------------------------------------------

Outcome checkpoint_roundtrip() {
  ic::TaskSpec task;
  task.min_len = 2;
  task.max_len = 4;
  const auto corpus = ic::generate_corpus(task, 24, ic::Split::Train);
  ic::TrainConfig tc;
  tc.batch_size = 3;
  tc.dropout = 0.1;
  tc.augment_prob = 0.5;
  ic::TriStageSchedule sched;
  sched.base_lr = 1e-3;
  sched.total_steps = 10;
  const auto cfg = ic::ModelConfig::desk();

  ic::SpeechTranslator<float> straight(cfg, 4);
  ic::Trainer<float> t1(straight, corpus, tc, ic::FreezeStrategy::FullFineTune, sched);
  t1.run_until(10);

  ic::test::TempDir dir("acc-ckpt");
  {
    ic::SpeechTranslator<float> first(cfg, 4);
    ic::Trainer<float> t2(first, corpus, tc, ic::FreezeStrategy::FullFineTune, sched);
    t2.run_until(5);
    ic::save_checkpoint(dir.path(), t2, 4);
  }
  const auto ck = ic::load_checkpoint<float>(dir.path());
  auto resumed = ck.build_model();
  ic::Trainer<float> t3(resumed, corpus, tc, ck.state.strategy, ck.state.schedule);
  ck.restore_into(t3);
  t3.run_until(10);
  const bool resume_exact = snapshot(resumed.params()) == snapshot(straight.params());

  ic::save_checkpoint(dir / "final", t1, 4);
  const auto reloaded = ic::load_checkpoint<float>(dir / "final").build_model();
  const auto& s = corpus.front();
  const ic::Tensor<float> wave({s.waveform.size()}, s.waveform);
  const std::vector<int> prefix{ic::tokens::kBos, ic::lang_tag(s.direction)};
  ic::ForwardContext ctx;
  const auto a = straight.logits(wave, prefix, ctx);
  const auto b = reloaded.logits(wave, prefix, ctx);
  bool forward_exact = a.shape() == b.shape();
  for (std::size_t i = 0; forward_exact && i < a.numel(); ++i) forward_exact = a[i] == b[i];
  return {resume_exact && forward_exact, fmt::format("forward bit-exact: {}; resume at step 5 of 10 bit-exact: {}",
                                                     forward_exact ? "yes" : "no", resume_exact ? "yes" : "no")};
}

}  // namespace

// Optional arguments select criteria by number, e.g. `interconnect_acceptance 3 7`.
int main(int argc, char** argv) {
  const std::vector<std::string> only(argv + 1, argv + argc);
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"1 parameter arithmetic", parameter_arithmetic},
      {"2 gradient verification", gradient_verification},
      {"3 connector identities", connector_identities},
      {"4 freezing contract", freezing_contract},
      {"5 desk-scale inter >= final", desk_main_claim},
      {"6 scheduler endpoints", scheduler_endpoints},
      {"7 loss properties", loss_properties},
      {"8 metric identities", metric_identities},
      {"9 reproducibility", reproducibility},
      {"10 checkpoint roundtrip", checkpoint_roundtrip},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const std::string number = std::string(name).substr(0, std::string(name).find(' '));
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("{} criterion {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
