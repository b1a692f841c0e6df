#include <benchmark/benchmark.h>

#include <interconnect/model.hpp>
#include <interconnect/ops.hpp>
#include <interconnect/rng.hpp>
#include <interconnect/synthdata.hpp>

namespace ic = interconnect;

namespace {

ic::Tensor<float> filled(ic::Shape shape, std::uint64_t key) {
  ic::Tensor<float> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(ic::standard_normal(key, i));
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled({n, n}, 1), b = filled({n, n}, 2);
  ic::NoGradGuard<float> no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ic::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv1d(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto x = filled({32, t}, 3), k = filled({32, 32, 4}, 4), b = filled({32}, 5);
  ic::NoGradGuard<float> no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ic::conv1d(x, k, b, 2, 0));
}
BENCHMARK(BM_Conv1d)->Arg(64)->Arg(512);

void BM_DeskForward(benchmark::State& state) {
  const ic::SpeechTranslator<float> model(ic::ModelConfig::desk(), 1);
  const auto sample = ic::generate_corpus(ic::TaskSpec{}, 1, ic::Split::Dev)[0];
  const ic::Tensor<float> wave({sample.waveform.size()}, sample.waveform);
  const std::vector<int> prefix{ic::tokens::kBos, ic::lang_tag(sample.direction), 6, 7, 8};
  ic::NoGradGuard<float> no_grad;
  ic::ForwardContext ctx;
  for (auto _ : state) benchmark::DoNotOptimize(model.logits(wave, prefix, ctx));
}
BENCHMARK(BM_DeskForward);

void BM_DeskForwardBackward(benchmark::State& state) {
  const ic::SpeechTranslator<float> model(ic::ModelConfig::desk(), 1);
  const auto sample = ic::generate_corpus(ic::TaskSpec{}, 1, ic::Split::Dev)[0];
  const ic::Tensor<float> wave({sample.waveform.size()}, sample.waveform);
  const std::vector<int> prefix{ic::tokens::kBos, ic::lang_tag(sample.direction), 6, 7, 8};
  ic::ForwardContext ctx;
  for (auto _ : state) {
    ic::Tape<float> tape;
    ic::TapeGuard<float> guard(tape);
    auto loss = ic::sum(model.logits(wave, prefix, ctx));
    tape.backward(loss);
  }
}
BENCHMARK(BM_DeskForwardBackward);

}  // namespace
BENCHMARK_MAIN();
