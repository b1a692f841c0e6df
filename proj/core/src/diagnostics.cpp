#include "interconnect/diagnostics.hpp"

#include "interconnect/training.hpp"

namespace interconnect {

std::vector<StrategyGradCheck> model_gradcheck(const ModelConfig& config, const TaskSpec& task,
                                               std::span<const FreezeStrategy> strategies,
                                               const GradCheckOptions& options, std::uint64_t seed,
                                               std::size_t n_samples, double label_smoothing) {
  task.validate(config.downsampler);
  const auto corpus = generate_corpus(task, n_samples, Split::Train);
  std::vector<Tensor<double>> waves;
  std::vector<TeacherForcing> pairs;
  for (const auto& s : corpus) {
    waves.emplace_back(Shape{s.waveform.size()}, std::vector<double>(s.waveform.begin(), s.waveform.end()));
    pairs.push_back(teacher_forcing(make_target_sequence(lang_tag(s.direction), s.target)));
  }

  SpeechTranslator<double> model(config, seed);
  auto loss_fn = [&]() {
    ForwardContext ctx;
    std::vector<Tensor<double>> logits;
    std::vector<std::vector<int>> targets;
    for (std::size_t i = 0; i < waves.size(); ++i) {
      logits.push_back(model.logits(waves[i], pairs[i].inputs, ctx));
      targets.push_back(pairs[i].targets);
    }
    return label_smoothed_loss<double>(logits, targets, label_smoothing);
  };

  std::vector<StrategyGradCheck> out;
  for (FreezeStrategy strategy : strategies) {
    model.apply_freeze(strategy);
    std::vector<GradCheckParam> params;
    for (auto& e : model.params().entries()) {
      if (e.tensor.requires_grad()) params.push_back({e.spec.name, e.tensor});
    }
    out.push_back({strategy, finite_diff_check(loss_fn, params, options)});
    model.params().zero_grad();
  }
  return out;
}

}  // namespace interconnect
