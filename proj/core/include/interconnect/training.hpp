#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "interconnect/model.hpp"
#include "interconnect/synthdata.hpp"

namespace interconnect {

// Linear warm-up from init_scale*base to base, constant hold, then
// exponential decay to final_scale*base at total_steps.
struct TriStageSchedule {
  double base_lr = 2.5e-4;
  double warmup_frac = 0.15;
  double hold_frac = 0.15;
  double decay_frac = 0.70;
  double init_scale = 0.01;
  double final_scale = 0.01;
  std::size_t total_steps = 1000;

  void validate() const;
  std::size_t warmup_end() const;
  std::size_t hold_end() const;
};

// Defined for 0 <= step <= total_steps; ContractError otherwise.
double lr_at(std::size_t step, const TriStageSchedule& schedule);

// Label-smoothed cross-entropy, averaged over the tokens of each sentence and
// then over sentences. logits[i] is [len_i x V]; targets[i] has len_i entries,
// where kIgnore and kPad positions are excluded. Sentences without a scored
// position drop out of the average; a batch with none is a ContractError.
//   per token: (1 - s) * -log p[y] + s * mean_v(-log p[v])
template <typename T>
Tensor<T> label_smoothed_loss(std::span<const Tensor<T>> logits,
                              std::span<const std::vector<int>> targets, double smoothing);

struct ClipResult {
  double norm = 0.0;   // global L2 norm before clipping
  double scale = 1.0;  // factor applied to every gradient
};

// Scales every gradient by max_norm / norm when the global norm exceeds
// max_norm. Tensors without a gradient buffer are ignored.
template <typename T>
ClipResult clip_gradients(std::span<Tensor<T>> params, double max_norm);

template <typename T>
ClipResult clip_gradients(ParamStore<T>& params, double max_norm);

struct AdamConfig {
  double beta1 = 0.99;
  double beta2 = 0.98;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are created lazily, only for parameters that
// require a gradient, and kept in layout order.
template <typename T>
class Adam {
 public:
  struct Moments {
    std::string name;
    std::vector<T> m;
    std::vector<T> v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One update of every requires_grad parameter. Parameters without a
  // gradient buffer count as zero-gradient.
  void step(ParamStore<T>& params, double lr);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<Moments>& moments() const noexcept { return moments_; }

  void restore(std::uint64_t steps, std::vector<Moments> moments);

 private:
  Moments& moments_for(const std::string& name, std::size_t size);

  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Moments> moments_;
};

struct TrainConfig {
  std::size_t batch_size = 8;    // sentences per micro-batch
  std::size_t accumulation = 4;  // micro-batches per optimizer step
  double label_smoothing = 0.2;
  double clip_norm = 20.0;
  double dropout = 0.1;
  double augment_prob = 0.8;
  AdamConfig adam;
  std::uint64_t seed = 1;
  // Samples above either limit are left out of the training order.
  std::size_t max_source_samples = 400000;
  std::size_t max_target_tokens = 1024;

  void validate() const;
};

struct StepLog {
  std::size_t step = 0;
  double loss = 0.0;  // mean of the micro-batch losses
  double lr = 0.0;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

// Optimizer steps over a fixed corpus. The sample order is a pure function of
// (seed, step), and the only other state (Adam moments, the dropout/masking
// key counter) is checkpointed, so a resumed run replays an uninterrupted one
// exactly.
template <typename T>
class Trainer {
 public:
  Trainer(SpeechTranslator<T>& model, std::span<const Sample> corpus, const TrainConfig& config,
          FreezeStrategy strategy, const TriStageSchedule& schedule);

  StepLog step();
  // Runs until `total` optimizer steps have been taken in total.
  std::vector<StepLog> run_until(std::size_t total,
                                 const std::function<void(const StepLog&)>& on_step = {});

  std::size_t step_index() const noexcept { return step_; }
  const TrainConfig& config() const noexcept { return config_; }
  FreezeStrategy strategy() const noexcept { return strategy_; }
  const TriStageSchedule& schedule() const noexcept { return schedule_; }
  SpeechTranslator<T>& model() noexcept { return model_; }
  const SpeechTranslator<T>& model() const noexcept { return model_; }
  Adam<T>& optimizer() noexcept { return adam_; }
  const Adam<T>& optimizer() const noexcept { return adam_; }
  const CounterRng& rng() const noexcept { return rng_; }

  void restore(std::size_t step, const CounterRng& rng) {
    step_ = step;
    rng_ = rng;
  }

  // Corpus index of the b-th sentence of micro-batch `micro` at `step`.
  std::size_t sample_index(std::size_t step, std::size_t micro, std::size_t b) const;

 private:
  T micro_batch_loss(std::size_t micro);

  SpeechTranslator<T>& model_;
  std::span<const Sample> corpus_;
  std::vector<std::size_t> eligible_;
  TrainConfig config_;
  FreezeStrategy strategy_;
  TriStageSchedule schedule_;
  Adam<T> adam_;
  CounterRng rng_;
  std::size_t step_ = 0;
  mutable std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  mutable std::vector<std::size_t> order_;
};

// Training log CSV: step,loss,lr,grad_norm,clip_scale
void write_train_log(const std::filesystem::path& path, std::span<const StepLog> logs);

// Self-supervised warm-up of the downsampler and encoder: the waveform is
// corrupted with noise and span masking, and a temporary linear head on the
// last encoder output regresses the clean samples of each frame's stride.
struct DenoisingConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double input_noise = 0.5;
  std::uint64_t seed = 7;
};

// Returns the per-step mean squared error. Leaves every requires_grad flag as
// it found it.
template <typename T>
std::vector<double> pretrain_encoder_denoising(SpeechTranslator<T>& model,
                                               std::span<const Sample> corpus,
                                               const DenoisingConfig& config);

}  // namespace interconnect
