#include "interconnect/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

namespace interconnect {

void TriStageSchedule::validate() const {
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be >= 0");
  if (warmup_frac < 0.0 || hold_frac < 0.0 || decay_frac < 0.0 ||
      std::abs(warmup_frac + hold_frac + decay_frac - 1.0) > 1e-9) {
    throw ConfigError("schedule phase fractions must be non-negative and sum to 1");
  }
  if (!(init_scale > 0.0) || !(final_scale > 0.0)) throw ConfigError("lr scales must be positive");
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
}

std::size_t TriStageSchedule::warmup_end() const {
  return static_cast<std::size_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
}

std::size_t TriStageSchedule::hold_end() const {
  const auto end = static_cast<std::size_t>(
      std::llround((warmup_frac + hold_frac) * static_cast<double>(total_steps)));
  return std::min(end, total_steps);
}

double lr_at(std::size_t step, const TriStageSchedule& s) {
  s.validate();
  if (step > s.total_steps) {
    throw ContractError("lr_at: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(s.total_steps) + "]");
  }
  const std::size_t warm = s.warmup_end();
  const std::size_t hold = s.hold_end();
  if (step < warm) {
    const double frac = static_cast<double>(step) / static_cast<double>(warm);
    return s.base_lr * (s.init_scale + (1.0 - s.init_scale) * frac);
  }
  if (step < hold || hold == s.total_steps) return s.base_lr;
  if (step == s.total_steps) return s.base_lr * s.final_scale;
  const double frac = static_cast<double>(step - hold) / static_cast<double>(s.total_steps - hold);
  return s.base_lr * std::exp(std::log(s.final_scale) * frac);
}

template <typename T>
Tensor<T> label_smoothed_loss(std::span<const Tensor<T>> logits,
                              std::span<const std::vector<int>> targets, double smoothing) {
  if (logits.size() != targets.size()) {
    throw ShapeError("label_smoothed_loss: " + std::to_string(logits.size()) + " logit tensors for " +
                     std::to_string(targets.size()) + " target sequences");
  }
  if (!(smoothing >= 0.0 && smoothing <= 1.0)) throw ConfigError("label smoothing must lie in [0, 1]");

  struct Row {
    std::size_t sentence;
    std::size_t row;
    int target;
    double lse;
  };
  std::vector<Row> rows;
  std::vector<std::size_t> tokens_per_sentence(logits.size(), 0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& x = logits[i];
    if (x.rank() != 2 || x.dim(0) != targets[i].size()) {
      throw ShapeError("label_smoothed_loss: logits " + shape_str(x.shape()) + " vs " +
                       std::to_string(targets[i].size()) + " targets");
    }
    const std::size_t v = x.dim(1);
    for (std::size_t r = 0; r < targets[i].size(); ++r) {
      const int y = targets[i][r];
      if (y == tokens::kIgnore || y == tokens::kPad) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= v) {
        throw IndexError("target " + std::to_string(y) + " outside vocab of " + std::to_string(v));
      }
      const T* row = x.data().data() + r * v;
      double mx = row[0];
      for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, static_cast<double>(row[c]));
      double z = 0.0;
      for (std::size_t c = 0; c < v; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
      rows.push_back({i, r, y, mx + std::log(z)});
      ++tokens_per_sentence[i];
    }
  }
  const auto sentences = static_cast<std::size_t>(
      std::count_if(tokens_per_sentence.begin(), tokens_per_sentence.end(), [](auto n) { return n > 0; }));
  if (sentences == 0) throw ContractError("label_smoothed_loss: batch has no scored target position");

  double total = 0.0;
  for (const auto& r : rows) {
    const auto& x = logits[r.sentence];
    const std::size_t v = x.dim(1);
    const T* row = x.data().data() + r.row * v;
    double mean_x = 0.0;
    for (std::size_t c = 0; c < v; ++c) mean_x += row[c];
    mean_x /= static_cast<double>(v);
    const double nll = r.lse - static_cast<double>(row[r.target]);
    const double uniform_nll = r.lse - mean_x;
    total += ((1.0 - smoothing) * nll + smoothing * uniform_nll) /
             static_cast<double>(tokens_per_sentence[r.sentence]);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(sentences)));

  if (auto* tape = recording_tape<T>(logits)) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> inputs(logits.begin(), logits.end());
    tape->record([inputs, rows = std::move(rows), tokens_per_sentence, sentences, smoothing, out]() mutable {
      if (!out.has_grad()) return;
      const double dy = out.grad()[0];
      for (const auto& r : rows) {
        auto& x = inputs[r.sentence];
        if (!x.requires_grad()) continue;
        const std::size_t v = x.dim(1);
        const T* row = x.data().data() + r.row * v;
        T* g = x.mutable_grad().data() + r.row * v;
        const double w = dy / static_cast<double>(sentences * tokens_per_sentence[r.sentence]);
        const double off = smoothing / static_cast<double>(v);
        for (std::size_t c = 0; c < v; ++c) {
          const double p = std::exp(static_cast<double>(row[c]) - r.lse);
          const double q = off + (static_cast<int>(c) == r.target ? 1.0 - smoothing : 0.0);
          g[c] += static_cast<T>(w * (p - q));
        }
      }
    });
  }
  return out;
}

template <typename T>
ClipResult clip_gradients(std::span<Tensor<T>> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  ClipResult result{std::sqrt(sq), 1.0};
  if (result.norm > max_norm) {
    result.scale = max_norm / result.norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.mutable_grad()) g = static_cast<T>(g * result.scale);
    }
  }
  return result;
}

template <typename T>
ClipResult clip_gradients(ParamStore<T>& params, double max_norm) {
  std::vector<Tensor<T>> tensors;
  for (auto& e : params.entries()) tensors.push_back(e.tensor);
  return clip_gradients<T>(std::span<Tensor<T>>(tensors), max_norm);
}

template <typename T>
typename Adam<T>::Moments& Adam<T>::moments_for(const std::string& name, std::size_t size) {
  for (auto& m : moments_) {
    if (m.name == name) return m;
  }
  moments_.push_back({name, std::vector<T>(size, T(0)), std::vector<T>(size, T(0))});
  return moments_.back();
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params, double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  for (auto& e : params.entries()) {
    auto& p = e.tensor;
    if (!p.requires_grad()) continue;
    auto& mom = moments_for(e.spec.name, p.numel());
    if (mom.m.size() != p.numel()) throw ShapeError("adam moments of " + e.spec.name + " have the wrong size");
    const bool has = p.has_grad();
    auto grad = p.grad();
    auto data = p.data();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const T g = has ? grad[i] : T(0);
      mom.m[i] = b1 * mom.m[i] + (T(1) - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(mom.m[i]) / c1;
      const double vhat = static_cast<double>(mom.v[i]) / c2;
      data[i] = static_cast<T>(static_cast<double>(data[i]) - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template <typename T>
void Adam<T>::restore(std::uint64_t steps, std::vector<Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

void TrainConfig::validate() const {
  if (batch_size == 0 || accumulation == 0) throw ConfigError("batch_size and accumulation must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(augment_prob >= 0.0 && augment_prob <= 1.0)) throw ConfigError("augment_prob must lie in [0, 1]");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("adam betas must lie in [0, 1) and eps must be positive");
  }
  if (max_source_samples == 0 || max_target_tokens == 0) throw ConfigError("length limits must be positive");
}

namespace {

constexpr std::uint64_t kOrderStream = hash_name("train.order");

template <typename T>
Tensor<T> wave_tensor(std::span<const float> wave) {
  return Tensor<T>({wave.size()}, std::vector<T>(wave.begin(), wave.end()));
}

}  // namespace

template <typename T>
Trainer<T>::Trainer(SpeechTranslator<T>& model, std::span<const Sample> corpus, const TrainConfig& config,
                    FreezeStrategy strategy, const TriStageSchedule& schedule)
    : model_(model),
      corpus_(corpus),
      config_(config),
      strategy_(strategy),
      schedule_(schedule),
      adam_(config.adam),
      rng_(mix_keys(config.seed, hash_name("train.rng"))) {
  config_.validate();
  schedule_.validate();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    // lang tag, BOS and EOS travel with the content tokens.
    if (corpus[i].waveform.size() <= config_.max_source_samples &&
        corpus[i].target.size() + 3 <= config_.max_target_tokens) {
      eligible_.push_back(i);
    }
  }
  if (eligible_.empty()) throw ContractError("training corpus has no sample within the length limits");
  model_.apply_freeze(strategy_);
  model_.configure_dropout(strategy_, config_.dropout);
}

template <typename T>
std::size_t Trainer<T>::sample_index(std::size_t step, std::size_t micro, std::size_t b) const {
  const std::size_t n = eligible_.size();
  const std::size_t cursor = (step * config_.accumulation + micro) * config_.batch_size + b;
  const std::size_t epoch = cursor / n;
  if (epoch != cached_epoch_) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    const std::uint64_t key = mix_keys(mix_keys(config_.seed, kOrderStream), epoch);
    for (std::size_t i = n; i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(key, i) * static_cast<double>(i)));
      std::swap(order_[i - 1], order_[j]);
    }
    cached_epoch_ = epoch;
  }
  return eligible_[order_[cursor % n]];
}

template <typename T>
T Trainer<T>::micro_batch_loss(std::size_t micro) {
  Tape<T> tape;
  TapeGuard<T> guard(tape);
  ForwardContext ctx{true, &rng_};
  std::vector<Tensor<T>> logits;
  std::vector<std::vector<int>> targets;
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    const Sample& s = corpus_[sample_index(step_, micro, b)];
    const auto wave = augment_waveform(s.waveform, config_.augment_prob, rng_.next_key());
    const auto tf = teacher_forcing(make_target_sequence(lang_tag(s.direction), s.target));
    logits.push_back(model_.logits(wave_tensor<T>(wave), tf.inputs, ctx));
    targets.push_back(tf.targets);
  }
  Tensor<T> loss = label_smoothed_loss<T>(logits, targets, config_.label_smoothing);
  const T value = loss.item();
  if (!std::isfinite(static_cast<double>(value))) {
    throw NumericError(fmt::format("training diverged: non-finite loss at step {} micro-batch {}", step_, micro));
  }
  if (!tape.empty()) tape.backward(loss);
  return value;
}

template <typename T>
StepLog Trainer<T>::step() {
  StepLog log;
  log.step = step_;
  log.lr = lr_at(step_, schedule_);
  auto& params = model_.params();
  params.zero_grad();
  double total = 0.0;
  for (std::size_t micro = 0; micro < config_.accumulation; ++micro) total += micro_batch_loss(micro);
  log.loss = total / static_cast<double>(config_.accumulation);
  const ClipResult clip = clip_gradients(params, config_.clip_norm);
  if (!std::isfinite(clip.norm)) {
    throw NumericError(fmt::format("training diverged: non-finite gradient norm at step {}", step_));
  }
  log.grad_norm = clip.norm;
  log.clip_scale = clip.scale;
  adam_.step(params, log.lr);
  params.zero_grad();
  ++step_;
  return log;
}

template <typename T>
std::vector<StepLog> Trainer<T>::run_until(std::size_t total,
                                           const std::function<void(const StepLog&)>& on_step) {
  std::vector<StepLog> logs;
  while (step_ < total) {
    logs.push_back(step());
    if (on_step) on_step(logs.back());
  }
  return logs;
}

void write_train_log(const std::filesystem::path& path, std::span<const StepLog> logs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "step,loss,lr,grad_norm,clip_scale\n";
  for (const auto& l : logs) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", l.step, l.loss, l.lr, l.grad_norm, l.clip_scale);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
std::vector<double> pretrain_encoder_denoising(SpeechTranslator<T>& model, std::span<const Sample> corpus,
                                               const DenoisingConfig& config) {
  if (corpus.empty()) throw ContractError("denoising pre-training needs a non-empty corpus");
  if (config.batch_size == 0) throw ConfigError("denoising batch_size must be positive");
  const std::size_t d = model.config().encoder.dim;
  const std::size_t stride = model.config().downsampler.total_stride();

  ParamLayout head_layout;
  append_linear_layout(head_layout, "pretrain.head", d, stride, Component::Encoder, ParamKind::Projection);
  ParamStore<T> head_params(head_layout, mix_keys(config.seed, hash_name("pretrain.head")));
  for (auto& e : head_params.entries()) e.tensor.set_requires_grad(true);
  const Linear<T> head(head_params, "pretrain.head");

  auto& params = model.params();
  std::vector<bool> saved;
  for (auto& e : params.entries()) {
    saved.push_back(e.tensor.requires_grad());
    const bool train = e.spec.component == Component::Downsampler || e.spec.component == Component::Encoder;
    e.tensor.set_requires_grad(train);
  }

  Adam<T> adam_model, adam_head;
  CounterRng rng(mix_keys(config.seed, hash_name("pretrain.rng")));
  std::vector<double> losses;
  const T inv_batch = T(1) / static_cast<T>(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    params.zero_grad();
    head_params.zero_grad();
    double total = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t cursor = step * config.batch_size + b;
      const Sample& s = corpus[cursor % corpus.size()];
      const std::uint64_t key = rng.next_key();
      std::vector<T> noisy(s.waveform.begin(), s.waveform.end());
      for (std::size_t i = 0; i < noisy.size(); ++i) {
        noisy[i] += static_cast<T>(config.input_noise * standard_normal(key, i));
      }
      Tape<T> tape;
      TapeGuard<T> guard(tape);
      ForwardContext ctx{true, &rng};
      const std::size_t n = noisy.size();
      const auto enc = model.encode(Tensor<T>({n}, std::move(noisy)), ctx);
      const Tensor<T>& top = enc.layer_outputs.empty() ? enc.downsampler_output : enc.layer_outputs.back();
      const Tensor<T> pred = head(top);
      const std::size_t frames = pred.dim(0);
      Tensor<T> target({frames, stride});
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t j = 0; j < stride; ++j) target.at(t, j) = static_cast<T>(-s.waveform[t * stride + j]);
      }
      const Tensor<T> diff = add(pred, target);
      Tensor<T> loss = scale(mean(mul(diff, diff)), inv_batch);
      total += static_cast<double>(loss.item());
      tape.backward(loss);
    }
    if (!std::isfinite(total)) {
      throw NumericError(fmt::format("denoising pre-training diverged at step {}", step));
    }
    losses.push_back(total);
    adam_model.step(params, config.lr);
    adam_head.step(head_params, config.lr);
  }
  params.zero_grad();
  std::size_t i = 0;
  for (auto& e : params.entries()) e.tensor.set_requires_grad(saved[i++]);
  return losses;
}

#define INTERCONNECT_INSTANTIATE(T)                                                                   \
  template Tensor<T> label_smoothed_loss<T>(std::span<const Tensor<T>>, std::span<const std::vector<int>>, \
                                            double);                                                  \
  template ClipResult clip_gradients<T>(std::span<Tensor<T>>, double);                                \
  template ClipResult clip_gradients<T>(ParamStore<T>&, double);                                      \
  template class Adam<T>;                                                                             \
  template class Trainer<T>;                                                                          \
  template std::vector<double> pretrain_encoder_denoising<T>(SpeechTranslator<T>&, std::span<const Sample>, \
                                                             const DenoisingConfig&);

INTERCONNECT_INSTANTIATE(float)
INTERCONNECT_INSTANTIATE(double)

#undef INTERCONNECT_INSTANTIATE

}  // namespace interconnect
