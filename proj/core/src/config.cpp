#include "interconnect/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string_view>

namespace interconnect {

using nlohmann::json;

const char* to_string(ModelPreset p) noexcept {
  return p == ModelPreset::Desk ? "desk" : "paper-shape";
}

ModelPreset model_preset_from_string(std::string_view name) {
  if (name == "desk") return ModelPreset::Desk;
  if (name == "paper-shape" || name == "paper") return ModelPreset::PaperShape;
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk or paper-shape)");
}

ModelConfig preset_model(ModelPreset p) {
  return p == ModelPreset::Desk ? ModelConfig::desk() : ModelConfig::paper_shape();
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  schedule.validate();
  task.validate(model.downsampler);
  if (task.required_vocab() > model.decoder.vocab_size) {
    throw ConfigError("decoder vocab " + std::to_string(model.decoder.vocab_size) +
                      " cannot hold the task's " + std::to_string(task.required_vocab()) + " tokens");
  }
  if (train_samples == 0) throw ConfigError("train_samples must be positive");
  if (max_decode_len == 0) throw ConfigError("max_decode_len must be positive");
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> keys, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename V>
void field(const json& j, const char* key, V& out, const char* where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

template <typename E, typename Parse>
void enum_field(const json& j, const char* key, E& out, Parse parse, const char* where) {
  std::string name;
  field(j, key, name, where);
  if (!name.empty()) out = parse(name);
}

}  // namespace

void to_json(json& j, const ConvLayerSpec& v) {
  j = json{{"channels", v.channels}, {"kernel", v.kernel}, {"stride", v.stride}};
}

void to_json(json& j, const DownsamplerSpec& v) {
  json layers = json::array();
  for (const auto& l : v.layers) layers.push_back(l);
  j = json{{"layers", layers}};
}

void to_json(json& j, const EncoderConfig& v) {
  j = json{{"num_layers", v.num_layers}, {"dim", v.dim},     {"ffn_dim", v.ffn_dim},
           {"heads", v.heads},           {"extra_layers", v.extra_layers}};
}

void to_json(json& j, const MaskingSpec& v) {
  j = json{{"time_span", v.time_span},
           {"time_prob", v.time_prob},
           {"channel_span", v.channel_span},
           {"channel_prob", v.channel_prob}};
}

void to_json(json& j, const ConnectorConfig& v) {
  j = json{{"mode", to_string(v.mode)},
           {"normalize_weights", v.normalize_weights},
           {"include_layer0", v.include_layer0}};
}

void to_json(json& j, const AdaptorConfig& v) {
  j = json{{"num_layers", v.num_layers}, {"channels", v.channels}, {"kernel", v.kernel},
           {"stride", v.stride},         {"padding", v.padding}};
}

void to_json(json& j, const DecoderConfig& v) {
  j = json{{"num_layers", v.num_layers}, {"dim", v.dim},   {"ffn_dim", v.ffn_dim},
           {"heads", v.heads},           {"vocab_size", v.vocab_size}};
}

void to_json(json& j, const ModelConfig& v) {
  j = json{{"downsampler", v.downsampler}, {"encoder", v.encoder}, {"masking", v.masking},
           {"connector", v.connector},     {"adaptor", v.adaptor}, {"decoder", v.decoder}};
}

void to_json(json& j, const AdamConfig& v) {
  j = json{{"beta1", v.beta1}, {"beta2", v.beta2}, {"eps", v.eps}};
}

void to_json(json& j, const TrainConfig& v) {
  j = json{{"batch_size", v.batch_size},
           {"accumulation", v.accumulation},
           {"label_smoothing", v.label_smoothing},
           {"clip_norm", v.clip_norm},
           {"dropout", v.dropout},
           {"augment_prob", v.augment_prob},
           {"adam", v.adam},
           {"max_source_samples", v.max_source_samples},
           {"max_target_tokens", v.max_target_tokens}};
}

void to_json(json& j, const TriStageSchedule& v) {
  j = json{{"base_lr", v.base_lr},         {"warmup_frac", v.warmup_frac}, {"hold_frac", v.hold_frac},
           {"decay_frac", v.decay_frac},   {"init_scale", v.init_scale},   {"final_scale", v.final_scale},
           {"total_steps", v.total_steps}};
}

void to_json(json& j, const DenoisingConfig& v) {
  j = json{{"steps", v.steps}, {"batch_size", v.batch_size}, {"lr", v.lr}, {"input_noise", v.input_noise}};
}

void to_json(json& j, const TaskSpec& v) {
  j = json{{"source_vocab", v.source_vocab}, {"samples_per_token", v.samples_per_token},
           {"noise_std", v.noise_std},       {"min_len", v.min_len},
           {"max_len", v.max_len},           {"seed", v.seed}};
}

void to_json(json& j, const RunConfig& v) {
  j = json{{"preset", to_string(v.preset)},
           {"model", v.model},
           {"strategy", to_string(v.strategy)},
           {"train", v.train},
           {"schedule", v.schedule},
           {"pretrain", v.pretrain},
           {"task", v.task},
           {"train_samples", v.train_samples},
           {"dev_samples", v.dev_samples},
           {"test_samples", v.test_samples},
           {"max_decode_len", v.max_decode_len},
           {"data_dir", v.data_dir},
           {"seed", v.seed}};
}

void overlay(const json& j, DownsamplerSpec& v) {
  constexpr const char* where = "model.downsampler";
  check_keys(j, {"layers"}, where);
  const auto it = j.find("layers");
  if (it == j.end()) return;
  if (!it->is_array()) throw ConfigError("model.downsampler.layers must be an array");
  DownsamplerSpec out;
  for (const auto& l : *it) {
    check_keys(l, {"channels", "kernel", "stride"}, "model.downsampler.layers[]");
    ConvLayerSpec layer{0, 0, 0};
    field(l, "channels", layer.channels, where);
    field(l, "kernel", layer.kernel, where);
    field(l, "stride", layer.stride, where);
    out.layers.push_back(layer);
  }
  v = std::move(out);
}

void overlay(const json& j, EncoderConfig& v) {
  constexpr const char* where = "model.encoder";
  check_keys(j, {"num_layers", "dim", "ffn_dim", "heads", "extra_layers"}, where);
  field(j, "num_layers", v.num_layers, where);
  field(j, "dim", v.dim, where);
  field(j, "ffn_dim", v.ffn_dim, where);
  field(j, "heads", v.heads, where);
  field(j, "extra_layers", v.extra_layers, where);
}

void overlay(const json& j, MaskingSpec& v) {
  constexpr const char* where = "model.masking";
  check_keys(j, {"time_span", "time_prob", "channel_span", "channel_prob"}, where);
  field(j, "time_span", v.time_span, where);
  field(j, "time_prob", v.time_prob, where);
  field(j, "channel_span", v.channel_span, where);
  field(j, "channel_prob", v.channel_prob, where);
}

void overlay(const json& j, ConnectorConfig& v) {
  constexpr const char* where = "model.connector";
  check_keys(j, {"mode", "normalize_weights", "include_layer0"}, where);
  enum_field(j, "mode", v.mode, connector_mode_from_string, where);
  field(j, "normalize_weights", v.normalize_weights, where);
  field(j, "include_layer0", v.include_layer0, where);
}

void overlay(const json& j, AdaptorConfig& v) {
  constexpr const char* where = "model.adaptor";
  check_keys(j, {"num_layers", "channels", "kernel", "stride", "padding"}, where);
  field(j, "num_layers", v.num_layers, where);
  field(j, "channels", v.channels, where);
  field(j, "kernel", v.kernel, where);
  field(j, "stride", v.stride, where);
  field(j, "padding", v.padding, where);
}

void overlay(const json& j, DecoderConfig& v) {
  constexpr const char* where = "model.decoder";
  check_keys(j, {"num_layers", "dim", "ffn_dim", "heads", "vocab_size"}, where);
  field(j, "num_layers", v.num_layers, where);
  field(j, "dim", v.dim, where);
  field(j, "ffn_dim", v.ffn_dim, where);
  field(j, "heads", v.heads, where);
  field(j, "vocab_size", v.vocab_size, where);
}

void overlay(const json& j, ModelConfig& v) {
  check_keys(j, {"downsampler", "encoder", "masking", "connector", "adaptor", "decoder"}, "model");
  if (j.contains("downsampler")) overlay(j["downsampler"], v.downsampler);
  if (j.contains("encoder")) overlay(j["encoder"], v.encoder);
  if (j.contains("masking")) overlay(j["masking"], v.masking);
  if (j.contains("connector")) overlay(j["connector"], v.connector);
  if (j.contains("adaptor")) overlay(j["adaptor"], v.adaptor);
  if (j.contains("decoder")) overlay(j["decoder"], v.decoder);
}

void overlay(const json& j, AdamConfig& v) {
  constexpr const char* where = "train.adam";
  check_keys(j, {"beta1", "beta2", "eps"}, where);
  field(j, "beta1", v.beta1, where);
  field(j, "beta2", v.beta2, where);
  field(j, "eps", v.eps, where);
}

void overlay(const json& j, TrainConfig& v) {
  constexpr const char* where = "train";
  check_keys(j,
             {"batch_size", "accumulation", "label_smoothing", "clip_norm", "dropout", "augment_prob", "adam",
              "max_source_samples", "max_target_tokens"},
             where);
  field(j, "batch_size", v.batch_size, where);
  field(j, "accumulation", v.accumulation, where);
  field(j, "label_smoothing", v.label_smoothing, where);
  field(j, "clip_norm", v.clip_norm, where);
  field(j, "dropout", v.dropout, where);
  field(j, "augment_prob", v.augment_prob, where);
  if (j.contains("adam")) overlay(j["adam"], v.adam);
  field(j, "max_source_samples", v.max_source_samples, where);
  field(j, "max_target_tokens", v.max_target_tokens, where);
}

void overlay(const json& j, TriStageSchedule& v) {
  constexpr const char* where = "schedule";
  check_keys(j, {"base_lr", "warmup_frac", "hold_frac", "decay_frac", "init_scale", "final_scale", "total_steps"},
             where);
  field(j, "base_lr", v.base_lr, where);
  field(j, "warmup_frac", v.warmup_frac, where);
  field(j, "hold_frac", v.hold_frac, where);
  field(j, "decay_frac", v.decay_frac, where);
  field(j, "init_scale", v.init_scale, where);
  field(j, "final_scale", v.final_scale, where);
  field(j, "total_steps", v.total_steps, where);
}

void overlay(const json& j, DenoisingConfig& v) {
  constexpr const char* where = "pretrain";
  check_keys(j, {"steps", "batch_size", "lr", "input_noise"}, where);
  field(j, "steps", v.steps, where);
  field(j, "batch_size", v.batch_size, where);
  field(j, "lr", v.lr, where);
  field(j, "input_noise", v.input_noise, where);
}

void overlay(const json& j, TaskSpec& v) {
  constexpr const char* where = "task";
  check_keys(j, {"source_vocab", "samples_per_token", "noise_std", "min_len", "max_len", "seed"}, where);
  field(j, "source_vocab", v.source_vocab, where);
  field(j, "samples_per_token", v.samples_per_token, where);
  field(j, "noise_std", v.noise_std, where);
  field(j, "min_len", v.min_len, where);
  field(j, "max_len", v.max_len, where);
  field(j, "seed", v.seed, where);
}

void overlay(const json& j, RunConfig& v) {
  constexpr const char* where = "config";
  check_keys(j,
             {"preset", "model", "strategy", "train", "schedule", "pretrain", "task", "train_samples", "dev_samples",
              "test_samples", "max_decode_len", "data_dir", "seed"},
             where);
  if (j.contains("preset")) {
    std::string name;
    field(j, "preset", name, where);
    v.preset = model_preset_from_string(name);
    v.model = preset_model(v.preset);
  }
  if (j.contains("model")) overlay(j["model"], v.model);
  enum_field(j, "strategy", v.strategy, freeze_strategy_from_string, where);
  if (j.contains("train")) overlay(j["train"], v.train);
  if (j.contains("schedule")) overlay(j["schedule"], v.schedule);
  if (j.contains("pretrain")) overlay(j["pretrain"], v.pretrain);
  if (j.contains("task")) overlay(j["task"], v.task);
  field(j, "train_samples", v.train_samples, where);
  field(j, "dev_samples", v.dev_samples, where);
  field(j, "test_samples", v.test_samples, where);
  field(j, "max_decode_len", v.max_decode_len, where);
  field(j, "data_dir", v.data_dir, where);
  field(j, "seed", v.seed, where);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig config;
  overlay(j, config);
  return config;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json(config).dump(2) << '\n';
}

}  // namespace interconnect
