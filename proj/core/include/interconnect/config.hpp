#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "interconnect/model.hpp"
#include "interconnect/synthdata.hpp"
#include "interconnect/training.hpp"

namespace interconnect {

enum class ModelPreset { Desk, PaperShape };

const char* to_string(ModelPreset p) noexcept;
ModelPreset model_preset_from_string(std::string_view name);
ModelConfig preset_model(ModelPreset p);

// Everything one CLI run needs. `seed` is the master seed: it seeds model
// initialization, the training order and every dropout/masking key.
struct RunConfig {
  ModelPreset preset = ModelPreset::Desk;
  ModelConfig model = ModelConfig::desk();
  FreezeStrategy strategy = FreezeStrategy::EncoderFrozen;
  TrainConfig train;
  TriStageSchedule schedule;
  DenoisingConfig pretrain{0};  // steps 0: no warm-up
  TaskSpec task;
  std::size_t train_samples = 600;
  std::size_t dev_samples = 60;
  std::size_t test_samples = 60;
  std::size_t max_decode_len = 16;
  std::string data_dir = "data";
  std::uint64_t seed = 1;

  void validate() const;
};

// JSON conversion. Parsing overlays the keys present onto the current value,
// so a partial document inherits defaults; unknown keys are ConfigErrors.
void to_json(nlohmann::json& j, const ConvLayerSpec& v);
void to_json(nlohmann::json& j, const DownsamplerSpec& v);
void to_json(nlohmann::json& j, const EncoderConfig& v);
void to_json(nlohmann::json& j, const MaskingSpec& v);
void to_json(nlohmann::json& j, const ConnectorConfig& v);
void to_json(nlohmann::json& j, const AdaptorConfig& v);
void to_json(nlohmann::json& j, const DecoderConfig& v);
void to_json(nlohmann::json& j, const ModelConfig& v);
void to_json(nlohmann::json& j, const AdamConfig& v);
void to_json(nlohmann::json& j, const TrainConfig& v);
void to_json(nlohmann::json& j, const TriStageSchedule& v);
void to_json(nlohmann::json& j, const DenoisingConfig& v);
void to_json(nlohmann::json& j, const TaskSpec& v);
void to_json(nlohmann::json& j, const RunConfig& v);

void overlay(const nlohmann::json& j, DownsamplerSpec& v);
void overlay(const nlohmann::json& j, EncoderConfig& v);
void overlay(const nlohmann::json& j, MaskingSpec& v);
void overlay(const nlohmann::json& j, ConnectorConfig& v);
void overlay(const nlohmann::json& j, AdaptorConfig& v);
void overlay(const nlohmann::json& j, DecoderConfig& v);
void overlay(const nlohmann::json& j, ModelConfig& v);
void overlay(const nlohmann::json& j, AdamConfig& v);
void overlay(const nlohmann::json& j, TrainConfig& v);
void overlay(const nlohmann::json& j, TriStageSchedule& v);
void overlay(const nlohmann::json& j, DenoisingConfig& v);
void overlay(const nlohmann::json& j, TaskSpec& v);
// A "preset" key resets the model to that preset before "model" is applied.
void overlay(const nlohmann::json& j, RunConfig& v);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace interconnect
