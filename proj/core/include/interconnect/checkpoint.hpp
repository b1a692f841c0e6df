#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "interconnect/model.hpp"
#include "interconnect/training.hpp"

namespace interconnect {

inline constexpr int kCheckpointFormatVersion = 1;

struct TrainingState {
  FreezeStrategy strategy = FreezeStrategy::FullFineTune;
  std::size_t step = 0;
  TriStageSchedule schedule;
  CounterRng rng;
};

// A checkpoint directory holds manifest.json and params.bin. Parameters come
// first in layout order, then the Adam moments as adam.m.<name> and
// adam.v.<name>; every buffer is raw little-endian scalars.
template <typename T>
struct Checkpoint {
  ModelConfig model_config;
  std::uint64_t model_seed = 0;
  TrainingState state;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::pair<std::string, std::vector<T>>> params;  // layout order
  std::vector<typename Adam<T>::Moments> moments;

  // Fresh model carrying the stored parameters.
  SpeechTranslator<T> build_model() const;
  // Overwrites parameters in place. Shapes are checked before anything is
  // written, so a mismatch leaves `model` untouched.
  void restore_into(SpeechTranslator<T>& model) const;
  // Parameters, optimizer moments, step and key counter.
  void restore_into(Trainer<T>& trainer) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const SpeechTranslator<T>& model,
                     const TrainingState& state, const Adam<T>* adam = nullptr,
                     std::uint64_t model_seed = 0);

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Trainer<T>& trainer, std::uint64_t model_seed = 0);

// Reads and validates the whole directory before returning. Failures raise
// CheckpointError with a kind per cause (I/O, malformed manifest, format
// version, truncated data, shape mismatch, missing tensor).
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir);

}  // namespace interconnect
