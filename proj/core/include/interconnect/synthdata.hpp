#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "interconnect/encoder.hpp"

namespace interconnect {

// Three synthetic translation directions sharing one source "language".
//   A: token-wise bijection
//   B: bijection, then sequence reversal
//   C: bijection, then swap of adjacent pairs
enum class Direction { A, B, C };

inline constexpr Direction kAllDirections[] = {Direction::A, Direction::B, Direction::C};

const char* to_string(Direction d) noexcept;
Direction direction_from_string(std::string_view name);
// Target-language tag token that selects the direction in the decoder.
int lang_tag(Direction d) noexcept;

enum class Split { Train, Dev, Test };
const char* to_string(Split s) noexcept;
Split split_from_string(std::string_view name);

struct TaskSpec {
  std::size_t source_vocab = 16;
  std::size_t samples_per_token = 32;  // multiple of the downsampler's total stride
  double noise_std = 0.1;
  std::size_t min_len = 4;
  std::size_t max_len = 7;
  std::uint64_t seed = 1234;

  void validate(const DownsamplerSpec& downsampler) const;
  // Content tokens of direction d occupy [first_target_token(d), +source_vocab).
  int first_target_token(Direction d) const noexcept;
  // Smallest decoder vocabulary that holds every target token.
  std::size_t required_vocab() const noexcept;
};

struct Sample {
  std::vector<float> waveform;
  std::vector<int> source;  // latent tokens, diagnostics and oracle only
  Direction direction = Direction::A;
  std::vector<int> target;  // content tokens, without tag/BOS/EOS
};

// Direction-specific bijection of a source token onto target ids.
int map_token(const TaskSpec& spec, Direction d, int source_token);
std::vector<int> apply_rule(const TaskSpec& spec, Direction d, std::span<const int> source);

// Concatenated per-token templates plus Gaussian noise, normalized to zero
// mean and unit variance.
std::vector<float> render_waveform(std::span<const int> source, const TaskSpec& spec,
                                   std::uint64_t noise_key);

// Train, dev and test draw from disjoint seed streams, and every source
// sequence is hashed into exactly one split, so the splits never share one.
std::vector<Sample> generate_corpus(const TaskSpec& spec, std::size_t n_samples, Split split,
                                    std::size_t jobs = 1);

// Split that owns a source sequence under this spec.
Split split_of(const TaskSpec& spec, std::span<const int> source);

// Random gain and additive noise, applied with probability `prob` and followed
// by renormalization. Stands in for waveform-level augmentation.
std::vector<float> augment_waveform(std::span<const float> wave, double prob, std::uint64_t key);

void normalize_in_place(std::span<float> wave);

// One JSON record per line:
//   {"waveform_b64": <float32 LE, base64>, "direction": "A", "source_ids": [...], "target_ids": [...]}
void write_corpus(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_corpus(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace interconnect
