#pragma once

#include <cstdint>
#include <vector>

#include "interconnect/transformer.hpp"

namespace interconnect {

struct ConvLayerSpec {
  std::size_t channels;
  std::size_t kernel;
  std::size_t stride;
};

// Strided convolution stack turning raw samples into frames.
struct DownsamplerSpec {
  std::vector<ConvLayerSpec> layers;

  // Smallest input that yields exactly one output frame.
  std::size_t receptive_field() const;
  std::size_t total_stride() const;
  void validate() const;

  // 2 layers, 32 channels, kernels (4, 2), strides (2, 2).
  static DownsamplerSpec desk();
  // 7 layers, 512 channels, kernels (10,3,3,3,3,2,2), strides (5,2,2,2,2,2,2).
  static DownsamplerSpec paper();
};

// Number of frames downsample() produces for `num_samples` input samples.
std::size_t encoder_output_length(std::size_t num_samples, const DownsamplerSpec& spec);

struct EncoderConfig {
  std::size_t num_layers = 4;
  std::size_t dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t heads = 4;
  // New blocks stacked on the pretrained ones; trainable under every strategy.
  std::size_t extra_layers = 0;

  std::size_t total_layers() const noexcept { return num_layers + extra_layers; }
  void validate() const;

  static EncoderConfig desk();
  static EncoderConfig paper();
};

// Span masking of the downsampler features (train mode only).
struct MaskingSpec {
  std::size_t time_span = 10;
  double time_prob = 0.2;
  std::size_t channel_span = 20;
  double channel_prob = 0.1;

  void validate() const;
};

struct FeatureMask {
  std::vector<std::uint8_t> time;     // 1 = frame replaced by the mask embedding
  std::vector<std::uint8_t> channel;  // 1 = channel zeroed at every frame
};

// Every candidate start (including starts before frame 0, so that edge frames
// are covered as often as interior ones) opens a span with probability
// q = 1 - (1 - p)^(1 / span). A frame is then masked with probability p.
FeatureMask sample_feature_mask(std::size_t frames, std::size_t channels, const MaskingSpec& spec,
                                std::uint64_t key);

template <typename T>
Tensor<T> apply_feature_mask(const Tensor<T>& features, const FeatureMask& mask,
                             const Tensor<T>& mask_embedding);

template <typename T>
Tensor<T> apply_feature_masking(const Tensor<T>& features, const MaskingSpec& spec,
                                const Tensor<T>& mask_embedding, std::uint64_t key);

template <typename T>
struct EncoderOutput {
  Tensor<T> downsampler_output;          // [T x d], input of the first block
  std::vector<Tensor<T>> layer_outputs;  // H_1..H_L, each [T x d]
};

void append_downsampler_layout(ParamLayout& layout, const DownsamplerSpec& spec, std::size_t dim);
void append_encoder_layout(ParamLayout& layout, const EncoderConfig& config);

template <typename T>
class Downsampler {
 public:
  Downsampler(const ParamStore<T>& params, const DownsamplerSpec& spec);

  // wave [N] -> features [T x d]: conv/ReLU stack, linear projection, LayerNorm.
  Tensor<T> operator()(const Tensor<T>& wave) const;

 private:
  DownsamplerSpec spec_;
  std::vector<Tensor<T>> kernels_;
  std::vector<Tensor<T>> biases_;
  Linear<T> proj_;
  LayerNorm<T> ln_;
};

// Pre-LN transformer stack returning every block output. The final LayerNorm
// is applied to the last output only.
template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder(const ParamStore<T>& params, const EncoderConfig& config);

  EncoderOutput<T> encode(const Tensor<T>& features, ForwardContext& ctx) const;

  // Per-block input dropout; index runs over pretrained then extra blocks.
  void set_block_dropout(std::size_t block, double p) { blocks_.at(block).set_dropout(p); }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }

  const Tensor<T>& mask_embedding() const noexcept { return mask_embedding_; }

 private:
  EncoderConfig config_;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> final_ln_;
  Tensor<T> mask_embedding_;
};

}  // namespace interconnect
