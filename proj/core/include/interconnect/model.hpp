#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "interconnect/connector.hpp"
#include "interconnect/decoder.hpp"
#include "interconnect/encoder.hpp"
#include "interconnect/freeze.hpp"

namespace interconnect {

struct ModelConfig {
  DownsamplerSpec downsampler = DownsamplerSpec::desk();
  EncoderConfig encoder = EncoderConfig::desk();
  MaskingSpec masking;
  ConnectorConfig connector;
  AdaptorConfig adaptor;
  DecoderConfig decoder = DecoderConfig::desk();

  void validate() const;

  // L=4, d=64, f=256, h=4 encoder; 2-layer decoder; 64-token vocabulary.
  static ModelConfig desk();
  // 24-layer 1024-dim encoder, 12-layer decoder, 250k vocabulary. Only used
  // through model_layout() for parameter accounting.
  static ModelConfig paper_shape();
};

ParamLayout model_layout(const ModelConfig& config);

// Downsampler -> masking (train) -> encoder -> connector -> length adaptor ->
// decoder. Owns its parameters; not copyable.
template <typename T>
class SpeechTranslator {
 public:
  SpeechTranslator(const ModelConfig& config, std::uint64_t seed);
  SpeechTranslator(const SpeechTranslator&) = delete;
  SpeechTranslator& operator=(const SpeechTranslator&) = delete;
  SpeechTranslator(SpeechTranslator&&) noexcept = default;
  SpeechTranslator& operator=(SpeechTranslator&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }

  // Block input dropout `p` on every block holding a trainable parameter;
  // frozen blocks get none.
  void configure_dropout(FreezeStrategy strategy, double p);
  // Marks trainable parameters requires_grad and clears it on the rest.
  void apply_freeze(FreezeStrategy strategy);

  Tensor<T> features(const Tensor<T>& wave) const;
  EncoderOutput<T> encode(const Tensor<T>& wave, ForwardContext& ctx) const;
  // Connector followed by the length adaptor: the decoder's memory.
  Tensor<T> bridge(const EncoderOutput<T>& enc, ForwardContext& ctx) const;
  Tensor<T> memory(const Tensor<T>& wave, ForwardContext& ctx) const;
  Tensor<T> logits(const Tensor<T>& wave, std::span<const int> decoder_inputs, ForwardContext& ctx) const;

  std::vector<int> translate(const Tensor<T>& wave, int lang_tag, std::size_t max_len,
                             SearchMode mode = SearchMode::greedy()) const;

  // Null in final-layer mode.
  const LayerWeights<T>* layer_weights() const noexcept {
    return layer_weights_ ? &*layer_weights_ : nullptr;
  }

  const Downsampler<T>& downsampler() const noexcept { return downsampler_; }
  const TransformerEncoder<T>& encoder() const noexcept { return encoder_; }
  const TransformerDecoder<T>& decoder() const noexcept { return decoder_; }

 private:
  ModelConfig config_;
  ParamLayout layout_;
  ParamStore<T> params_;
  Downsampler<T> downsampler_;
  TransformerEncoder<T> encoder_;
  std::optional<LayerWeights<T>> layer_weights_;
  LengthAdaptor<T> adaptor_;
  TransformerDecoder<T> decoder_;
};

}  // namespace interconnect
