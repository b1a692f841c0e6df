#include "interconnect/model.hpp"

#include <string>

namespace interconnect {

void ModelConfig::validate() const {
  downsampler.validate();
  encoder.validate();
  masking.validate();
  adaptor.validate();
  decoder.validate();
  if (encoder.dim != decoder.dim || adaptor.channels != encoder.dim) {
    throw ConfigError("encoder dim, adaptor channels and decoder dim must agree (" +
                      std::to_string(encoder.dim) + ", " + std::to_string(adaptor.channels) + ", " +
                      std::to_string(decoder.dim) + ")");
  }
  if (connector.mode == ConnectorMode::InterConnection &&
      connector_operand_count(connector, encoder.total_layers()) == 0) {
    throw ConfigError("inter-connection needs at least one encoder layer");
  }
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_shape() {
  ModelConfig c;
  c.downsampler = DownsamplerSpec::paper();
  c.encoder = EncoderConfig::paper();
  c.adaptor.channels = 1024;
  c.decoder = DecoderConfig::paper();
  return c;
}

ParamLayout model_layout(const ModelConfig& config) {
  config.validate();
  ParamLayout layout;
  append_downsampler_layout(layout, config.downsampler, config.encoder.dim);
  append_encoder_layout(layout, config.encoder);
  append_connector_layout(layout, config.connector, config.encoder.total_layers(), config.encoder.dim);
  append_adaptor_layout(layout, config.adaptor);
  append_decoder_layout(layout, config.decoder);
  return layout;
}

template <typename T>
SpeechTranslator<T>::SpeechTranslator(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      layout_(model_layout(config)),
      params_(layout_, seed),
      downsampler_(params_, config.downsampler),
      encoder_(params_, config.encoder),
      adaptor_(params_, config.adaptor),
      decoder_(params_, config.decoder) {
  if (config.connector.mode == ConnectorMode::InterConnection) layer_weights_.emplace(params_);
}

namespace {

bool block_trainable(const ParamLayout& layout, const std::string& prefix, FreezeStrategy strategy) {
  for (const auto& spec : layout) {
    if (spec.name.compare(0, prefix.size(), prefix) == 0 && is_trainable(spec, strategy)) return true;
  }
  return false;
}

}  // namespace

template <typename T>
void SpeechTranslator<T>::configure_dropout(FreezeStrategy strategy, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  const auto& enc = config_.encoder;
  for (std::size_t b = 0; b < encoder_.num_blocks(); ++b) {
    const std::string prefix = b < enc.num_layers
                                   ? "encoder.layers." + std::to_string(b) + "."
                                   : "encoder.extra_layers." + std::to_string(b - enc.num_layers) + ".";
    encoder_.set_block_dropout(b, block_trainable(layout_, prefix, strategy) ? p : 0.0);
  }
  adaptor_.set_dropout(block_trainable(layout_, "adaptor.", strategy) ? p : 0.0);
  for (std::size_t b = 0; b < decoder_.num_blocks(); ++b) {
    const std::string prefix = "decoder.layers." + std::to_string(b) + ".";
    decoder_.set_block_dropout(b, block_trainable(layout_, prefix, strategy) ? p : 0.0);
  }
}

template <typename T>
void SpeechTranslator<T>::apply_freeze(FreezeStrategy strategy) {
  for (auto& e : params_.entries()) e.tensor.set_requires_grad(is_trainable(e.spec, strategy));
}

template <typename T>
Tensor<T> SpeechTranslator<T>::features(const Tensor<T>& wave) const {
  return downsampler_(wave);
}

template <typename T>
EncoderOutput<T> SpeechTranslator<T>::encode(const Tensor<T>& wave, ForwardContext& ctx) const {
  Tensor<T> feats = downsampler_(wave);
  if (ctx.train) {
    feats = apply_feature_masking(feats, config_.masking, encoder_.mask_embedding(), ctx.next_key());
  }
  return encoder_.encode(feats, ctx);
}

template <typename T>
Tensor<T> SpeechTranslator<T>::bridge(const EncoderOutput<T>& enc, ForwardContext& ctx) const {
  return adaptor_(aggregate(enc, layer_weights(), config_.connector), ctx);
}

template <typename T>
Tensor<T> SpeechTranslator<T>::memory(const Tensor<T>& wave, ForwardContext& ctx) const {
  return bridge(encode(wave, ctx), ctx);
}

template <typename T>
Tensor<T> SpeechTranslator<T>::logits(const Tensor<T>& wave, std::span<const int> decoder_inputs,
                                      ForwardContext& ctx) const {
  const Tensor<T> mem = memory(wave, ctx);
  return decoder_.logits(decoder_inputs, &mem, ctx);
}

template <typename T>
std::vector<int> SpeechTranslator<T>::translate(const Tensor<T>& wave, int lang_tag,
                                                std::size_t max_len, SearchMode mode) const {
  NoGradGuard<T> no_grad;
  ForwardContext ctx;
  const Tensor<T> mem = memory(wave, ctx);
  const int prefix[] = {lang_tag, tokens::kBos};
  return decoder_.generate(mem, prefix, max_len, mode);
}

template class SpeechTranslator<float>;
template class SpeechTranslator<double>;

}  // namespace interconnect
