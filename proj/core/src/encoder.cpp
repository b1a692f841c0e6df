#include "interconnect/encoder.hpp"

#include <cmath>
#include <string>

namespace interconnect {

std::size_t DownsamplerSpec::receptive_field() const {
  std::size_t need = 1;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) need = (need - 1) * it->stride + it->kernel;
  return need;
}

std::size_t DownsamplerSpec::total_stride() const {
  std::size_t s = 1;
  for (const auto& l : layers) s *= l.stride;
  return s;
}

void DownsamplerSpec::validate() const {
  if (layers.empty()) throw ConfigError("downsampler needs at least one conv layer");
  for (const auto& l : layers) {
    if (l.channels == 0 || l.kernel == 0 || l.stride == 0) {
      throw ConfigError("downsampler conv layers need positive channels, kernel and stride");
    }
  }
}

DownsamplerSpec DownsamplerSpec::desk() { return {{{32, 4, 2}, {32, 2, 2}}}; }

DownsamplerSpec DownsamplerSpec::paper() {
  DownsamplerSpec spec;
  const std::size_t kernels[] = {10, 3, 3, 3, 3, 2, 2};
  const std::size_t strides[] = {5, 2, 2, 2, 2, 2, 2};
  for (std::size_t i = 0; i < 7; ++i) spec.layers.push_back({512, kernels[i], strides[i]});
  return spec;
}

std::size_t encoder_output_length(std::size_t num_samples, const DownsamplerSpec& spec) {
  const std::size_t minimum = spec.receptive_field();
  if (num_samples < minimum) {
    throw LengthError("waveform of " + std::to_string(num_samples) +
                      " samples is shorter than the downsampler receptive field; need N >= " +
                      std::to_string(minimum));
  }
  std::size_t n = num_samples;
  for (const auto& l : spec.layers) n = conv1d_output_length(n, l.kernel, l.stride, 0);
  return n;
}

void EncoderConfig::validate() const {
  if (dim == 0 || ffn_dim == 0 || heads == 0) throw ConfigError("encoder dims must be positive");
  if (dim % heads != 0) {
    throw ConfigError("encoder dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

EncoderConfig EncoderConfig::desk() { return {4, 64, 256, 4, 0}; }
EncoderConfig EncoderConfig::paper() { return {24, 1024, 4096, 16, 0}; }

void MaskingSpec::validate() const {
  if (time_span == 0 || channel_span == 0) throw ConfigError("mask span lengths must be positive");
  // p == 1 is admitted as the saturating case (every frame masked).
  if (!(time_prob >= 0.0 && time_prob <= 1.0) || !(channel_prob >= 0.0 && channel_prob <= 1.0)) {
    throw ConfigError("mask probabilities must lie in [0, 1]");
  }
}

namespace {

std::vector<std::uint8_t> sample_spans(std::size_t length, std::size_t span, double prob,
                                       std::uint64_t key) {
  std::vector<std::uint8_t> mask(length, 0);
  if (prob <= 0.0) return mask;
  const double start_prob = 1.0 - std::pow(1.0 - prob, 1.0 / static_cast<double>(span));
  const std::size_t candidates = length + span - 1;
  for (std::size_t i = 0; i < candidates; ++i) {
    if (uniform01(key, i) >= start_prob) continue;
    // Candidate i starts at frame i - (span - 1).
    const std::size_t end = std::min(length, i + 1);
    const std::size_t begin = i + 1 >= span ? i + 1 - span : 0;
    for (std::size_t t = begin; t < end; ++t) mask[t] = 1;
  }
  return mask;
}

}  // namespace

FeatureMask sample_feature_mask(std::size_t frames, std::size_t channels, const MaskingSpec& spec,
                                std::uint64_t key) {
  spec.validate();
  return {sample_spans(frames, spec.time_span, spec.time_prob, mix_keys(key, 0)),
          sample_spans(channels, spec.channel_span, spec.channel_prob, mix_keys(key, 1))};
}

template <typename T>
Tensor<T> apply_feature_mask(const Tensor<T>& features, const FeatureMask& mask,
                             const Tensor<T>& mask_embedding) {
  const std::size_t frames = features.dim(0), d = features.dim(1);
  if (mask.time.size() != frames || mask.channel.size() != d || mask_embedding.numel() != d) {
    throw ShapeError("feature mask does not match features " + shape_str(features.shape()));
  }
  Tensor<T> out({frames, d});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      T v = mask.time[t] ? mask_embedding[c] : features.at(t, c);
      out.at(t, c) = mask.channel[c] ? T(0) : v;
    }
  }
  if (auto* tape = recording_tape(features, mask_embedding)) {
    out.set_requires_grad(true);
    tape->record([features, mask_embedding, out, mask, frames, d]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      T* dx = features.requires_grad() ? features.mutable_grad().data() : nullptr;
      T* de = mask_embedding.requires_grad() ? mask_embedding.mutable_grad().data() : nullptr;
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < d; ++c) {
          if (mask.channel[c]) continue;
          if (mask.time[t]) {
            if (de) de[c] += dy[t * d + c];
          } else if (dx) {
            dx[t * d + c] += dy[t * d + c];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> apply_feature_masking(const Tensor<T>& features, const MaskingSpec& spec,
                                const Tensor<T>& mask_embedding, std::uint64_t key) {
  if (spec.time_prob == 0.0 && spec.channel_prob == 0.0) return features;
  return apply_feature_mask(features, sample_feature_mask(features.dim(0), features.dim(1), spec, key),
                            mask_embedding);
}

void append_downsampler_layout(ParamLayout& layout, const DownsamplerSpec& spec, std::size_t dim) {
  spec.validate();
  std::size_t in = 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::string prefix = "downsampler.conv" + std::to_string(i);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in * l.kernel));
    layout.push_back({prefix + ".weight", {l.channels, in, l.kernel}, Component::Downsampler,
                      ParamKind::Convolution, InitRule::normal(stddev)});
    layout.push_back({prefix + ".bias", {l.channels}, Component::Downsampler, ParamKind::Convolution,
                      InitRule::constant(0.0)});
    in = l.channels;
  }
  append_linear_layout(layout, "downsampler.proj", in, dim, Component::Downsampler,
                       ParamKind::Projection);
  append_layer_norm_layout(layout, "downsampler.ln", dim, Component::Downsampler);
}

void append_encoder_layout(ParamLayout& layout, const EncoderConfig& config) {
  config.validate();
  layout.push_back({"encoder.mask_embedding", {config.dim}, Component::Encoder,
                    ParamKind::MaskEmbedding, InitRule::normal(1.0)});
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    append_transformer_block_layout(layout, "encoder.layers." + std::to_string(l), config.dim,
                                    config.ffn_dim, Component::Encoder, false);
  }
  for (std::size_t l = 0; l < config.extra_layers; ++l) {
    append_transformer_block_layout(layout, "encoder.extra_layers." + std::to_string(l), config.dim,
                                    config.ffn_dim, Component::EncoderExtra, false);
  }
  append_layer_norm_layout(layout, "encoder.final_ln", config.dim, Component::Encoder);
}

template <typename T>
Downsampler<T>::Downsampler(const ParamStore<T>& params, const DownsamplerSpec& spec)
    : spec_(spec), proj_(params, "downsampler.proj"), ln_(params, "downsampler.ln") {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::string prefix = "downsampler.conv" + std::to_string(i);
    kernels_.push_back(params.get(prefix + ".weight"));
    biases_.push_back(params.get(prefix + ".bias"));
  }
}

template <typename T>
Tensor<T> Downsampler<T>::operator()(const Tensor<T>& wave) const {
  if (wave.rank() != 1) throw ShapeError("downsample: expected a 1-D waveform, got " + shape_str(wave.shape()));
  encoder_output_length(wave.numel(), spec_);  // throws LengthError with the minimum N
  Tensor<T> x = reshape(wave, {1, wave.numel()});
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    x = relu(conv1d(x, kernels_[i], biases_[i], spec_.layers[i].stride, 0));
  }
  return ln_(proj_(transpose(x)));
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const ParamStore<T>& params, const EncoderConfig& config)
    : config_(config),
      final_ln_(params, "encoder.final_ln"),
      mask_embedding_(params.get("encoder.mask_embedding")) {
  config.validate();
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    blocks_.emplace_back(params, "encoder.layers." + std::to_string(l), config.heads, false);
  }
  for (std::size_t l = 0; l < config.extra_layers; ++l) {
    blocks_.emplace_back(params, "encoder.extra_layers." + std::to_string(l), config.heads, false);
  }
}

template <typename T>
EncoderOutput<T> TransformerEncoder<T>::encode(const Tensor<T>& features, ForwardContext& ctx) const {
  if (features.rank() != 2 || features.dim(1) != config_.dim) {
    throw ShapeError("encode: features " + shape_str(features.shape()) + " do not have dim " +
                     std::to_string(config_.dim));
  }
  EncoderOutput<T> out;
  out.downsampler_output = features;
  if (blocks_.empty()) return out;
  Tensor<T> h = add(features, sinusoidal_positions<T>(features.dim(0), config_.dim));
  out.layer_outputs.reserve(blocks_.size());
  for (const auto& block : blocks_) {
    h = block.forward(h, nullptr, false, ctx);
    out.layer_outputs.push_back(h);
  }
  out.layer_outputs.back() = final_ln_(out.layer_outputs.back());
  return out;
}

template Tensor<float> apply_feature_mask<float>(const Tensor<float>&, const FeatureMask&, const Tensor<float>&);
template Tensor<double> apply_feature_mask<double>(const Tensor<double>&, const FeatureMask&, const Tensor<double>&);
template Tensor<float> apply_feature_masking<float>(const Tensor<float>&, const MaskingSpec&,
                                                   const Tensor<float>&, std::uint64_t);
template Tensor<double> apply_feature_masking<double>(const Tensor<double>&, const MaskingSpec&,
                                                      const Tensor<double>&, std::uint64_t);
template class Downsampler<float>;
template class Downsampler<double>;
template class TransformerEncoder<float>;
template class TransformerEncoder<double>;

}  // namespace interconnect
