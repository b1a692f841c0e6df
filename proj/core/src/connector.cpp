#include "interconnect/connector.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace interconnect {

namespace {
std::atomic<bool> g_weight_grad_fault{false};
}  // namespace

void testing::set_layer_weight_grad_fault(bool enabled) noexcept { g_weight_grad_fault.store(enabled); }

const char* to_string(ConnectorMode mode) noexcept {
  return mode == ConnectorMode::FinalLayer ? "final" : "inter";
}

ConnectorMode connector_mode_from_string(std::string_view name) {
  if (name == "final" || name == "final_layer") return ConnectorMode::FinalLayer;
  if (name == "inter" || name == "inter_connection") return ConnectorMode::InterConnection;
  throw ConfigError("unknown connector mode '" + std::string(name) + "' (expected final|inter)");
}

std::size_t connector_operand_count(const ConnectorConfig& config, std::size_t encoder_layers) {
  return encoder_layers + (config.include_layer0 ? 1 : 0);
}

template <typename T>
LayerWeights<T>::LayerWeights(const ParamStore<T>& params)
    : w(params.get("connector.layer_weights")),
      ln_gain(params.get("connector.ln.gain")),
      ln_bias(params.get("connector.ln.bias")) {}

void append_connector_layout(ParamLayout& layout, const ConnectorConfig& config,
                             std::size_t encoder_layers, std::size_t dim) {
  if (config.mode == ConnectorMode::FinalLayer) return;
  const std::size_t operands = connector_operand_count(config, encoder_layers);
  if (operands == 0) throw ConfigError("inter-connection needs at least one encoder layer");
  layout.push_back({"connector.layer_weights", {operands}, Component::Connector,
                    ParamKind::LayerWeights, InitRule::constant(1.0 / static_cast<double>(operands))});
  append_layer_norm_layout(layout, "connector.ln", dim, Component::Connector);
}

std::size_t interconnect_param_count(std::size_t num_layers, std::size_t dim) {
  return num_layers + 2 * dim;
}

template <typename T>
Tensor<T> weighted_layer_sum(std::span<const Tensor<T>> layers, const Tensor<T>& w) {
  if (layers.empty()) throw ContractError("weighted_layer_sum: no layers");
  if (w.numel() != layers.size()) {
    throw ConfigError("weighted_layer_sum: " + std::to_string(w.numel()) + " weights for " +
                      std::to_string(layers.size()) + " layers");
  }
  const Shape& shape = layers[0].shape();
  for (const auto& h : layers) {
    if (h.shape() != shape) {
      throw ShapeError("weighted_layer_sum: layer shapes " + shape_str(shape) + " and " +
                       shape_str(h.shape()) + " differ");
    }
  }
  Tensor<T> out(shape);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const T wl = w[l];
    const auto h = layers[l].data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += wl * h[i];
  }

  std::vector<Tensor<T>> inputs(layers.begin(), layers.end());
  inputs.push_back(w);
  if (auto* tape = recording_tape<T>(inputs)) {
    out.set_requires_grad(true);
    inputs.pop_back();
    tape->record([layers = std::move(inputs), w, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      const T fault = g_weight_grad_fault.load() ? T(1.5) : T(1);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& h = layers[l];
        if (w.requires_grad()) {
          T acc = 0;
          for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * h[i];
          w.mutable_grad()[l] += fault * acc;
        }
        if (h.requires_grad()) {
          const T wl = w[l];
          auto dh = h.mutable_grad();
          for (std::size_t i = 0; i < dy.size(); ++i) dh[i] += wl * dy[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> aggregate(const EncoderOutput<T>& enc, const LayerWeights<T>* params,
                    const ConnectorConfig& config) {
  if (enc.layer_outputs.empty()) throw ContractError("aggregate: encoder produced no layer outputs");
  if (config.mode == ConnectorMode::FinalLayer) return enc.layer_outputs.back();
  if (params == nullptr) throw ConfigError("aggregate: inter-connection needs layer weights");

  std::vector<Tensor<T>> operands;
  if (config.include_layer0) operands.push_back(enc.downsampler_output);
  operands.insert(operands.end(), enc.layer_outputs.begin(), enc.layer_outputs.end());
  if (params->w.numel() != operands.size()) {
    throw ConfigError("aggregate: " + std::to_string(params->w.numel()) + " layer weights for " +
                      std::to_string(operands.size()) + " encoder layers");
  }
  Tensor<T> w = params->w;
  if (config.normalize_weights) w = reshape(softmax(reshape(w, {1, w.numel()})), {w.numel()});
  return layer_norm(weighted_layer_sum<T>(operands, w), params->ln_gain, params->ln_bias);
}

std::vector<double> report_weights(std::span<const double> w, bool normalized) {
  std::vector<double> out(w.begin(), w.end());
  if (!normalized) return out;
  double total = 0;
  for (double v : w) total += std::abs(v);
  if (total == 0.0) return out;
  for (double& v : out) v /= total;
  return out;
}

template <typename T>
std::vector<double> report_weights(const LayerWeights<T>& params, bool normalized) {
  std::vector<double> raw(params.w.data().begin(), params.w.data().end());
  return report_weights(std::span<const double>(raw), normalized);
}

void AdaptorConfig::validate() const {
  if (num_layers == 0 || channels == 0 || kernel == 0 || stride == 0) {
    throw ConfigError("adaptor layers, channels, kernel and stride must be positive");
  }
}

std::size_t adapted_length(std::size_t length, const AdaptorConfig& config) {
  std::size_t n = length;
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    if (n == 0) throw LengthError("length adaptor collapsed the sequence to length 0");
    n = conv1d_output_length(n, config.kernel, config.stride, config.padding);
  }
  return n;
}

void append_adaptor_layout(ParamLayout& layout, const AdaptorConfig& config) {
  config.validate();
  const std::size_t c = config.channels;
  const double stddev = std::sqrt(1.0 / static_cast<double>(c * config.kernel));
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    const std::string prefix = "adaptor.conv" + std::to_string(i);
    layout.push_back({prefix + ".weight", {2 * c, c, config.kernel}, Component::Adaptor,
                      ParamKind::Convolution, InitRule::normal(stddev)});
    layout.push_back({prefix + ".bias", {2 * c}, Component::Adaptor, ParamKind::Convolution,
                      InitRule::constant(0.0)});
  }
}

template <typename T>
LengthAdaptor<T>::LengthAdaptor(const ParamStore<T>& params, const AdaptorConfig& config)
    : config_(config) {
  config.validate();
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    const std::string prefix = "adaptor.conv" + std::to_string(i);
    kernels_.push_back(params.get(prefix + ".weight"));
    biases_.push_back(params.get(prefix + ".bias"));
  }
}

template <typename T>
Tensor<T> LengthAdaptor<T>::operator()(const Tensor<T>& x, ForwardContext& ctx) const {
  if (x.rank() != 2 || x.dim(1) != config_.channels) {
    throw ShapeError("length_adapt: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(config_.channels) + " channels");
  }
  adapted_length(x.dim(0), config_);
  Tensor<T> h = transpose(x);
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    if (dropout_ > 0.0 && ctx.train) h = dropout(h, dropout_, true, ctx.next_key());
    h = glu(conv1d(h, kernels_[i], biases_[i], config_.stride, config_.padding));
  }
  return transpose(h);
}

template struct LayerWeights<float>;
template struct LayerWeights<double>;
template Tensor<float> weighted_layer_sum<float>(std::span<const Tensor<float>>, const Tensor<float>&);
template Tensor<double> weighted_layer_sum<double>(std::span<const Tensor<double>>, const Tensor<double>&);
template Tensor<float> aggregate<float>(const EncoderOutput<float>&, const LayerWeights<float>*,
                                        const ConnectorConfig&);
template Tensor<double> aggregate<double>(const EncoderOutput<double>&, const LayerWeights<double>*,
                                          const ConnectorConfig&);
template std::vector<double> report_weights<float>(const LayerWeights<float>&, bool);
template std::vector<double> report_weights<double>(const LayerWeights<double>&, bool);
template class LengthAdaptor<float>;
template class LengthAdaptor<double>;

}  // namespace interconnect
