#pragma once

#include <span>
#include <vector>

#include "interconnect/encoder.hpp"

namespace interconnect {

enum class ConnectorMode { FinalLayer, InterConnection };

const char* to_string(ConnectorMode mode) noexcept;
ConnectorMode connector_mode_from_string(std::string_view name);

struct ConnectorConfig {
  ConnectorMode mode = ConnectorMode::InterConnection;
  // Softmax over the layer weights before use. Off: weights enter raw.
  bool normalize_weights = false;
  // Also weight the downsampler output (the stack input) as layer 0.
  bool include_layer0 = false;
};

// Number of weighted operands for an encoder with `encoder_layers` blocks.
std::size_t connector_operand_count(const ConnectorConfig& config, std::size_t encoder_layers);

// Learnable inter-connection parameters: one scalar per encoder layer plus the
// affine of the LayerNorm applied to the weighted sum.
template <typename T>
struct LayerWeights {
  Tensor<T> w;        // [L]
  Tensor<T> ln_gain;  // [d]
  Tensor<T> ln_bias;  // [d]

  LayerWeights() = default;
  explicit LayerWeights(const ParamStore<T>& params);
};

// Weights start at 1/L; gain 1, bias 0. Nothing is appended for FinalLayer.
void append_connector_layout(ParamLayout& layout, const ConnectorConfig& config,
                             std::size_t encoder_layers, std::size_t dim);

// L + 2d: the parameters the inter-connection adds over the final-layer bridge.
std::size_t interconnect_param_count(std::size_t num_layers, std::size_t dim);

// sum_l layers[l] * w[l], with gradients to both the layers and w.
template <typename T>
Tensor<T> weighted_layer_sum(std::span<const Tensor<T>> layers, const Tensor<T>& w);

// FinalLayer: H_L unchanged. InterConnection: LayerNorm(sum_l H_l w_l).
template <typename T>
Tensor<T> aggregate(const EncoderOutput<T>& enc, const LayerWeights<T>* params,
                    const ConnectorConfig& config);

// Raw weights, or weights divided by sum |w| (all zeros stay zeros).
std::vector<double> report_weights(std::span<const double> w, bool normalized);

template <typename T>
std::vector<double> report_weights(const LayerWeights<T>& params, bool normalized);

struct AdaptorConfig {
  std::size_t num_layers = 3;
  std::size_t channels = 64;  // must equal the model dim
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;

  void validate() const;
};

// Closed form of length_adapt's output length.
std::size_t adapted_length(std::size_t length, const AdaptorConfig& config);

void append_adaptor_layout(ParamLayout& layout, const AdaptorConfig& config);

// Stack of (strided conv1d emitting 2c channels -> GLU) stages.
template <typename T>
class LengthAdaptor {
 public:
  LengthAdaptor(const ParamStore<T>& params, const AdaptorConfig& config);

  // [T x d] -> [T' x d]
  Tensor<T> operator()(const Tensor<T>& x, ForwardContext& ctx) const;

  void set_dropout(double p) noexcept { dropout_ = p; }

 private:
  AdaptorConfig config_;
  std::vector<Tensor<T>> kernels_;
  std::vector<Tensor<T>> biases_;
  double dropout_ = 0.0;
};

namespace testing {
// Test hook: when set, the layer-weight backward rule is deliberately wrong
// (scaled by 1.5) so gradient checkers can be shown to catch it.
void set_layer_weight_grad_fault(bool enabled) noexcept;
}  // namespace testing

}  // namespace interconnect
