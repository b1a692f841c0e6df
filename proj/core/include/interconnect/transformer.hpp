#pragma once

#include <cstdint>
#include <string>

#include "interconnect/ops.hpp"
#include "interconnect/params.hpp"
#include "interconnect/rng.hpp"

namespace interconnect {

// Per-forward-pass state: train/eval switch plus the key stream that feeds
// dropout, masking and augmentation.
struct ForwardContext {
  bool train = false;
  CounterRng* rng = nullptr;

  std::uint64_t next_key() { return rng ? rng->next_key() : 0; }
};

void append_linear_layout(ParamLayout& layout, const std::string& prefix, std::size_t in,
                          std::size_t out, Component component, ParamKind kind);
void append_layer_norm_layout(ParamLayout& layout, const std::string& prefix, std::size_t dim,
                              Component component);
// Pre-LN block: self-attention, optional cross-attention, ReLU feed-forward,
// each with its own LayerNorm.
void append_transformer_block_layout(ParamLayout& layout, const std::string& prefix,
                                     std::size_t dim, std::size_t ffn_dim, Component component,
                                     bool cross_attention);

// Sinusoidal position table [length x dim]; a constant.
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t dim);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(const ParamStore<T>& params, const std::string& prefix);
  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  LayerNorm() = default;
  LayerNorm(const ParamStore<T>& params, const std::string& prefix);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const ParamStore<T>& params, const std::string& prefix, std::size_t heads);

  // query: [Tq x d], source: [Tk x d]. Causal requires Tq == Tk.
  Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& source, bool causal) const;

 private:
  Linear<T> q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

template <typename T>
class TransformerBlock {
 public:
  TransformerBlock(const ParamStore<T>& params, const std::string& prefix, std::size_t heads,
                   bool cross_attention);

  // memory is required iff the block was built with cross-attention; a null
  // memory on such a block skips the cross-attention sublayer entirely.
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* memory, bool causal,
                    ForwardContext& ctx) const;

  void set_dropout(double p) noexcept { dropout_ = p; }
  double dropout() const noexcept { return dropout_; }

 private:
  LayerNorm<T> ln_attn_, ln_cross_, ln_ffn_;
  MultiHeadAttention<T> self_attn_, cross_attn_;
  Linear<T> fc1_, fc2_;
  bool has_cross_ = false;
  double dropout_ = 0.0;
};

}  // namespace interconnect
