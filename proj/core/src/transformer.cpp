#include "interconnect/transformer.hpp"

#include <cmath>
#include <vector>

namespace interconnect {

void append_linear_layout(ParamLayout& layout, const std::string& prefix, std::size_t in,
                          std::size_t out, Component component, ParamKind kind) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  layout.push_back({prefix + ".weight", {in, out}, component, kind, InitRule::uniform(bound)});
  layout.push_back({prefix + ".bias", {out}, component, kind, InitRule::constant(0.0)});
}

void append_layer_norm_layout(ParamLayout& layout, const std::string& prefix, std::size_t dim,
                              Component component) {
  layout.push_back({prefix + ".gain", {dim}, component, ParamKind::LayerNorm, InitRule::constant(1.0)});
  layout.push_back({prefix + ".bias", {dim}, component, ParamKind::LayerNorm, InitRule::constant(0.0)});
}

namespace {

void append_attention_layout(ParamLayout& layout, const std::string& prefix, std::size_t dim,
                             Component component, ParamKind kind) {
  for (const char* proj : {"q", "k", "v", "o"}) {
    append_linear_layout(layout, prefix + "." + proj, dim, dim, component, kind);
  }
}

}  // namespace

void append_transformer_block_layout(ParamLayout& layout, const std::string& prefix,
                                     std::size_t dim, std::size_t ffn_dim, Component component,
                                     bool cross_attention) {
  append_attention_layout(layout, prefix + ".self_attn", dim, component, ParamKind::SelfAttention);
  append_layer_norm_layout(layout, prefix + ".ln_self", dim, component);
  if (cross_attention) {
    append_attention_layout(layout, prefix + ".cross_attn", dim, component, ParamKind::CrossAttention);
    append_layer_norm_layout(layout, prefix + ".ln_cross", dim, component);
  }
  append_linear_layout(layout, prefix + ".ffn.fc1", dim, ffn_dim, component, ParamKind::FeedForward);
  append_linear_layout(layout, prefix + ".ffn.fc2", ffn_dim, dim, component, ParamKind::FeedForward);
  append_layer_norm_layout(layout, prefix + ".ln_ffn", dim, component);
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor<T> pe({length, dim});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe.at(t, i) = static_cast<T>(std::sin(static_cast<double>(t) * freq));
      if (i + 1 < dim) pe.at(t, i + 1) = static_cast<T>(std::cos(static_cast<double>(t) * freq));
    }
  }
  return pe;
}

template <typename T>
Linear<T>::Linear(const ParamStore<T>& params, const std::string& prefix)
    : weight(params.get(prefix + ".weight")), bias(params.get(prefix + ".bias")) {}

template <typename T>
LayerNorm<T>::LayerNorm(const ParamStore<T>& params, const std::string& prefix)
    : gain(params.get(prefix + ".gain")), bias(params.get(prefix + ".bias")) {}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(const ParamStore<T>& params, const std::string& prefix,
                                          std::size_t heads)
    : q_(params, prefix + ".q"),
      k_(params, prefix + ".k"),
      v_(params, prefix + ".v"),
      o_(params, prefix + ".o"),
      heads_(heads) {
  const std::size_t dim = q_.weight.dim(1);
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& query, const Tensor<T>& source,
                                            bool causal) const {
  const Tensor<T> q = q_(query);
  const Tensor<T> k = k_(source);
  const Tensor<T> v = v_(source);
  const std::size_t head_dim = q.dim(1) / heads_;
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(head_dim)));
  std::vector<Tensor<T>> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t start = h * head_dim;
    const Tensor<T> qh = slice_cols(q, start, head_dim);
    const Tensor<T> kh = slice_cols(k, start, head_dim);
    const Tensor<T> vh = slice_cols(v, start, head_dim);
    const Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    heads.push_back(matmul(softmax(scores, causal), vh));
  }
  return o_(concat_cols<T>(heads));
}

template <typename T>
TransformerBlock<T>::TransformerBlock(const ParamStore<T>& params, const std::string& prefix,
                                      std::size_t heads, bool cross_attention)
    : ln_attn_(params, prefix + ".ln_self"),
      ln_ffn_(params, prefix + ".ln_ffn"),
      self_attn_(params, prefix + ".self_attn", heads),
      fc1_(params, prefix + ".ffn.fc1"),
      fc2_(params, prefix + ".ffn.fc2"),
      has_cross_(cross_attention) {
  if (cross_attention) {
    ln_cross_ = LayerNorm<T>(params, prefix + ".ln_cross");
    cross_attn_ = MultiHeadAttention<T>(params, prefix + ".cross_attn", heads);
  }
}

template <typename T>
Tensor<T> TransformerBlock<T>::forward(const Tensor<T>& x, const Tensor<T>* memory, bool causal,
                                       ForwardContext& ctx) const {
  Tensor<T> h = dropout_ > 0.0 && ctx.train ? interconnect::dropout(x, dropout_, true, ctx.next_key()) : x;
  const Tensor<T> normed = ln_attn_(h);
  h = add(h, self_attn_(normed, normed, causal));
  if (has_cross_ && memory != nullptr) {
    h = add(h, cross_attn_(ln_cross_(h), *memory, false));
  }
  const Tensor<T> ffn = fc2_(relu(fc1_(ln_ffn_(h))));
  return add(h, ffn);
}

template Tensor<float> sinusoidal_positions<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_positions<double>(std::size_t, std::size_t);
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;

}  // namespace interconnect
