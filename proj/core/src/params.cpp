#include "interconnect/params.hpp"

#include "interconnect/rng.hpp"

namespace interconnect {

const char* to_string(Component c) noexcept {
  switch (c) {
    case Component::Downsampler: return "downsampler";
    case Component::Encoder: return "encoder";
    case Component::EncoderExtra: return "encoder_extra";
    case Component::Connector: return "connector";
    case Component::Adaptor: return "adaptor";
    case Component::Decoder: return "decoder";
    case Component::Embedding: return "embedding";
  }
  return "unknown";
}

const char* to_string(ParamKind k) noexcept {
  switch (k) {
    case ParamKind::LayerNorm: return "layer_norm";
    case ParamKind::SelfAttention: return "self_attention";
    case ParamKind::CrossAttention: return "cross_attention";
    case ParamKind::FeedForward: return "feed_forward";
    case ParamKind::Convolution: return "convolution";
    case ParamKind::Projection: return "projection";
    case ParamKind::Embedding: return "embedding";
    case ParamKind::MaskEmbedding: return "mask_embedding";
    case ParamKind::LayerWeights: return "layer_weights";
  }
  return "unknown";
}

std::size_t layout_numel(const ParamLayout& layout) noexcept {
  std::size_t n = 0;
  for (const auto& p : layout) n += p.numel();
  return n;
}

template <typename T>
ParamStore<T>::ParamStore(const ParamLayout& layout, std::uint64_t seed) {
  entries_.reserve(layout.size());
  for (const auto& spec : layout) {
    if (index_.count(spec.name)) throw ConfigError("duplicate parameter name '" + spec.name + "'");
    Tensor<T> t(spec.shape);
    const std::uint64_t key = mix_keys(seed, hash_name(spec.name));
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      double v = spec.init.value;
      if (spec.init.kind == InitRule::Kind::Normal) {
        v = spec.init.value * standard_normal(key, i);
      } else if (spec.init.kind == InitRule::Kind::Uniform) {
        v = spec.init.value * (2.0 * uniform01(key, i) - 1.0);
      }
      data[i] = static_cast<T>(v);
    }
    index_.emplace(spec.name, entries_.size());
    entries_.push_back({spec, std::move(t)});
  }
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].tensor;
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
std::size_t ParamStore<T>::total_numel() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace interconnect
