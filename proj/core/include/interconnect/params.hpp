#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "interconnect/tensor.hpp"

namespace interconnect {

// Top-level component a parameter belongs to. EncoderExtra holds blocks
// stacked on top of the pretrained encoder; they are new, like the connector.
enum class Component { Downsampler, Encoder, EncoderExtra, Connector, Adaptor, Decoder, Embedding };

enum class ParamKind {
  LayerNorm,
  SelfAttention,
  CrossAttention,
  FeedForward,
  Convolution,
  Projection,
  Embedding,
  MaskEmbedding,
  LayerWeights,
};

const char* to_string(Component c) noexcept;
const char* to_string(ParamKind k) noexcept;

struct InitRule {
  enum class Kind { Constant, Normal, Uniform };
  Kind kind = Kind::Constant;
  double value = 0.0;  // the constant, the stddev, or the half-width

  static InitRule constant(double v) { return {Kind::Constant, v}; }
  static InitRule normal(double stddev) { return {Kind::Normal, stddev}; }
  static InitRule uniform(double bound) { return {Kind::Uniform, bound}; }
};

struct ParamSpec {
  std::string name;
  Shape shape;
  Component component;
  ParamKind kind;
  InitRule init;

  std::size_t numel() const noexcept { return shape_numel(shape); }
};

// Ordered parameter description of a model. Shapes and counts come from here
// without allocating anything.
using ParamLayout = std::vector<ParamSpec>;

std::size_t layout_numel(const ParamLayout& layout) noexcept;

// Allocated parameters, in layout order, addressable by name.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    ParamSpec spec;
    Tensor<T> tensor;
  };

  ParamStore() = default;
  // Each tensor is initialized from a stream keyed by (seed, name), so adding
  // or removing other parameters never changes a parameter's initial value.
  ParamStore(const ParamLayout& layout, std::uint64_t seed);

  const Tensor<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t total_numel() const noexcept;

  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace interconnect
