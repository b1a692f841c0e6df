#pragma once

#include <span>
#include <vector>

#include "interconnect/transformer.hpp"

namespace interconnect {

// Reserved token ids. Language tags follow; content tokens come after those.
namespace tokens {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstLangTag = 3;
// Ignored position in a loss target sequence.
inline constexpr int kIgnore = -1;
}  // namespace tokens

struct DecoderConfig {
  std::size_t num_layers = 2;
  std::size_t dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t heads = 4;
  std::size_t vocab_size = 64;

  void validate() const;

  static DecoderConfig desk();
  // 12 layers, d 1024, ffn 4096, 16 heads, 250000-token shared vocabulary.
  static DecoderConfig paper();
};

// [lang_tag, BOS, tokens..., EOS]
std::vector<int> make_target_sequence(int lang_tag, std::span<const int> tokens);

// Teacher forcing split of a full target sequence: decoder inputs drop the
// final EOS; loss targets are the next token, with the lang-tag position
// ignored (BOS always follows it).
struct TeacherForcing {
  std::vector<int> inputs;
  std::vector<int> targets;
};
TeacherForcing teacher_forcing(std::span<const int> sequence);

struct SearchMode {
  enum class Kind { Greedy, Beam };
  Kind kind = Kind::Greedy;
  std::size_t beam_size = 1;

  static SearchMode greedy() { return {}; }
  static SearchMode beam(std::size_t k) { return {Kind::Beam, k}; }
};

void append_decoder_layout(ParamLayout& layout, const DecoderConfig& config);

// Pre-LN decoder with causal self-attention, cross-attention over the adapted
// encoder memory and an output projection tied to the input embedding.
template <typename T>
class TransformerDecoder {
 public:
  TransformerDecoder(const ParamStore<T>& params, const DecoderConfig& config);

  // Logits [len x vocab] for every input position. A null memory skips every
  // cross-attention sublayer (decoder-only language model).
  Tensor<T> logits(std::span<const int> inputs, const Tensor<T>* memory, ForwardContext& ctx) const;

  // Continues `prefix` (normally [lang_tag, BOS]) for at most max_len tokens.
  // The returned tokens exclude the prefix and include the EOS if one was
  // emitted. Beam hypotheses are ranked by summed log-probability, divided by
  // length once finished.
  std::vector<int> generate(const Tensor<T>& memory, std::span<const int> prefix,
                            std::size_t max_len, SearchMode mode) const;

  void set_block_dropout(std::size_t block, double p) { blocks_.at(block).set_dropout(p); }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }

 private:
  std::vector<T> next_log_probs(std::span<const int> inputs, const Tensor<T>& memory) const;

  DecoderConfig config_;
  Tensor<T> embedding_;  // [vocab x d], shared with the output projection
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> final_ln_;
};

}  // namespace interconnect
