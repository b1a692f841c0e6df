#include "interconnect/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace interconnect {

void DecoderConfig::validate() const {
  if (dim == 0 || ffn_dim == 0 || heads == 0) throw ConfigError("decoder dims must be positive");
  if (dim % heads != 0) {
    throw ConfigError("decoder dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (vocab_size <= static_cast<std::size_t>(tokens::kFirstLangTag)) {
    throw ConfigError("decoder vocabulary too small for the reserved tokens");
  }
}

DecoderConfig DecoderConfig::desk() { return {2, 64, 256, 4, 64}; }
DecoderConfig DecoderConfig::paper() { return {12, 1024, 4096, 16, 250000}; }

std::vector<int> make_target_sequence(int lang_tag, std::span<const int> body) {
  std::vector<int> seq;
  seq.reserve(body.size() + 3);
  seq.push_back(lang_tag);
  seq.push_back(tokens::kBos);
  seq.insert(seq.end(), body.begin(), body.end());
  seq.push_back(tokens::kEos);
  return seq;
}

TeacherForcing teacher_forcing(std::span<const int> sequence) {
  if (sequence.size() < 3) throw ContractError("target sequence needs at least [lang, BOS, EOS]");
  TeacherForcing tf;
  tf.inputs.assign(sequence.begin(), sequence.end() - 1);
  tf.targets.assign(sequence.begin() + 1, sequence.end());
  tf.targets[0] = tokens::kIgnore;
  return tf;
}

void append_decoder_layout(ParamLayout& layout, const DecoderConfig& config) {
  config.validate();
  layout.push_back({"decoder.embedding", {config.vocab_size, config.dim}, Component::Embedding,
                    ParamKind::Embedding,
                    InitRule::normal(1.0 / std::sqrt(static_cast<double>(config.dim)))});
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    append_transformer_block_layout(layout, "decoder.layers." + std::to_string(l), config.dim,
                                    config.ffn_dim, Component::Decoder, true);
  }
  append_layer_norm_layout(layout, "decoder.final_ln", config.dim, Component::Decoder);
}

template <typename T>
TransformerDecoder<T>::TransformerDecoder(const ParamStore<T>& params, const DecoderConfig& config)
    : config_(config), embedding_(params.get("decoder.embedding")), final_ln_(params, "decoder.final_ln") {
  config.validate();
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    blocks_.emplace_back(params, "decoder.layers." + std::to_string(l), config.heads, true);
  }
}

template <typename T>
Tensor<T> TransformerDecoder<T>::logits(std::span<const int> inputs, const Tensor<T>* memory,
                                        ForwardContext& ctx) const {
  const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(config_.dim)));
  Tensor<T> h = scale(embedding(embedding_, inputs), emb_scale);
  h = add(h, sinusoidal_positions<T>(inputs.size(), config_.dim));
  for (const auto& block : blocks_) h = block.forward(h, memory, true, ctx);
  return matmul(final_ln_(h), transpose(embedding_));
}

template <typename T>
std::vector<T> TransformerDecoder<T>::next_log_probs(std::span<const int> inputs,
                                                     const Tensor<T>& memory) const {
  NoGradGuard<T> no_grad;
  ForwardContext ctx;
  const Tensor<T> all = logits(inputs, &memory, ctx);
  const std::size_t v = all.cols();
  const T* row = all.data().data() + (all.rows() - 1) * v;
  double mx = row[0];
  for (std::size_t j = 1; j < v; ++j) mx = std::max<double>(mx, row[j]);
  double total = 0;
  for (std::size_t j = 0; j < v; ++j) total += std::exp(row[j] - mx);
  const double log_z = mx + std::log(total);
  std::vector<T> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = static_cast<T>(row[j] - log_z);
  return out;
}

template <typename T>
std::vector<int> TransformerDecoder<T>::generate(const Tensor<T>& memory, std::span<const int> prefix,
                                                 std::size_t max_len, SearchMode mode) const {
  if (max_len == 0) throw ContractError("generate: max_len must be at least 1");
  if (prefix.empty()) throw ContractError("generate: empty prefix");

  if (mode.kind == SearchMode::Kind::Greedy) {
    std::vector<int> seq(prefix.begin(), prefix.end());
    std::vector<int> out;
    for (std::size_t step = 0; step < max_len; ++step) {
      const auto lp = next_log_probs(seq, memory);
      const int tok = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      out.push_back(tok);
      if (tok == tokens::kEos) break;
      seq.push_back(tok);
    }
    return out;
  }

  if (mode.beam_size == 0) throw ContractError("generate: beam size must be positive");
  struct Hyp {
    std::vector<int> tokens;
    double score = 0.0;
  };
  struct Candidate {
    double score;
    std::size_t hyp;
    int token;
  };
  std::vector<Hyp> beam{Hyp{}};
  std::vector<std::pair<double, std::vector<int>>> finished;
  for (std::size_t step = 0; step < max_len && !beam.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < beam.size(); ++h) {
      std::vector<int> seq(prefix.begin(), prefix.end());
      seq.insert(seq.end(), beam[h].tokens.begin(), beam[h].tokens.end());
      const auto lp = next_log_probs(seq, memory);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        candidates.push_back({beam[h].score + static_cast<double>(lp[v]), h, static_cast<int>(v)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hyp> next;
    const bool last_step = step + 1 == max_len;
    std::size_t selected = 0;
    for (const auto& c : candidates) {
      if (selected == mode.beam_size) break;
      ++selected;
      Hyp h{beam[c.hyp].tokens, c.score};
      h.tokens.push_back(c.token);
      if (c.token == tokens::kEos || last_step) {
        finished.emplace_back(h.score / static_cast<double>(h.tokens.size()), std::move(h.tokens));
      } else {
        next.push_back(std::move(h));
      }
    }
    if (finished.size() >= mode.beam_size) break;
    beam = std::move(next);
  }
  const auto best = std::max_element(finished.begin(), finished.end(),
                                     [](const auto& a, const auto& b) { return a.first < b.first; });
  return best->second;
}

template class TransformerDecoder<float>;
template class TransformerDecoder<double>;

}  // namespace interconnect
