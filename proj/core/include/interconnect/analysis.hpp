#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "interconnect/model.hpp"

namespace interconnect {

enum class BleuSmoothing {
  None,
  // A higher-order precision with no match becomes 1 / (count + 1).
  AddOne,
};

struct BleuDetail {
  double bleu = 0.0;  // [0, 100]
  std::vector<double> precisions;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
  double brevity_penalty = 1.0;
};

// Corpus-level BLEU over token sequences: clipped n-gram counts pooled over the
// corpus, geometric mean of the precisions times the brevity penalty. Orders
// for which the hypotheses hold no n-gram at all (every hypothesis shorter
// than n) are left out of the mean. Zero unigram matches score 0.
BleuDetail corpus_bleu_detail(std::span<const std::vector<int>> hypotheses,
                              std::span<const std::vector<int>> references, std::size_t max_n = 4,
                              BleuSmoothing smoothing = BleuSmoothing::AddOne);

double corpus_bleu(std::span<const std::vector<int>> hypotheses, std::span<const std::vector<int>> references,
                   std::size_t max_n = 4, BleuSmoothing smoothing = BleuSmoothing::AddOne);

// 4(d^2 + d) + (df + f) + (fd + d) + 4d: attention, feed-forward, two LayerNorms.
std::size_t transformer_block_params(std::size_t dim, std::size_t ffn_dim);

struct StrategyCount {
  FreezeStrategy strategy;
  std::size_t trainable = 0;
  std::size_t frozen = 0;
};

struct ComponentCount {
  std::string component;
  std::size_t total = 0;
  std::vector<StrategyCount> strategies;  // in kAllFreezeStrategies order
};

struct ParamCountReport {
  std::vector<ComponentCount> components;  // components present in the layout
  ComponentCount totals;                   // component "total"
};

ParamCountReport count_params(const ParamLayout& layout);
ParamCountReport count_params(const ModelConfig& config);

// Parameters added by switching the connector from final-layer to
// inter-connection with everything else fixed.
std::size_t connector_delta(const ModelConfig& config);

// |a - b| elementwise; ContractError on a length mismatch.
std::vector<double> weight_diff(std::span<const double> multi, std::span<const double> bilingual);

// a.b / (|a| |b|); ContractError for a zero vector or a length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct WeightReport {
  std::string label;
  std::vector<double> raw;
  std::vector<double> normalized;  // raw / sum |raw|
};

WeightReport make_weight_report(std::string label, std::span<const double> raw);

template <typename T>
WeightReport make_weight_report(std::string label, const SpeechTranslator<T>& model);

}  // namespace interconnect
