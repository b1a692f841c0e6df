#include "interconnect/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace interconnect {

namespace {

using NgramCounts = std::map<std::vector<int>, std::size_t>;

NgramCounts ngrams(const std::vector<int>& seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<int>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                              seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

BleuDetail corpus_bleu_detail(std::span<const std::vector<int>> hypotheses,
                              std::span<const std::vector<int>> references, std::size_t max_n,
                              BleuSmoothing smoothing) {
  if (hypotheses.empty()) throw ContractError("corpus_bleu: empty corpus");
  if (hypotheses.size() != references.size()) {
    throw ContractError("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                        std::to_string(references.size()) + " references");
  }
  if (max_n == 0) throw ContractError("corpus_bleu: max_n must be positive");

  std::vector<std::size_t> matches(max_n, 0), totals(max_n, 0);
  BleuDetail out;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    out.hypothesis_length += hypotheses[s].size();
    out.reference_length += references[s].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hyp = ngrams(hypotheses[s], n);
      const auto ref = ngrams(references[s], n);
      for (const auto& [gram, count] : hyp) {
        totals[n - 1] += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  if (out.hypothesis_length == 0 || matches[0] == 0) {
    out.precisions.assign(max_n, 0.0);
    out.brevity_penalty = out.hypothesis_length == 0 ? 0.0 : out.brevity_penalty;
    return out;
  }
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (totals[n] == 0) break;  // every hypothesis is shorter than n + 1
    double p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    if (matches[n] == 0) {
      if (smoothing == BleuSmoothing::None) {
        out.precisions.resize(max_n, 0.0);
        out.precisions[n] = 0.0;
        out.bleu = 0.0;
        return out;
      }
      p = 1.0 / static_cast<double>(totals[n] + 1);
    }
    out.precisions.push_back(p);
    log_sum += std::log(p);
    ++orders;
  }
  out.precisions.resize(max_n, 0.0);
  const double c = static_cast<double>(out.hypothesis_length);
  const double r = static_cast<double>(out.reference_length);
  out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
  out.bleu = 100.0 * out.brevity_penalty * std::exp(log_sum / static_cast<double>(orders));
  return out;
}

double corpus_bleu(std::span<const std::vector<int>> hypotheses, std::span<const std::vector<int>> references,
                   std::size_t max_n, BleuSmoothing smoothing) {
  return corpus_bleu_detail(hypotheses, references, max_n, smoothing).bleu;
}

std::size_t transformer_block_params(std::size_t d, std::size_t f) {
  if (d == 0 || f == 0) throw ContractError("transformer_block_params: dims must be positive");
  return 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
}

ParamCountReport count_params(const ParamLayout& layout) {
  ParamCountReport report;
  report.totals.component = "total";
  auto init = [](ComponentCount& c) {
    for (auto s : kAllFreezeStrategies) c.strategies.push_back({s, 0, 0});
  };
  init(report.totals);
  const Component order[] = {Component::Downsampler, Component::Encoder, Component::EncoderExtra,
                             Component::Connector,   Component::Adaptor, Component::Decoder,
                             Component::Embedding};
  for (Component comp : order) {
    ComponentCount row;
    row.component = to_string(comp);
    init(row);
    bool present = false;
    for (const auto& spec : layout) {
      if (spec.component != comp) continue;
      present = true;
      const std::size_t n = spec.numel();
      row.total += n;
      report.totals.total += n;
      for (std::size_t i = 0; i < row.strategies.size(); ++i) {
        const bool train = is_trainable(spec, row.strategies[i].strategy);
        (train ? row.strategies[i].trainable : row.strategies[i].frozen) += n;
        (train ? report.totals.strategies[i].trainable : report.totals.strategies[i].frozen) += n;
      }
    }
    if (present) report.components.push_back(std::move(row));
  }
  return report;
}

ParamCountReport count_params(const ModelConfig& config) { return count_params(model_layout(config)); }

std::size_t connector_delta(const ModelConfig& config) {
  ModelConfig inter = config, final_layer = config;
  inter.connector.mode = ConnectorMode::InterConnection;
  final_layer.connector.mode = ConnectorMode::FinalLayer;
  return layout_numel(model_layout(inter)) - layout_numel(model_layout(final_layer));
}

std::vector<double> weight_diff(std::span<const double> multi, std::span<const double> bilingual) {
  if (multi.size() != bilingual.size()) {
    throw ContractError("weight_diff: lengths " + std::to_string(multi.size()) + " and " +
                        std::to_string(bilingual.size()) + " differ");
  }
  std::vector<double> out(multi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(multi[i] - bilingual[i]);
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine_similarity: vectors differ in length");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine_similarity: undefined for a zero vector");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

WeightReport make_weight_report(std::string label, std::span<const double> raw) {
  return {std::move(label), std::vector<double>(raw.begin(), raw.end()), report_weights(raw, true)};
}

template <typename T>
WeightReport make_weight_report(std::string label, const SpeechTranslator<T>& model) {
  const auto* w = model.layer_weights();
  if (w == nullptr) throw ContractError("model has no inter-connection weights (final-layer connector)");
  return make_weight_report(std::move(label), report_weights(*w, false));
}

template WeightReport make_weight_report<float>(std::string, const SpeechTranslator<float>&);
template WeightReport make_weight_report<double>(std::string, const SpeechTranslator<double>&);

}  // namespace interconnect
