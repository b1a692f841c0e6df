#pragma once

#include <span>
#include <vector>

#include "interconnect/figures.hpp"
#include "interconnect/model.hpp"
#include "interconnect/synthdata.hpp"

namespace interconnect {

struct EvalResult {
  std::vector<BleuRow> rows;                   // one per direction present, A/B/C order
  std::vector<std::vector<int>> hypotheses;    // corpus order, EOS stripped
};

// Decodes every sample (in parallel with jobs > 1; the result does not depend
// on jobs) and scores corpus BLEU per direction.
template <typename T>
EvalResult evaluate_bleu(const SpeechTranslator<T>& model, std::span<const Sample> corpus, std::size_t max_len,
                         SearchMode mode = SearchMode::greedy(), std::size_t jobs = 1);

// Scores the given hypotheses against the corpus references per direction.
std::vector<BleuRow> bleu_by_direction(std::span<const Sample> corpus, std::span<const std::vector<int>> hypotheses);

// Hypotheses produced by applying each direction's rule to the latent source.
std::vector<std::vector<int>> oracle_hypotheses(const TaskSpec& spec, std::span<const Sample> corpus);

}  // namespace interconnect
