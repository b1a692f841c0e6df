#include "interconnect/evaluate.hpp"

#include <thread>

#include "interconnect/decoder.hpp"

namespace interconnect {

std::vector<BleuRow> bleu_by_direction(std::span<const Sample> corpus, std::span<const std::vector<int>> hypotheses) {
  if (corpus.size() != hypotheses.size()) throw ContractError("one hypothesis per sample is required");
  std::vector<BleuRow> rows;
  for (Direction d : kAllDirections) {
    std::vector<std::vector<int>> hyps, refs;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus[i].direction != d) continue;
      hyps.push_back(hypotheses[i]);
      refs.push_back(corpus[i].target);
    }
    if (hyps.empty()) continue;
    rows.push_back({to_string(d), corpus_bleu(hyps, refs), hyps.size()});
  }
  return rows;
}

std::vector<std::vector<int>> oracle_hypotheses(const TaskSpec& spec, std::span<const Sample> corpus) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(apply_rule(spec, s.direction, s.source));
  return out;
}

template <typename T>
EvalResult evaluate_bleu(const SpeechTranslator<T>& model, std::span<const Sample> corpus, std::size_t max_len,
                         SearchMode mode, std::size_t jobs) {
  if (corpus.empty()) throw ContractError("evaluation corpus is empty");
  EvalResult result;
  result.hypotheses.resize(corpus.size());
  auto decode = [&](std::size_t i) {
    const auto& s = corpus[i];
    Tensor<T> wave({s.waveform.size()}, std::vector<T>(s.waveform.begin(), s.waveform.end()));
    auto hyp = model.translate(wave, lang_tag(s.direction), max_len, mode);
    if (!hyp.empty() && hyp.back() == tokens::kEos) hyp.pop_back();
    result.hypotheses[i] = std::move(hyp);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, corpus.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) decode(i);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t j = 0; j < jobs; ++j) {
      workers.emplace_back([&, j] {
        try {
          for (std::size_t i = j; i < corpus.size(); i += jobs) decode(i);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  result.rows = bleu_by_direction(corpus, result.hypotheses);
  return result;
}

template EvalResult evaluate_bleu<float>(const SpeechTranslator<float>&, std::span<const Sample>, std::size_t,
                                         SearchMode, std::size_t);
template EvalResult evaluate_bleu<double>(const SpeechTranslator<double>&, std::span<const Sample>, std::size_t,
                                          SearchMode, std::size_t);

}  // namespace interconnect
