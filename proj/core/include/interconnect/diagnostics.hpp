#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "interconnect/gradcheck.hpp"
#include "interconnect/model.hpp"
#include "interconnect/synthdata.hpp"

namespace interconnect {

struct StrategyGradCheck {
  FreezeStrategy strategy;
  GradCheckReport report;  // one entry per trainable parameter tensor
};

// Finite-difference check of the full translation loss (float64, eval mode so
// the loss is deterministic) with respect to every trainable parameter tensor
// under each strategy. The batch is `n_samples` generated training samples.
std::vector<StrategyGradCheck> model_gradcheck(const ModelConfig& config, const TaskSpec& task,
                                               std::span<const FreezeStrategy> strategies,
                                               const GradCheckOptions& options, std::uint64_t seed,
                                               std::size_t n_samples = 2, double label_smoothing = 0.2);

}  // namespace interconnect
