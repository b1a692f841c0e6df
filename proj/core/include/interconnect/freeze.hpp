#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "interconnect/params.hpp"

namespace interconnect {

// Which parameters receive updates.
//   EncoderFrozen: downsampler and pretrained encoder blocks frozen.
//   Lna: every LayerNorm, encoder self-attention and decoder cross-attention
//        train, plus all newly initialized components.
//   FullFineTune: everything trains.
enum class FreezeStrategy { EncoderFrozen, Lna, FullFineTune };

inline constexpr FreezeStrategy kAllFreezeStrategies[] = {
    FreezeStrategy::EncoderFrozen, FreezeStrategy::Lna, FreezeStrategy::FullFineTune};

const char* to_string(FreezeStrategy s) noexcept;
FreezeStrategy freeze_strategy_from_string(std::string_view name);

bool is_trainable(const ParamSpec& spec, FreezeStrategy strategy) noexcept;

struct Partition {
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
};

// Disjoint exact cover of the layout, both lists in layout order.
Partition partition_parameters(const ParamLayout& layout, FreezeStrategy strategy);

}  // namespace interconnect
