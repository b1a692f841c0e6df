#include "interconnect/freeze.hpp"

namespace interconnect {

const char* to_string(FreezeStrategy s) noexcept {
  switch (s) {
    case FreezeStrategy::EncoderFrozen: return "encoder";
    case FreezeStrategy::Lna: return "lna";
    case FreezeStrategy::FullFineTune: return "full";
  }
  return "unknown";
}

FreezeStrategy freeze_strategy_from_string(std::string_view name) {
  if (name == "encoder" || name == "encoder_frozen") return FreezeStrategy::EncoderFrozen;
  if (name == "lna") return FreezeStrategy::Lna;
  if (name == "full" || name == "full_ft" || name == "none") return FreezeStrategy::FullFineTune;
  throw ConfigError("unknown freeze strategy '" + std::string(name) + "' (expected encoder|lna|full)");
}

bool is_trainable(const ParamSpec& spec, FreezeStrategy strategy) noexcept {
  const bool newly_initialized = spec.component == Component::Connector ||
                                 spec.component == Component::Adaptor ||
                                 spec.component == Component::EncoderExtra;
  switch (strategy) {
    case FreezeStrategy::FullFineTune:
      return true;
    case FreezeStrategy::EncoderFrozen:
      return spec.component != Component::Downsampler && spec.component != Component::Encoder;
    case FreezeStrategy::Lna:
      if (newly_initialized || spec.kind == ParamKind::LayerNorm) return true;
      if (spec.component == Component::Encoder && spec.kind == ParamKind::SelfAttention) return true;
      return spec.component == Component::Decoder && spec.kind == ParamKind::CrossAttention;
  }
  return false;
}

Partition partition_parameters(const ParamLayout& layout, FreezeStrategy strategy) {
  Partition p;
  for (const auto& spec : layout) {
    (is_trainable(spec, strategy) ? p.trainable : p.frozen).push_back(spec.name);
  }
  return p;
}

}  // namespace interconnect
