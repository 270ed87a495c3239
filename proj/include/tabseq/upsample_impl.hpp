#pragma once

#include "tabseq/errors.hpp"
#include "tabseq/rng.hpp"

namespace tabseq {

template <typename Window>
std::vector<Window> duplicate_upsample(const std::vector<Window>& minority, std::size_t majority_count,
                                       double target_ratio, std::uint64_t seed) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw ConfigError("target_ratio must lie in (0, 1]");
  const std::size_t count = smote_count(minority.size(), majority_count, target_ratio);
  if (count > 0 && minority.empty()) throw TooFewSamples("no minority windows to duplicate");
  Rng rng = Rng(seed).split("duplicate");
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.push_back(minority[rng.below(minority.size())]);
  return out;
}

}  // namespace tabseq
