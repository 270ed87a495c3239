#pragma once

#include <cstdint>
#include <vector>

#include "tabseq/preprocess.hpp"

namespace tabseq {

struct SmoteConfig {
  std::size_t k = 5;
  double target_ratio = 1.0;  // desired minority / majority after upsampling
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthetic windows needed so that (minority + synthetic) / majority reaches
/// target_ratio, rounded to the nearest count and never negative.
std::size_t smote_count(std::size_t minority, std::size_t majority, double target_ratio);

/// Indices of the k nearest neighbours of sample `i` by Euclidean distance
/// over flattened windows (ties broken by lower index).
std::vector<std::size_t> nearest_neighbors(const std::vector<FeatureMatrix>& samples, std::size_t i, std::size_t k);

/// SMOTE: each synthetic window is x + u (x_nn - x), with x drawn uniformly
/// from the minority set, x_nn drawn from its k nearest neighbours, and u
/// uniform in [0, 1]. Interpolated label-encoded columns stay continuous.
std::vector<FeatureMatrix> smote_upsample(const std::vector<FeatureMatrix>& minority, std::size_t majority_count,
                                          const SmoteConfig& cfg);

/// Token-path counterpart: draws minority windows with replacement until the
/// ratio is met.
template <typename Window>
std::vector<Window> duplicate_upsample(const std::vector<Window>& minority, std::size_t majority_count,
                                       double target_ratio, std::uint64_t seed);

}  // namespace tabseq

#include "tabseq/upsample_impl.hpp"
