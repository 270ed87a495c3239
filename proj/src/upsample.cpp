#include "tabseq/upsample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabseq/errors.hpp"
#include "tabseq/rng.hpp"

namespace tabseq {

void SmoteConfig::validate() const {
  if (k < 1) throw ConfigError("SMOTE k must be >= 1");
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw ConfigError("target_ratio must lie in (0, 1]");
}

std::size_t smote_count(std::size_t minority, std::size_t majority, double target_ratio) {
  const double wanted = std::round(target_ratio * static_cast<double>(majority));
  const double have = static_cast<double>(minority);
  return wanted > have ? static_cast<std::size_t>(wanted - have) : 0;
}

namespace {

double squared_distance(const FeatureMatrix& a, const FeatureMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const std::vector<FeatureMatrix>& samples, std::size_t i, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(samples.size());
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (j != i) dist.emplace_back(squared_distance(samples[i], samples[j]), j);
  }
  k = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = dist[j].second;
  return out;
}

std::vector<FeatureMatrix> smote_upsample(const std::vector<FeatureMatrix>& minority, std::size_t majority_count,
                                          const SmoteConfig& cfg) {
  cfg.validate();
  if (minority.size() <= cfg.k) {
    throw TooFewSamples("SMOTE needs more than k=" + std::to_string(cfg.k) + " minority samples, got " +
                        std::to_string(minority.size()));
  }
  for (const auto& m : minority) {
    if (m.rows != minority[0].rows || m.cols != minority[0].cols || m.data.size() != minority[0].data.size()) {
      throw ShapeError("SMOTE needs equally shaped windows");
    }
  }
  const std::size_t count = smote_count(minority.size(), majority_count, cfg.target_ratio);

  std::vector<std::vector<std::size_t>> neighbors(minority.size());
  Rng rng = Rng(cfg.seed).split("smote");
  std::vector<FeatureMatrix> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t i = rng.below(minority.size());
    if (neighbors[i].empty()) neighbors[i] = nearest_neighbors(minority, i, cfg.k);
    const std::size_t nn = neighbors[i][rng.below(neighbors[i].size())];
    const double u = rng.uniform();
    FeatureMatrix synth = minority[i];
    for (std::size_t c = 0; c < synth.data.size(); ++c) {
      synth.data[c] = minority[i].data[c] + u * (minority[nn].data[c] - minority[i].data[c]);
    }
    out.push_back(std::move(synth));
  }
  return out;
}

}  // namespace tabseq
