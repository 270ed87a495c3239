#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "tabseq/schema.hpp"

namespace tabseq::synth {

/// Generator settings. The default schema has 8 numerical and 4
/// categorical attributes.
struct GenConfig {
  std::size_t entities = 200;
  std::size_t rows_per_entity = 50;
  std::size_t numerical_fields = 8;
  std::vector<std::size_t> categorical_cardinalities = {4, 6, 3, 5};
  double fraud_rate = 0.05;                    // target positive-row fraction
  double temporal_signal_strength = 0.9;
  double cross_feature_signal_strength = 0.1;
  double noise_scale = 0.1;                    // regression target noise
  double missing_rate = 0.0;                   // per numerical cell
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

/// Lag depth of the temporal term.
inline constexpr std::size_t kTemporalLag = 3;
/// Steepness of the logistic labeling model (per unit of standardized score).
inline constexpr double kLogitScale = 6.0;

/// Weight vector w used to collapse a row's numerical attributes into one
/// latent u = w . x. Alternating signs, unit norm.
std::vector<double> row_weights(std::size_t numerical_fields);

/// Smooth ramp applied to each lagged latent.
double ramp(double u) noexcept;

/// Temporal term for row t of one entity given that entity's latents u:
/// 0.5 ramp(u[t-1]) + 0.3 ramp(u[t-2]) + 0.2 ramp(u[t-3]), with latents before
/// the first row taken as 0.
double temporal_term(std::span<const double> latents, std::size_t t) noexcept;

/// Same-row interaction: (x0*x1 + x2*x3) / sqrt(2) over the first four
/// numerical attributes.
double cross_term(std::span<const double> row) noexcept;

/// Noise-free regression target for row t: sin(u[t-1]) + 0.5 tanh(u[t-2])
/// + 0.25 u[t-3] + 0.5 x0, where x0 is row t's first numerical attribute.
double regression_signal(std::span<const double> latents, std::size_t t, double x0) noexcept;

Schema fraud_schema(const GenConfig& cfg);
Schema regression_schema(const GenConfig& cfg);

/// Binary per-row labels in column "is_fraud".
Dataset generate_fraud_dataset(const GenConfig& cfg);
/// Real per-row targets in column "target".
Dataset generate_regression_dataset(const GenConfig& cfg);

}  // namespace tabseq::synth
