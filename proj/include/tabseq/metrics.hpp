#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace tabseq::metrics {

struct BinaryConfusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  [[nodiscard]] std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

BinaryConfusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);
/// 0/0 ratios are reported as 0.
PrecisionRecall precision_recall(const BinaryConfusion& c) noexcept;
PrecisionRecall f1(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);
/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_from(double precision, double recall) noexcept;

inline constexpr double kDefaultNegWeight = 20.0;
inline constexpr double kCaptureFraction = 0.04;

/// Normalized weighted Gini. Rows are ranked by score (descending, ties kept
/// in input order); negatives weigh `neg_weight`, positives 1. The curve of
/// cumulative positive capture against cumulative weight is integrated with
/// the trapezoid rule; G = (2A - 1) / (2A_perfect - 1).
double weighted_gini(std::span<const double> scores, std::span<const std::uint8_t> labels,
                     double neg_weight = kDefaultNegWeight);

/// Share of all positives inside the top-ranked prefix whose cumulative
/// weight does not exceed fraction * total weight.
double capture_rate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    double neg_weight = kDefaultNegWeight, double fraction = kCaptureFraction);

/// 0.5 * (G + D).
double metric_m(double gini, double capture);

double rmse(std::span<const double> preds, std::span<const double> targets);

struct RankMetrics {
  double gini = 0.0;
  double capture = 0.0;
  double m_score = 0.0;
  double neg_weight = kDefaultNegWeight;
};

RankMetrics rank_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         double neg_weight = kDefaultNegWeight);

/// Fraction of rows whose score equals another row's score.
double tie_fraction(std::span<const double> scores);

}  // namespace tabseq::metrics
