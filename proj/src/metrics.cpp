#include "tabseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tabseq/errors.hpp"

namespace tabseq::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw LengthMismatch("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

std::vector<std::size_t> rank_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

void check_rank_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels, double neg_weight) {
  check_lengths(scores.size(), labels.size());
  if (!(neg_weight > 0.0)) throw RangeError("neg_weight must be positive");
  std::size_t pos = 0;
  for (auto y : labels) {
    if (y > 1) throw RangeError("labels must be 0 or 1");
    pos += y;
  }
  if (pos == 0 || pos == labels.size()) throw DegenerateLabels("ranking metrics need both classes present");
}

// Trapezoid area under cumulative-positive-share vs cumulative-weight-share
// for a given visiting order.
double lorenz_area(std::span<const std::size_t> order, std::span<const std::uint8_t> labels, double neg_weight) {
  double total_weight = 0.0, total_pos = 0.0;
  for (auto y : labels) {
    total_weight += y ? 1.0 : neg_weight;
    total_pos += y;
  }
  double area = 0.0, found = 0.0;
  for (auto i : order) {
    const double w = labels[i] ? 1.0 : neg_weight;
    const double before = found;
    found += labels[i];
    area += w * (before + found);
  }
  return area / (2.0 * total_weight * total_pos);
}

}  // namespace

BinaryConfusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
  check_lengths(preds.size(), labels.size());
  BinaryConfusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0, y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_from(double precision, double recall) noexcept {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

PrecisionRecall precision_recall(const BinaryConfusion& c) noexcept {
  PrecisionRecall r;
  const auto pp = c.tp + c.fp, ap = c.tp + c.fn;
  r.precision = pp ? static_cast<double>(c.tp) / static_cast<double>(pp) : 0.0;
  r.recall = ap ? static_cast<double>(c.tp) / static_cast<double>(ap) : 0.0;
  r.f1 = f1_from(r.precision, r.recall);
  return r;
}

PrecisionRecall f1(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
  return precision_recall(confusion(preds, labels));
}

double weighted_gini(std::span<const double> scores, std::span<const std::uint8_t> labels, double neg_weight) {
  check_rank_inputs(scores, labels, neg_weight);
  const auto order = rank_descending(scores);
  std::vector<std::size_t> perfect(labels.size());
  std::iota(perfect.begin(), perfect.end(), std::size_t{0});
  std::stable_partition(perfect.begin(), perfect.end(), [&](std::size_t i) { return labels[i] == 1; });
  const double model = 2.0 * lorenz_area(order, labels, neg_weight) - 1.0;
  const double best = 2.0 * lorenz_area(perfect, labels, neg_weight) - 1.0;
  return model / best;
}

double capture_rate(std::span<const double> scores, std::span<const std::uint8_t> labels, double neg_weight,
                    double fraction) {
  check_rank_inputs(scores, labels, neg_weight);
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw RangeError("capture fraction must lie in [0, 1]");
  double total_weight = 0.0, total_pos = 0.0;
  for (auto y : labels) {
    total_weight += y ? 1.0 : neg_weight;
    total_pos += y;
  }
  const double cutoff = fraction * total_weight;
  double cum = 0.0, found = 0.0;
  for (auto i : rank_descending(scores)) {
    cum += labels[i] ? 1.0 : neg_weight;
    if (cum > cutoff) break;
    found += labels[i];
  }
  return found / total_pos;
}

double metric_m(double gini, double capture) {
  if (!(gini >= -1.0 && gini <= 1.0)) throw RangeError("G must lie in [-1, 1]");
  if (!(capture >= 0.0 && capture <= 1.0)) throw RangeError("D must lie in [0, 1]");
  return 0.5 * (gini + capture);
}

double rmse(std::span<const double> preds, std::span<const double> targets) {
  check_lengths(preds.size(), targets.size());
  if (preds.empty()) throw LengthMismatch("rmse needs at least one sample");
  double ss = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) ss += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  return std::sqrt(ss / static_cast<double>(preds.size()));
}

RankMetrics rank_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels, double neg_weight) {
  RankMetrics r;
  r.neg_weight = neg_weight;
  r.gini = weighted_gini(scores, labels, neg_weight);
  r.capture = capture_rate(scores, labels, neg_weight);
  r.m_score = metric_m(r.gini, r.capture);
  return r;
}

double tie_fraction(std::span<const double> scores) {
  if (scores.empty()) return 0.0;
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  std::size_t tied = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool left = i > 0 && s[i - 1] == s[i];
    const bool right = i + 1 < s.size() && s[i + 1] == s[i];
    if (left || right) ++tied;
  }
  return static_cast<double>(tied) / static_cast<double>(s.size());
}

}  // namespace tabseq::metrics
