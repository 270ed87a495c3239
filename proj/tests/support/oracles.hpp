#pragma once
// Slow, independent reference implementations used by the unit and
// acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace oracle {

/// True when row j comes after row i in a descending-score ranking with
/// ties kept in input order.
inline bool ranked_after(std::span<const double> s, std::size_t i, std::size_t j) {
  return s[j] < s[i] || (s[j] == s[i] && j > i);
}

/// Weighted normalized Gini via pairwise concordance, O(n^2).
/// With W total weight and P positives, the trapezoid Lorenz area satisfies
/// 2 W P A = P + 2 * sum over positives i of the weight ranked after i.
inline double raw_gini_pairwise(std::span<const double> s, std::span<const std::uint8_t> y, double neg_w) {
  double W = 0.0, P = 0.0;
  for (auto v : y) {
    W += v ? 1.0 : neg_w;
    P += v;
  }
  double c = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j != i && ranked_after(s, i, j)) c += y[j] ? 1.0 : neg_w;
    }
  }
  return (P + 2.0 * c) / (W * P) - 1.0;
}

inline double gini_pairwise(std::span<const double> s, std::span<const std::uint8_t> y, double neg_w) {
  std::vector<double> perfect(y.begin(), y.end());
  return raw_gini_pairwise(s, y, neg_w) / raw_gini_pairwise(perfect, y, neg_w);
}

/// Capture rate by walking the ranking one row at a time.
inline double capture_walk(std::span<const double> s, std::span<const std::uint8_t> y, double neg_w, double frac) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Selection sort: pick the best remaining row each step.
  std::vector<std::size_t> order;
  std::vector<bool> used(s.size(), false);
  for (std::size_t step = 0; step < s.size(); ++step) {
    std::size_t best = s.size();
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (used[j]) continue;
      if (best == s.size() || s[j] > s[best]) best = j;
    }
    used[best] = true;
    order.push_back(best);
  }
  double total = 0.0, pos = 0.0;
  for (auto v : y) {
    total += v ? 1.0 : neg_w;
    pos += v;
  }
  double cum = 0.0, got = 0.0;
  for (auto i : order) {
    const double w = y[i] ? 1.0 : neg_w;
    if (cum + w > frac * total) break;
    cum += w;
    got += y[i];
  }
  return got / pos;
}

/// Midpoint-between-order-statistics quantile of a sorted sample.
inline double quantile_mid(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size());
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (static_cast<double>(k) == pos && k > 0 && k < sorted.size()) return 0.5 * (sorted[k - 1] + sorted[k]);
  return sorted[std::min(k, sorted.size() - 1)];
}

/// Least-squares slope of y on x.
inline double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

/// F1 from precision and recall, written out directly.
inline double f1(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace oracle
