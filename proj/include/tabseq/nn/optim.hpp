#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tabseq/nn/tape.hpp"

namespace tabseq::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;  // one pair per parameter, created on first step
};

/// One bias-corrected Adam update from the gradients accumulated in `ps`.
/// Frozen parameters are left untouched.
void adam_step(ParamSet& ps, AdamState& state);

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t max_coords_per_tensor = 12;  // larger tensors are sampled
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Scalar loss built on a fresh evaluation tape.
using LossFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of every trainable parameter against
/// central differences; error per coordinate is |a - b| / max(|a|, |b|, 1e-8).
GradCheckResult grad_check(ParamSet& ps, const LossFn& loss, const GradCheckOptions& opts = {});

/// Loss value and parameter gradients (accumulated into ps after zeroing).
double value_and_grad(ParamSet& ps, const LossFn& loss);

}  // namespace tabseq::nn
