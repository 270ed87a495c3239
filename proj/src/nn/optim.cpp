#include "tabseq/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabseq/errors.hpp"

namespace tabseq::nn {

void adam_step(ParamSet& ps, AdamState& s) {
  if (s.m.empty() && s.v.empty()) {
    for (const auto& p : ps) {
      s.m.emplace_back(p.value.shape);
      s.v.emplace_back(p.value.shape);
    }
  }
  if (s.m.size() != ps.size() || s.v.size() != ps.size()) throw ShapeError("adam state does not match parameters");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Parameter& p = ps[i];
    if (s.m[i].shape != p.value.shape || p.grad.shape != p.value.shape) {
      throw ShapeError("adam: shape mismatch for " + p.name);
    }
    if (p.frozen) continue;
    auto& m = s.m[i].data;
    auto& v = s.v[i].data;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g;
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g * g;
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p.value.data[j] -= s.lr * mh / (std::sqrt(vh) + s.eps);
    }
  }
}

double value_and_grad(ParamSet& ps, const LossFn& loss) {
  ps.zero_grad();
  Tape t(false);
  Var l = loss(t);
  const double v = t.value(l).data.at(0);
  t.backward(l);
  return v;
}

namespace {

double eval(ParamSet&, const LossFn& loss) {
  Tape t(false);
  return t.value(loss(t)).data.at(0);
}

}  // namespace

GradCheckResult grad_check(ParamSet& ps, const LossFn& loss, const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw RangeError("grad_check eps must be positive");
  const double f0 = value_and_grad(ps, loss);
  if (!std::isfinite(f0)) throw NonFiniteError("grad_check: loss is not finite");
  Rng rng(opts.seed);
  GradCheckResult r;
  for (auto& p : ps) {
    if (p.frozen) continue;
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > opts.max_coords_per_tensor) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(opts.max_coords_per_tensor);
    }
    for (std::size_t c : coords) {
      const double a = p.grad.data[c];
      if (!std::isfinite(a)) throw NonFiniteError("grad_check: gradient of " + p.name + " is not finite");
      const double orig = p.value.data[c];
      p.value.data[c] = orig + opts.eps;
      const double fp = eval(ps, loss);
      p.value.data[c] = orig - opts.eps;
      const double fm = eval(ps, loss);
      p.value.data[c] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) throw NonFiniteError("grad_check: perturbed loss is not finite");
      const double b = (fp - fm) / (2.0 * opts.eps);
      const double err = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
      ++r.coords_checked;
      if (err > r.max_rel_error || r.worst_param.empty()) {
        if (err >= r.max_rel_error) {
          r.max_rel_error = err;
          r.worst_param = p.name;
          r.worst_index = c;
          r.analytic = a;
          r.numeric = b;
        }
      }
    }
  }
  return r;
}

}  // namespace tabseq::nn
