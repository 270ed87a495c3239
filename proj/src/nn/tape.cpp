#include "tabseq/nn/tape.hpp"

#include "tabseq/errors.hpp"

namespace tabseq::nn {

Var Tape::constant(Tensor value) { return record(std::move(value), false, {}); }

Var Tape::param(Parameter& p) {
  if (auto it = param_vars_.find(&p); it != param_vars_.end()) return it->second;
  const bool trainable = !p.frozen;
  Var v{};
  Parameter* target = &p;
  v = record(p.value, trainable, {});
  if (trainable) {
    nodes_[v.id].backward = [target](const Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) target->grad.data[i] += g.data[i];
    };
  }
  param_vars_.emplace(&p, v);
  return v;
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.data.size() != n.value.data.size()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

Var Tape::record(Tensor value, bool needs_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(backward)});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward needs a single-element loss");
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss).data[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.grad.data.empty()) continue;
    n.backward(n.grad);
  }
}

}  // namespace tabseq::nn
