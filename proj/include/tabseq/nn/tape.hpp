#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <unordered_map>
#include <vector>

#include "tabseq/nn/tensor.hpp"
#include "tabseq/rng.hpp"

namespace tabseq::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
};

/// Number of query-key score pairs evaluated by attention.
struct AttentionCounter {
  std::uint64_t pairs = 0;
  std::map<std::size_t, std::uint64_t> by_length;  // attended sequence length -> pairs
  void reset() noexcept {
    pairs = 0;
    by_length.clear();
  }
};

/// Reverse-mode differentiation over a recorded sequence of operations.
/// Each op appends a node holding its output and a closure that pushes the
/// output gradient into its inputs. One tape serves one forward/backward.
class Tape {
 public:
  explicit Tape(bool training = false, std::uint64_t dropout_seed = 0)
      : training_(training), dropout_rng_(dropout_seed) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf for a parameter; gradients flow into param.grad on backward
  /// unless the parameter is frozen. Repeated calls return the same Var.
  Var param(Parameter& p);

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_[v.id].value; }
  [[nodiscard]] bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient buffer of v, allocated as zeros on first use.
  Tensor& grad(Var v);

  /// Receives the finished gradient of the node's output.
  using Backward = std::function<void(const Tensor& grad_out)>;

  /// Appends a node. `backward` runs once the output gradient is final.
  Var record(Tensor value, bool needs_grad, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf. `loss` must
  /// hold a single element.
  void backward(Var loss);

  [[nodiscard]] bool training() const noexcept { return training_; }
  Rng& dropout_rng() noexcept { return dropout_rng_; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, Var> param_vars_;
  bool training_;
  Rng dropout_rng_;
};

}  // namespace tabseq::nn
