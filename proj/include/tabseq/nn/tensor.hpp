#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace tabseq::nn {

using Shape = std::vector<std::size_t>;

[[nodiscard]] std::size_t numel(const Shape& s) noexcept;
[[nodiscard]] std::string shape_string(const Shape& s);

/// Dense row-major tensor of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  [[nodiscard]] std::size_t rank() const noexcept { return shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape.at(i); }
  [[nodiscard]] bool empty() const noexcept { return data.empty() && shape.empty(); }
  double& operator[](std::size_t i) noexcept { return data[i]; }
  double operator[](std::size_t i) const noexcept { return data[i]; }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

/// Named parameters in creation order. Indices and references stay valid
/// as parameters are added.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor init);

  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }
  [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const;

  void zero_grad();
  /// Number of scalar parameters.
  [[nodiscard]] std::size_t count() const noexcept;

  /// Copies of every value, for best-epoch restore.
  [[nodiscard]] std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

}  // namespace tabseq::nn
