#include "tabseq/nn/tensor.hpp"

#include <functional>
#include <numeric>

#include "tabseq/errors.hpp"

namespace tabseq::nn {

std::size_t numel(const Shape& s) noexcept {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " + std::to_string(data.size()) + " values");
  }
}

std::size_t ParamSet::add(std::string name, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(init.shape);
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

std::size_t ParamSet::count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Tensor> ParamSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParamSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw ShapeError("snapshot does not match parameter count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape != params_[i].value.shape) throw ShapeError("snapshot shape mismatch for " + params_[i].name);
    params_[i].value = values[i];
  }
}

}  // namespace tabseq::nn
