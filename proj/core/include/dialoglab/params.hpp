#pragma once

#include <cmath>
#include <map>
#include <string>

#include "dialoglab/rng.hpp"
#include "dialoglab/tensor.hpp"

namespace dialoglab {

// Named trainable tensors. Creation order does not matter; the map is
// ordered by name so optimizer sweeps and checkpoints are deterministic.
class ParamStore {
 public:
  explicit ParamStore(RngPool* rng) : rng_(rng) {}

  // Uniform(-a, a) with a = 1/sqrt(fan_in); fan_in is the last dimension.
  Tensor param(const std::string& name, Shape shape) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    double fan_in = static_cast<double>(shape.back());
    double a = 1.0 / std::sqrt(fan_in);
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    for (double& v : t.data()) v = rng_->uniform("init", -a, a);
    params_.emplace(name, t);
    return t;
  }

  Tensor const_param(const std::string& name, Shape shape, double value) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    Tensor t = Tensor::full(shape, value, /*requires_grad=*/true);
    params_.emplace(name, t);
    return t;
  }

  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  size_t count() const { return params_.size(); }

 private:
  RngPool* rng_;
  std::map<std::string, Tensor> params_;
};

}  // namespace dialoglab
