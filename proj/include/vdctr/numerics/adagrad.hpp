#pragma once

#include <cmath>
#include <map>
#include <string>

#include "vdctr/errors.hpp"
#include "vdctr/numerics/tape.hpp"

namespace vdctr {

struct AdagradConfig {
  double learning_rate = 0.05;
  double epsilon = 1e-10;
};

/// Adagrad: G += g^2; theta -= lr * g / (sqrt(G) + eps).
///
/// Accumulators are keyed by parameter name, so a model may be copied or moved
/// between steps as long as names stay stable.
class Adagrad {
 public:
  explicit Adagrad(AdagradConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0) || !(cfg_.epsilon > 0.0)) {
      throw ConfigError("adagrad: learning rate and epsilon must be positive");
    }
  }

  const AdagradConfig& config() const { return cfg_; }

  void step(Parameter& param, const Tensor& grad) {
    if (param.frozen) {
      throw FrozenParameterError("adagrad: refusing to update frozen parameter '" +
                                 param.name + "'");
    }
    require_same_shape(param.value, grad, "adagrad step");
    auto it = accumulators_.find(param.name);
    if (it == accumulators_.end()) {
      it = accumulators_.emplace(param.name, Tensor::zeros_like(param.value)).first;
    }
    Tensor& acc = it->second;
    require_same_shape(acc, grad, "adagrad accumulator");
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i];
      acc[i] += g * g;
      if (g != 0.0) {
        param.value[i] -= cfg_.learning_rate * g / (std::sqrt(acc[i]) + cfg_.epsilon);
      }
    }
  }

  void step(const Gradients& grads) {
    for (const ParamGrad& pg : grads) step(*pg.param, pg.grad);
  }

  const Tensor* accumulator(const std::string& name) const {
    auto it = accumulators_.find(name);
    return it == accumulators_.end() ? nullptr : &it->second;
  }

 private:
  AdagradConfig cfg_;
  std::map<std::string, Tensor> accumulators_;
};

}  // namespace vdctr
