#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vdctr/errors.hpp"
#include "vdctr/numerics/ops.hpp"
#include "vdctr/rng.hpp"

namespace vdctr {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

inline Var apply_activation(Activation act, const Var& x) {
  switch (act) {
    case Activation::kRelu: return ops::relu(x);
    case Activation::kTanh: return ops::tanh(x);
    case Activation::kSigmoid: return ops::sigmoid(x);
    case Activation::kIdentity: break;
  }
  return x;
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w(Shape{fan_in, fan_out});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
  return w;
}

/// Fully connected layer y = x W + b with W stored [in x out].
struct Dense {
  Parameter weight;
  Parameter bias;

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight{name + ".weight", glorot_uniform(in, out, rng)},
        bias{name + ".bias", Tensor(Shape{out}, 0.0)} {}

  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }

  Var forward(Tape& tape, const Var& x) {
    return ops::add_row_bias(ops::matmul(x, tape.param(weight)), tape.param(bias));
  }

  /// Forward pass that treats the weights as constants.
  Var forward_const(Tape& tape, const Var& x) const {
    return ops::add_row_bias(ops::matmul(x, tape.constant(weight.value)),
                             tape.constant(bias.value));
  }
};

/// Stack of dense layers, one activation per layer.
struct Mlp {
  std::vector<Dense> layers;
  std::vector<Activation> activations;

  Mlp() = default;
  Mlp(const std::string& name, const std::vector<std::size_t>& sizes,
      const std::vector<Activation>& acts, Rng& rng) {
    if (sizes.size() < 2 || acts.size() != sizes.size() - 1) {
      throw ConfigError("mlp '" + name + "': need one activation per layer");
    }
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      if (sizes[i] == 0 || sizes[i + 1] == 0) throw ConfigError("mlp '" + name + "': zero width");
      layers.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng);
    }
    activations = acts;
  }

  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }

  Var forward(Tape& tape, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = apply_activation(activations[i], layers[i].forward(tape, x));
    }
    return x;
  }

  Var forward_const(Tape& tape, Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = apply_activation(activations[i], layers[i].forward_const(tape, x));
    }
    return x;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (Dense& d : layers) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
    return out;
  }
  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (const Dense& d : layers) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
    return out;
  }
};

}  // namespace vdctr
