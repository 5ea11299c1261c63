#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdctr/errors.hpp"
#include "vdctr/numerics/tensor.hpp"

namespace vdctr {

/// A named trainable tensor. Frozen parameters may be read on a tape, but a
/// gradient reaching one during backward is an error.
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

struct ParamGrad {
  Parameter* param = nullptr;
  Tensor grad;
};

/// Parameter gradients in first-registration order.
using Gradients = std::vector<ParamGrad>;

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardContext {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& grad_output;
  // Null where the input does not require a gradient.
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
/// so every node's inputs precede it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
    return Var(this, nodes_.size() - 1);
  }

  Var param(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, nullptr, &p, true});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    if (!value.all_finite()) {
      throw NumericalError("non-finite value produced on tape");
    }
    bool needs = false;
    for (std::size_t in : inputs) needs = needs || nodes_[in].requires_grad;
    nodes_.push_back(Node{std::move(value), std::move(inputs),
                          needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Runs reverse mode from a scalar loss. Returns one gradient per registered
  /// parameter (merged when a parameter was registered more than once); the
  /// tape is consumed afterwards.
  Gradients backward(Var loss) {
    if (consumed_) throw std::logic_error("backward on a consumed tape");
    if (&loss.tape() != this) throw std::logic_error("loss is not on this tape");
    const Tensor& lv = nodes_[loss.id()].value;
    if (lv.size() != 1) {
      throw DimensionError("backward requires a scalar loss, got " +
                           shape_string(lv.shape()));
    }
    consumed_ = true;

    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    grads[loss.id()] = Tensor(lv.shape(), 1.0);
    has[loss.id()] = true;

    std::vector<const Tensor*> in_vals;
    std::vector<Tensor*> in_grads;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!has[i] || !node.backward) continue;
      in_vals.clear();
      in_grads.clear();
      for (std::size_t in : node.inputs) {
        in_vals.push_back(&nodes_[in].value);
        if (nodes_[in].requires_grad) {
          if (!has[in]) {
            grads[in] = Tensor::zeros_like(nodes_[in].value);
            has[in] = true;
          }
          in_grads.push_back(&grads[in]);
        } else {
          in_grads.push_back(nullptr);
        }
      }
      node.backward(BackwardContext{in_vals, node.value, grads[i], in_grads});
    }

    Gradients out;
    std::unordered_map<const Parameter*, std::size_t> slot;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Parameter* p = nodes_[i].param;
      if (!p) continue;
      if (p->frozen && has[i]) {
        throw FrozenParameterError("gradient reached frozen parameter '" +
                                   p->name + "'");
      }
      if (p->frozen) continue;
      auto [it, fresh] = slot.emplace(p, out.size());
      if (fresh) out.push_back(ParamGrad{p, Tensor::zeros_like(p->value)});
      if (has[i]) {
        Tensor& g = out[it->second].grad;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += grads[i][k];
      }
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace vdctr
