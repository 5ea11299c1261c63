#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "vdctr/errors.hpp"
#include "vdctr/numerics/tape.hpp"
#include "vdctr/numerics/tensor.hpp"

// Differentiable operations on tape variables. Each op computes its forward
// value eagerly and records a closure that accumulates input gradients.

namespace vdctr::ops {

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("vars on different tapes");
  return a.tape();
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df_from_xy) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape().record(std::move(out), {x.id()}, [df_from_xy](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0]) {
      const Tensor& xv = *c.inputs[0];
      for (std::size_t i = 0; i < xv.size(); ++i) {
        (*gx)[i] += c.grad_output[i] * df_from_xy(xv[i], c.output[i]);
      }
    }
  });
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank(av, 2, "matmul");
  detail::require_rank(bv, 2, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions " + shape_string(av.shape()) +
                         " x " + shape_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* o = &out.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.at(i, p);
      if (aip == 0.0) continue;
      const double* br = &bv.at(p, 0);
      for (std::size_t j = 0; j < n; ++j) o[j] += aip * br[j];
    }
  }
  return tape.record(std::move(out), {a.id(), b.id()}, [m, k, n](const BackwardContext& c) {
    const Tensor& av = *c.inputs[0];
    const Tensor& bv = *c.inputs[1];
    const Tensor& g = c.grad_output;
    if (Tensor* ga = c.input_grads[0]) {
      std::vector<double> bt(n * k);  // B transposed, so the inner loop is an axpy
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv.at(p, j);
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = &g.at(i, 0);
        double* gar = &ga->at(i, 0);
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = gr[j];
          if (gij == 0.0) continue;
          const double* btr = &bt[j * k];
          for (std::size_t p = 0; p < k; ++p) gar[p] += gij * btr[p];
        }
      }
    }
    if (Tensor* gb = c.input_grads[1]) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = &g.at(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av.at(i, p);
          if (aip == 0.0) continue;
          double* gbr = &gb->at(p, 0);
          for (std::size_t j = 0; j < n; ++j) gbr[j] += aip * gr[j];
        }
      }
    }
  });
}

inline Var transpose(const Var& a) {
  const Tensor& av = a.value();
  detail::require_rank(av, 2, "transpose");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  return a.tape().record(std::move(out), {a.id()}, [m, n](const BackwardContext& c) {
    if (Tensor* ga = c.input_grads[0]) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga->at(i, j) += c.grad_output.at(j, i);
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.record(std::move(out), {a.id(), b.id()}, [](const BackwardContext& c) {
    for (Tensor* g : c.input_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.grad_output[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape.record(std::move(out), {a.id(), b.id()}, [](const BackwardContext& c) {
    if (Tensor* ga = c.input_grads[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += c.grad_output[i];
    if (Tensor* gb = c.input_grads[1])
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= c.grad_output[i];
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.record(std::move(out), {a.id(), b.id()}, [](const BackwardContext& c) {
    const Tensor& av = *c.inputs[0];
    const Tensor& bv = *c.inputs[1];
    if (Tensor* ga = c.input_grads[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += c.grad_output[i] * bv[i];
    if (Tensor* gb = c.input_grads[1])
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += c.grad_output[i] * av[i];
  });
}

/// x[m x n] + bias[n], broadcast over rows. Also accepts x of rank 1.
inline Var add_row_bias(const Var& x, const Var& bias) {
  Tape& tape = detail::same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  detail::require_rank(bv, 1, "add_row_bias");
  if (xv.rank() == 0 || xv.cols() != bv.size()) {
    throw DimensionError("add_row_bias: " + shape_string(xv.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  Tensor out = xv;
  const std::size_t rows = xv.rows(), n = xv.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) += bv[j];
  return tape.record(std::move(out), {x.id(), bias.id()}, [rows, n](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0])
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += c.grad_output[i];
    if (Tensor* gb = c.input_grads[1])
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += c.grad_output.at(r, j);
  });
}

/// col[m x 1] (or [m]) scales each row of x[m x n].
inline Var mul_col_broadcast(const Var& col, const Var& x) {
  Tape& tape = detail::same_tape(col, x);
  const Tensor& cv = col.value();
  const Tensor& xv = x.value();
  detail::require_rank(xv, 2, "mul_col_broadcast");
  if (cv.size() != xv.rows()) {
    throw DimensionError("mul_col_broadcast: " + shape_string(cv.shape()) +
                         " * " + shape_string(xv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out = xv;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) *= cv[r];
  return tape.record(std::move(out), {col.id(), x.id()}, [m, n](const BackwardContext& c) {
    const Tensor& cv = *c.inputs[0];
    const Tensor& xv = *c.inputs[1];
    const Tensor& g = c.grad_output;
    if (Tensor* gc = c.input_grads[0])
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) (*gc)[r] += g.at(r, j) * xv.at(r, j);
    if (Tensor* gx = c.input_grads[1])
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) gx->at(r, j) += g.at(r, j) * cv[r];
  });
}

/// scale * x + shift, elementwise.
inline Var affine(const Var& x, double scale, double shift = 0.0) {
  return detail::unary(
      x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

inline Var scale(const Var& x, double s) { return affine(x, s, 0.0); }

inline Var relu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

/// Largest double below one; sigmoid outputs are clamped to
/// [1 - kSigmoidUpper, kSigmoidUpper] so they stay strictly inside (0, 1).
inline const double kSigmoidUpper = std::nextafter(1.0, 0.0);

inline double sigmoid_value(double v) {
  const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                            : std::exp(v) / (1.0 + std::exp(v));
  return std::clamp(y, 1.0 - kSigmoidUpper, kSigmoidUpper);
}

inline Var sigmoid(const Var& x) {
  return detail::unary(
      x, [](double v) { return sigmoid_value(v); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericalError("log of non-positive value");
  }
  return detail::unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x.id()}, [](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0]) {
      const double g = c.grad_output[0];
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g;
    }
  });
}

inline Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw NumericalError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

/// Normalizes a vector, or each row of a matrix, to unit L2 norm. Throws
/// DegenerateVectorError naming the row if a norm is at or below kNormFloor.
inline Var l2_normalize(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw DimensionError("l2_normalize: expected rank 1 or 2, got " +
                         shape_string(xv.shape()));
  }
  const std::size_t rows = xv.rows(), n = xv.cols();
  Tensor out = xv;
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double nr = l2_norm(xv.row(r));
    if (!(nr > kNormFloor)) {
      throw DegenerateVectorError("l2_normalize: row " + std::to_string(r) +
                                  " has norm below floor");
    }
    norms[r] = nr;
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) /= nr;
  }
  return x.tape().record(std::move(out), {x.id()},
                         [rows, n, norms = std::move(norms)](const BackwardContext& c) {
    Tensor* gx = c.input_grads[0];
    if (!gx) return;
    const Tensor& y = c.output;
    const Tensor& g = c.grad_output;
    for (std::size_t r = 0; r < rows; ++r) {
      const double yg = dot(y.row(r), g.row(r));
      for (std::size_t j = 0; j < n; ++j) {
        gx->at(r, j) += (g.at(r, j) - y.at(r, j) * yg) / norms[r];
      }
    }
  });
}

/// Inner product of two rank-1 vectors.
inline Var dot(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  detail::require_rank(a.value(), 1, "dot");
  require_same_shape(a.value(), b.value(), "dot");
  const double s = vdctr::dot(a.value().data(), b.value().data());
  return tape.record(Tensor::scalar(s), {a.id(), b.id()}, [](const BackwardContext& c) {
    const double g = c.grad_output[0];
    if (Tensor* ga = c.input_grads[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g * (*c.inputs[1])[i];
    if (Tensor* gb = c.input_grads[1])
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g * (*c.inputs[0])[i];
  });
}

/// Per-row inner products of two [m x n] matrices, giving [m].
inline Var row_dots(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  detail::require_rank(a.value(), 2, "row_dots");
  require_same_shape(a.value(), b.value(), "row_dots");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) out[r] = vdctr::dot(a.value().row(r), b.value().row(r));
  return tape.record(std::move(out), {a.id(), b.id()}, [m, n](const BackwardContext& c) {
    const Tensor& av = *c.inputs[0];
    const Tensor& bv = *c.inputs[1];
    for (int side = 0; side < 2; ++side) {
      Tensor* gt = c.input_grads[side];
      if (!gt) continue;
      const Tensor& other = side == 0 ? bv : av;
      for (std::size_t r = 0; r < m; ++r) {
        const double g = c.grad_output[r];
        for (std::size_t j = 0; j < n; ++j) gt->at(r, j) += g * other.at(r, j);
      }
    }
  });
}

/// Column concatenation of [m x p] and [m x q]; for two vectors, plain
/// concatenation.
inline Var concat_cols(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || (av.rank() != 1 && av.rank() != 2) ||
      av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: " + shape_string(av.shape()) + " | " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), p = av.cols(), q = bv.cols();
  Shape shape = av.rank() == 1 ? Shape{p + q} : Shape{m, p + q};
  Tensor out(shape);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < p; ++j) out[r * (p + q) + j] = av.at(r, j);
    for (std::size_t j = 0; j < q; ++j) out[r * (p + q) + p + j] = bv.at(r, j);
  }
  return tape.record(std::move(out), {a.id(), b.id()}, [m, p, q](const BackwardContext& c) {
    const Tensor& g = c.grad_output;
    if (Tensor* ga = c.input_grads[0])
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < p; ++j) (*ga)[r * p + j] += g[r * (p + q) + j];
    if (Tensor* gb = c.input_grads[1])
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < q; ++j) (*gb)[r * q + j] += g[r * (p + q) + p + j];
  });
}

/// Selects rows of x[N x D] (or elements of a vector) by index; repeated
/// indices accumulate gradient.
inline Var gather_rows(const Var& x, std::vector<std::size_t> idx) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw DimensionError("gather_rows: expected rank 1 or 2");
  }
  const std::size_t n_src = xv.rank() == 1 ? xv.size() : xv.rows();
  const std::size_t width = xv.rank() == 1 ? 1 : xv.cols();
  for (std::size_t i : idx) {
    if (i >= n_src) {
      throw DimensionError("gather_rows: index " + std::to_string(i) +
                           " out of range " + std::to_string(n_src));
    }
  }
  Shape shape = xv.rank() == 1 ? Shape{idx.size()} : Shape{idx.size(), width};
  Tensor out(shape);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = xv[idx[r] * width + j];
  return x.tape().record(std::move(out), {x.id()},
                         [width, idx = std::move(idx)](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0]) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < width; ++j)
          (*gx)[idx[r] * width + j] += c.grad_output[r * width + j];
    }
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x.id()}, [](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0])
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += c.grad_output[i];
  });
}

/// Packs scalar vars into a vector.
inline Var stack(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw DimensionError("stack of zero scalars");
  Tape& tape = scalars.front().tape();
  std::vector<double> values;
  std::vector<std::size_t> ids;
  for (const Var& s : scalars) {
    if (&s.tape() != &tape) throw std::logic_error("vars on different tapes");
    if (s.value().size() != 1) throw DimensionError("stack expects scalars");
    values.push_back(s.value()[0]);
    ids.push_back(s.id());
  }
  return tape.record(Tensor::vector(std::move(values)), std::move(ids),
                     [](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.input_grads.size(); ++i)
      if (Tensor* g = c.input_grads[i]) (*g)[0] += c.grad_output[i];
  });
}

inline Var index(const Var& x, std::size_t i) {
  if (i >= x.value().size()) throw DimensionError("index out of range");
  return x.tape().record(Tensor::scalar(x.value()[i]), {x.id()}, [i](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0]) (*gx)[i] += c.grad_output[0];
  });
}

inline Var logsumexp(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.size() == 0) throw NumericalError("logsumexp of empty tensor");
  const double mx = *std::max_element(xv.data().begin(), xv.data().end());
  double s = 0.0;
  for (double v : xv.data()) s += std::exp(v - mx);
  return x.tape().record(Tensor::scalar(mx + std::log(s)), {x.id()},
                         [](const BackwardContext& c) {
    if (Tensor* gx = c.input_grads[0]) {
      const Tensor& xv = *c.inputs[0];
      const double lse = c.output[0];
      for (std::size_t i = 0; i < xv.size(); ++i)
        (*gx)[i] += c.grad_output[0] * std::exp(xv[i] - lse);
    }
  });
}

/// Row-wise softmax cross-entropy with the target in column 0:
/// loss[r] = logsumexp_{j : mask[r][j]} logits[r][j] - logits[r][0].
/// Column 0 always participates; an empty mask means "all columns".
inline Var masked_row_xent(const Var& logits, std::vector<char> mask = {}) {
  const Tensor& lv = logits.value();
  detail::require_rank(lv, 2, "masked_row_xent");
  const std::size_t m = lv.rows(), k = lv.cols();
  if (k == 0) throw DimensionError("masked_row_xent: no columns");
  if (mask.empty()) mask.assign(m * k, 1);
  if (mask.size() != m * k) throw DimensionError("masked_row_xent: mask size");
  for (std::size_t r = 0; r < m; ++r) mask[r * k] = 1;
  Tensor out(Shape{m});
  std::vector<double> lse(m);
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
      if (mask[r * k + j]) mx = std::max(mx, lv.at(r, j));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (mask[r * k + j]) s += std::exp(lv.at(r, j) - mx);
    lse[r] = mx + std::log(s);
    out[r] = lse[r] - lv.at(r, 0);
  }
  return logits.tape().record(
      std::move(out), {logits.id()},
      [m, k, mask = std::move(mask), lse = std::move(lse)](const BackwardContext& c) {
        Tensor* gl = c.input_grads[0];
        if (!gl) return;
        const Tensor& lv = *c.inputs[0];
        for (std::size_t r = 0; r < m; ++r) {
          const double g = c.grad_output[r];
          for (std::size_t j = 0; j < k; ++j) {
            if (!mask[r * k + j]) continue;
            gl->at(r, j) += g * std::exp(lv.at(r, j) - lse[r]);
          }
          gl->at(r, 0) -= g;
        }
      });
}

/// Elementwise binary cross-entropy of probabilities against {0,1} labels.
/// Probabilities must lie strictly inside (0, 1).
inline Var bce(const Var& y_hat, const std::vector<double>& labels) {
  const Tensor& pv = y_hat.value();
  if (pv.size() != labels.size()) {
    throw DimensionError("bce: " + std::to_string(pv.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  Tensor out(pv.shape());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = pv[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericalError("bce: prediction " + std::to_string(p) +
                           " outside (0,1)");
    }
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw NumericalError("bce: label must be 0 or 1");
    out[i] = y == 1.0 ? -std::log(p) : -std::log1p(-p);
  }
  return y_hat.tape().record(std::move(out), {y_hat.id()}, [labels](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0]) {
      const Tensor& pv = *c.inputs[0];
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double p = pv[i];
        (*g)[i] += c.grad_output[i] * (p - labels[i]) / (p * (1.0 - p));
      }
    }
  });
}

}  // namespace vdctr::ops
