#pragma once

#include <functional>
#include <string>
#include <vector>

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "vdctr/ctr/training.hpp"
#include "vdctr/debias/network.hpp"
#include "vdctr/encoder/training.hpp"
#include "vdctr/numerics/layers.hpp"
#include "vdctr/numerics/losses.hpp"

// Gradient cases shared by the unit suite and the acceptance binary. Each
// case builds its own inputs from the seed and returns the worst relative
// error over its parameters.

namespace vdctr::testing {

struct GradCase {
  std::string name;
  bool composite = false;
  std::function<GradCheck(std::uint64_t)> run;
};

namespace detail {

// Reduces any tensor to a scalar through a fixed random projection so the
// upstream gradient is not uniform.
inline Var project(Tape& tape, const Var& v, std::uint64_t seed) {
  Rng rng = make_rng(seed, "projection");
  return ops::sum(ops::mul(v, tape.constant(random_tensor(v.value().shape(), rng))));
}

struct Inputs {
  std::vector<Parameter> ps;
  std::vector<Parameter*> ptrs() {
    std::vector<Parameter*> out;
    for (auto& p : ps) out.push_back(&p);
    return out;
  }
};

inline Inputs make_inputs(std::uint64_t seed, const std::vector<Shape>& shapes, double lo = -1.0,
                          double hi = 1.0) {
  Rng rng = make_rng(seed, "grad-inputs");
  Inputs in;
  in.ps.reserve(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    in.ps.push_back(Parameter{"x" + std::to_string(i), random_tensor(shapes[i], rng, lo, hi)});
  }
  return in;
}

using UnaryOp = std::function<Var(Tape&, std::vector<Var>&)>;

inline GradCase op_case(const std::string& name, std::vector<Shape> shapes, UnaryOp op, double lo = -1.0,
                        double hi = 1.0) {
  return {name, false, [=](std::uint64_t seed) {
            auto in = make_inputs(seed, shapes, lo, hi);
            return grad_check(in.ptrs(), [&](Tape& tape) {
              std::vector<Var> vs;
              for (auto& p : in.ps) vs.push_back(tape.param(p));
              return project(tape, op(tape, vs), seed);
            });
          }};
}

inline GradCheck fuse_case(std::uint64_t seed, debias::GateMode mode) {
  debias::DebiasConfig cfg;
  cfg.hidden = {6, 3, 6};
  cfg.gate = mode;
  cfg.gate_bias = true;
  cfg.gate_bias_init = 0.4;
  debias::DebiasModel model(4, cfg, seed);
  randomize_biases(model.parameters(), seed);
  Rng rng = make_rng(seed, "fuse-inputs");
  Parameter v{"v_s2", random_tensor(Shape{3, 4}, rng)};
  auto ps = model.parameters();
  ps.push_back(&v);
  return grad_check(ps, [&](Tape& tape) {
    Var x = tape.param(v);
    return project(tape, model.fuse(tape, x, model.forward(tape, x)), seed);
  });
}

}  // namespace detail

inline std::vector<GradCase> op_cases() {
  using detail::op_case;
  using V = std::vector<Var>;
  return {
      op_case("matmul", {{3, 4}, {4, 5}}, [](Tape&, V& v) { return ops::matmul(v[0], v[1]); }),
      op_case("transpose", {{3, 4}}, [](Tape&, V& v) { return ops::transpose(v[0]); }),
      op_case("add", {{3, 4}, {3, 4}}, [](Tape&, V& v) { return ops::add(v[0], v[1]); }),
      op_case("sub", {{3, 4}, {3, 4}}, [](Tape&, V& v) { return ops::sub(v[0], v[1]); }),
      op_case("mul", {{3, 4}, {3, 4}}, [](Tape&, V& v) { return ops::mul(v[0], v[1]); }),
      op_case("add_row_bias", {{3, 4}, {4}}, [](Tape&, V& v) { return ops::add_row_bias(v[0], v[1]); }),
      op_case("mul_col_broadcast", {{3, 1}, {3, 4}},
              [](Tape&, V& v) { return ops::mul_col_broadcast(v[0], v[1]); }),
      op_case("affine", {{5}}, [](Tape&, V& v) { return ops::affine(v[0], -1.7, 0.3); }),
      op_case("relu", {{4, 5}}, [](Tape&, V& v) { return ops::relu(v[0]); }),
      op_case("tanh", {{4, 5}}, [](Tape&, V& v) { return ops::tanh(v[0]); }),
      op_case("sigmoid", {{4, 5}}, [](Tape&, V& v) { return ops::sigmoid(v[0]); }),
      op_case("exp", {{6}}, [](Tape&, V& v) { return ops::exp(v[0]); }),
      op_case("log", {{6}}, [](Tape&, V& v) { return ops::log(v[0]); }, 0.3, 2.0),
      op_case("sum", {{3, 4}}, [](Tape&, V& v) { return ops::scale(ops::sum(ops::mul(v[0], v[0])), 0.5); }),
      op_case("mean", {{3, 4}}, [](Tape&, V& v) { return ops::mean(ops::mul(v[0], v[0])); }),
      op_case("l2_normalize_vector", {{6}}, [](Tape&, V& v) { return ops::l2_normalize(v[0]); }),
      op_case("l2_normalize_rows", {{4, 6}}, [](Tape&, V& v) { return ops::l2_normalize(v[0]); }),
      op_case("dot", {{6}, {6}}, [](Tape&, V& v) { return ops::mul(ops::dot(v[0], v[1]), ops::dot(v[0], v[1])); }),
      op_case("row_dots", {{4, 5}, {4, 5}}, [](Tape&, V& v) { return ops::row_dots(v[0], v[1]); }),
      op_case("concat_cols", {{3, 2}, {3, 4}}, [](Tape&, V& v) { return ops::concat_cols(v[0], v[1]); }),
      op_case("gather_rows", {{5, 3}},
              [](Tape&, V& v) { return ops::gather_rows(v[0], {4, 0, 4, 2, 4}); }),
      op_case("reshape", {{3, 4}}, [](Tape&, V& v) { return ops::reshape(v[0], Shape{2, 6}); }),
      op_case("stack_index", {{4}},
              [](Tape&, V& v) {
                return ops::stack({ops::index(v[0], 3), ops::index(v[0], 1), ops::index(v[0], 3)});
              }),
      op_case("logsumexp", {{7}}, [](Tape&, V& v) { return ops::logsumexp(ops::scale(v[0], 3.0)); }),
      op_case("masked_row_xent", {{3, 5}},
              [](Tape&, V& v) {
                return ops::masked_row_xent(v[0], {1, 1, 0, 1, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1});
              }),
      op_case("bce", {{6}},
              [](Tape&, V& v) { return ops::bce(ops::sigmoid(ops::scale(v[0], 2.0)), {1, 0, 0, 1, 1, 0}); }),
      op_case("cosine_sim", {{5}, {5}}, [](Tape&, V& v) { return cosine_sim(v[0], v[1]); }),
      {"dense_mlp", false, [](std::uint64_t seed) {
         Rng rng = make_rng(seed, "mlp");
         Mlp mlp("m", {4, 5, 3}, {Activation::kTanh, Activation::kRelu}, rng);
         Parameter x{"x", random_tensor(Shape{3, 4}, rng)};
         auto ps = mlp.parameters();
         randomize_biases(ps, seed);
         ps.push_back(&x);
         return grad_check(ps, [&](Tape& tape) { return detail::project(tape, mlp.forward(tape, tape.param(x)), seed); });
       }},
      {"gate_fuse_elementwise", false, [](std::uint64_t seed) { return detail::fuse_case(seed, debias::GateMode::kElementwise); }},
      {"gate_fuse_scalar", false, [](std::uint64_t seed) { return detail::fuse_case(seed, debias::GateMode::kScalar); }},
  };
}

/// Contrastive loss forms and the training objectives built from them.
inline std::vector<GradCase> loss_cases() {
  using detail::op_case;
  using V = std::vector<Var>;
  std::vector<GradCase> cases{
      op_case("contrastive_loss", {{6}, {6}, {6}, {6}, {6}},
              [](Tape&, V& v) { return contrastive_loss(v[0], v[1], {v[2], v[3], v[4]}, 0.7); }),
      op_case("in_batch_rows_exclusive", {{3, 5}, {3, 5}, {4, 5}},
              [](Tape&, V& v) {
                return in_batch_contrastive_rows(ops::l2_normalize(v[0]), ops::l2_normalize(v[1]),
                                                 ops::l2_normalize(v[2]), {0, 2, 3}, false, 0.5);
              }),
      op_case("in_batch_rows_literal", {{3, 5}, {3, 5}, {4, 5}},
              [](Tape&, V& v) {
                return in_batch_contrastive_rows(ops::l2_normalize(v[0]), ops::l2_normalize(v[1]),
                                                 ops::l2_normalize(v[2]), {0, 2, 3}, true, 1.0);
              }),
      op_case("sampled_rows", {{3, 5}, {3, 5}, {6, 5}},
              [](Tape&, V& v) {
                return sampled_contrastive_rows(ops::l2_normalize(v[0]), ops::l2_normalize(v[1]),
                                                ops::l2_normalize(v[2]), {0, 1, 5, 2, 2, 3}, 2, 0.8);
              }),
  };

  cases.push_back({"s1_objective", true, [](std::uint64_t seed) {
                     const auto ds = data::generate_dataset(tiny_generator(seed));
                     encoder::EncoderModel model(ds.items.front().image.size(), tiny_encoder(), seed);
                     randomize_biases(model.parameters(), seed);
                     std::vector<const std::vector<double>*> batch;
                     for (std::size_t i = 0; i < 6; ++i) batch.push_back(&ds.items[i * 7].image);
                     return grad_check(model.parameters(), [&](Tape& tape) {
                       Rng rng = make_rng(seed, "aug");
                       return encoder::s1_batch_loss(model, tape, batch, {}, rng);
                     });
                   }});
  cases.push_back({"s2_objective", true, [](std::uint64_t seed) {
                     const auto ds = data::generate_dataset(tiny_generator(seed));
                     encoder::EncoderModel model(ds.items.front().image.size(), tiny_encoder(), seed);
                     randomize_biases(model.parameters(), seed);
                     const encoder::NegativePool pool(ds.items);
                     std::vector<encoder::ClickPair> pairs;
                     for (std::size_t i = 0; i < 4; ++i) {
                       pairs.push_back({&ds.queries[i].image, static_cast<std::int64_t>(i * 11)});
                     }
                     return grad_check(model.parameters(), [&](Tape& tape) {
                       Rng rng = make_rng(seed, "neg");
                       return encoder::s2_batch_loss(model, tape, pairs, ds.items, pool, 3, rng);
                     });
                   }});
  cases.push_back({"classifier_objective", true, [](std::uint64_t seed) {
                     const auto ds = data::generate_dataset(tiny_generator(seed));
                     encoder::EncoderModel model(ds.items.front().image.size(), tiny_encoder(), seed);
                     randomize_biases(model.parameters(), seed);
                     model.add_category_head(ds.n_categories, seed);
                     randomize_biases(model.parameters(), seed + 1);
                     std::vector<const std::vector<double>*> batch;
                     std::vector<int> cats;
                     for (std::size_t i = 0; i < 5; ++i) {
                       batch.push_back(&ds.items[i * 13].image);
                       cats.push_back(ds.items[i * 13].category_id);
                     }
                     return grad_check(model.parameters(), [&](Tape& tape) {
                       return encoder::classifier_batch_loss(model, tape, batch, cats);
                     });
                   }});
  cases.push_back({"debias_objective", true, [](std::uint64_t seed) {
                     debias::DebiasConfig cfg;
                     cfg.hidden = {7, 3, 7};
                     cfg.gate_bias = true;
                     debias::DebiasModel model(5, cfg, seed);
                     randomize_biases(model.parameters(), seed);
                     Rng rng = make_rng(seed, "debias-inputs");
                     const Tensor batch = random_tensor(Shape{5, 5}, rng);
                     const Tensor pos = random_tensor(Shape{3, 5}, rng);
                     return grad_check(model.parameters(), [&](Tape& tape) {
                       return debias::debias_contrastive_loss(model, tape, tape.constant(batch), tape.constant(pos),
                                                              {0, -1, 2, 1, -1})
                           .loss;
                     });
                   }});
  cases.push_back({"ctr_objective_with_debias", true, [](std::uint64_t seed) {
                     const auto ds = data::generate_dataset(tiny_generator(seed));
                     encoder::EncoderModel enc(ds.items.front().image.size(), tiny_encoder(), seed);
                     randomize_biases(enc.parameters(), seed);
                     const auto train = ctr::make_samples(ds.traffic, ds.items, ds.queries);
                     ctr::CtrModel model(enc, ds.items, ds.queries, train, tiny_ctr(true, seed));
                     randomize_biases(model.parameters(), seed + 1);
                     std::vector<const ctr::TrainSample*> batch;
                     for (std::size_t i = 0; i < 8; ++i) batch.push_back(&train[(i * 5) % train.size()]);
                     batch.push_back(batch.front());
                     ctr::PositiveMap positives;
                     for (const auto* s : batch) {
                       if (s->item_id % 3 != 0) positives[s->item_id] = (s->item_id + 17) % 90;
                     }
                     return grad_check(model.parameters(),
                                       [&](Tape& tape) { return ctr::l_ctr(model, tape, batch, &positives).total; },
                                       1e-6, 24, seed);
                   }});
  return cases;
}

inline std::vector<GradCase> all_grad_cases() {
  auto out = op_cases();
  for (auto& c : loss_cases()) out.push_back(std::move(c));
  return out;
}

}  // namespace vdctr::testing
