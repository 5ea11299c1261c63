#pragma once

#include <vector>

#include "vdctr/ctr/training.hpp"
#include "vdctr/dataset/generator.hpp"
#include "vdctr/encoder/training.hpp"

namespace vdctr::testing {

/// A generator config small enough for unit tests.
inline data::GeneratorConfig tiny_generator(std::uint64_t seed) {
  data::GeneratorConfig g;
  g.n_items = 90;
  g.n_queries = 12;
  g.n_users = 6;
  g.n_categories = 3;
  g.d_latent = 6;
  g.d_obs = 8;
  g.d_nuisance = 2;
  g.slots_per_query = 5;
  g.sessions_per_query = 6;
  g.n_days = 2;
  g.relevance_gain = 6.0;
  g.click_bias = -3.0;
  g.seed = seed;
  return g;
}

inline encoder::EncoderConfig tiny_encoder() {
  encoder::EncoderConfig e;
  e.hidden = {8};
  e.dim = 4;
  return e;
}

inline ctr::CtrConfig tiny_ctr(bool debias, std::uint64_t seed) {
  ctr::CtrConfig c;
  c.tower = {6, 4};
  c.embed_width = 3;
  c.use_debias = debias;
  c.debias.hidden = {6, 3, 6};
  c.debias.gate_bias = true;
  c.debias.gate_bias_init = 0.5;
  c.epochs = 1;
  c.batch_size = 16;
  c.top_k = 4;
  c.seed = seed;
  return c;
}

}  // namespace vdctr::testing
