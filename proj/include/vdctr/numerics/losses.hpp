#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vdctr/errors.hpp"
#include "vdctr/numerics/ops.hpp"

namespace vdctr {

/// Cosine similarity of two rank-1 vars.
inline Var cosine_sim(const Var& a, const Var& b) {
  return ops::dot(ops::l2_normalize(a), ops::l2_normalize(b));
}

/// -log( e^{g(a,p)/tau} / (e^{g(a,p)/tau} + sum_j e^{g(a,n_j)/tau}) ) with g the
/// cosine similarity. Reference form over rank-1 vectors; the batched variants
/// below compute the same quantity row by row.
inline Var contrastive_loss(const Var& anchor, const Var& positive,
                            const std::vector<Var>& negatives,
                            double temperature = 1.0) {
  if (negatives.empty()) {
    throw std::invalid_argument("contrastive_loss: at least one negative required");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("contrastive_loss: temperature must be positive");
  }
  std::vector<Var> logits;
  logits.reserve(negatives.size() + 1);
  logits.push_back(cosine_sim(anchor, positive));
  for (const Var& n : negatives) logits.push_back(cosine_sim(anchor, n));
  Var l = ops::scale(ops::stack(logits), 1.0 / temperature);
  return ops::sub(ops::logsumexp(l), ops::index(l, 0));
}

/// Per-anchor contrastive losses with in-batch negatives.
///
/// `anchors` and `positives` are [n x D], `batch` is [N x D], all rows already
/// unit-norm. Anchor r is batch row `anchor_rows[r]`; the negatives of anchor r
/// are every other batch row. With `include_self` the anchor's own batch row
/// also enters the denominator (the literal reading of a denominator summed
/// over the whole batch). Returns [n].
inline Var in_batch_contrastive_rows(const Var& anchors, const Var& positives,
                                     const Var& batch,
                                     const std::vector<std::size_t>& anchor_rows,
                                     bool include_self, double temperature) {
  const std::size_t n = anchors.value().rows();
  const std::size_t big_n = batch.value().rows();
  if (anchor_rows.size() != n) {
    throw DimensionError("in_batch_contrastive_rows: anchor_rows size");
  }
  if (big_n < 2) throw std::invalid_argument("in-batch contrastive loss needs a batch of at least 2");
  Var pos = ops::reshape(ops::row_dots(anchors, positives), Shape{n, 1});
  Var sims = ops::matmul(anchors, ops::transpose(batch));
  Var logits = ops::scale(ops::concat_cols(pos, sims), 1.0 / temperature);
  std::vector<char> mask(n * (big_n + 1), 1);
  if (!include_self) {
    for (std::size_t r = 0; r < n; ++r) {
      if (anchor_rows[r] >= big_n) throw DimensionError("anchor row out of range");
      mask[r * (big_n + 1) + 1 + anchor_rows[r]] = 0;
    }
  }
  return ops::masked_row_xent(logits, std::move(mask));
}

/// Per-anchor contrastive losses with explicitly sampled negatives.
///
/// `anchors`, `positives` are [n x D]; `pool` is [M x D]; `negative_rows` holds
/// n*m pool row indices, m per anchor. Rows must already be unit-norm.
inline Var sampled_contrastive_rows(const Var& anchors, const Var& positives,
                                    const Var& pool,
                                    const std::vector<std::size_t>& negative_rows,
                                    std::size_t negatives_per_anchor,
                                    double temperature) {
  const std::size_t n = anchors.value().rows();
  const std::size_t m = negatives_per_anchor;
  if (m == 0) throw std::invalid_argument("contrastive loss needs at least one negative");
  if (negative_rows.size() != n * m) {
    throw DimensionError("sampled_contrastive_rows: expected " +
                         std::to_string(n * m) + " negative indices");
  }
  std::vector<std::size_t> rep(n * m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) rep[r * m + j] = r;
  Var pos = ops::reshape(ops::row_dots(anchors, positives), Shape{n, 1});
  Var neg = ops::reshape(
      ops::row_dots(ops::gather_rows(anchors, std::move(rep)),
                    ops::gather_rows(pool, negative_rows)),
      Shape{n, m});
  Var logits = ops::scale(ops::concat_cols(pos, neg), 1.0 / temperature);
  return ops::masked_row_xent(logits);
}

/// Binary cross-entropy of one probability.
inline Var bce_loss(const Var& y_hat, double y) {
  return ops::bce(y_hat, {y});
}

}  // namespace vdctr
