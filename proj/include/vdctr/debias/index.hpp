#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "vdctr/dataset/types.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/io/embeddings.hpp"
#include "vdctr/rng.hpp"

namespace vdctr::debias {

struct Candidate {
  std::int64_t item_id = 0;
  double sim = 0.0;
};

/// Similarity floor applied before turning top-K cosines into selection
/// probabilities.
inline constexpr double kSimilarityFloor = 1e-6;

/// Exact cosine search over S1 embeddings of non-displayed items, partitioned
/// by category. Every catalog item (displayed or not) can be an anchor.
class SimilarityIndex {
 public:
  SimilarityIndex() = default;

  SimilarityIndex(const io::EmbeddingTable& s1, const std::vector<data::Item>& items,
                  std::int64_t non_displayed_threshold) {
    std::unordered_map<std::uint64_t, std::size_t> row_of;
    for (std::size_t r = 0; r < s1.ids.size(); ++r) row_of[s1.ids[r]] = r;
    dim_ = s1.rows.cols();
    for (const auto& it : items) {
      auto found = row_of.find(static_cast<std::uint64_t>(it.item_id));
      if (found == row_of.end()) {
        throw MissingArtifactError("S1 embeddings do not cover item " + std::to_string(it.item_id));
      }
      auto row = s1.rows.row(found->second);
      anchors_[it.item_id] = AnchorInfo{it.category_id, std::vector<double>(row.begin(), row.end())};
      categories_[it.category_id];
      if (it.impressions < non_displayed_threshold) {
        auto& part = categories_[it.category_id];
        part.ids.push_back(it.item_id);
        part.rows.insert(part.rows.end(), row.begin(), row.end());
      }
    }
    for (const auto& [c, part] : categories_) {
      if (part.ids.empty()) empty_categories_.push_back(c);
    }
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [c, part] : categories_) n += part.ids.size();
    return n;
  }

  /// Categories with no non-displayed item; their anchors never get a positive.
  const std::vector<int>& empty_categories() const { return empty_categories_; }

  std::vector<std::int64_t> indexed_ids(int category) const {
    auto it = categories_.find(category);
    return it == categories_.end() ? std::vector<std::int64_t>{} : it->second.ids;
  }

  /// The K most similar indexed items in the anchor's category, excluding the
  /// anchor, sorted by similarity descending then item id ascending.
  std::vector<Candidate> top_k(std::int64_t anchor_id, std::size_t k) const {
    auto a = anchors_.find(anchor_id);
    if (a == anchors_.end()) throw std::out_of_range("unknown anchor " + std::to_string(anchor_id));
    auto part_it = categories_.find(a->second.category);
    std::vector<Candidate> out;
    if (part_it == categories_.end()) return out;
    const Partition& part = part_it->second;
    const auto& av = a->second.embedding;
    for (std::size_t i = 0; i < part.ids.size(); ++i) {
      if (part.ids[i] == anchor_id) continue;
      double s = 0.0;
      const double* r = &part.rows[i * dim_];
      for (std::size_t j = 0; j < dim_; ++j) s += av[j] * r[j];
      out.push_back(Candidate{part.ids[i], s});
    }
    auto better = [](const Candidate& x, const Candidate& y) {
      return x.sim != y.sim ? x.sim > y.sim : x.item_id < y.item_id;
    };
    if (out.size() > k) {
      std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), better);
      out.resize(k);
    } else {
      std::sort(out.begin(), out.end(), better);
    }
    return out;
  }

  int category_of(std::int64_t item_id) const { return anchors_.at(item_id).category; }

 private:
  struct AnchorInfo {
    int category;
    std::vector<double> embedding;
  };
  struct Partition {
    std::vector<std::int64_t> ids;
    std::vector<double> rows;
  };

  std::size_t dim_ = 0;
  std::unordered_map<std::int64_t, AnchorInfo> anchors_;
  std::map<int, Partition> categories_;
  std::vector<int> empty_categories_;
};

inline SimilarityIndex build_index(const io::EmbeddingTable& s1, const std::vector<data::Item>& items,
                                   std::int64_t non_displayed_threshold) {
  return SimilarityIndex(s1, items, non_displayed_threshold);
}

/// Selection probabilities over a candidate list: floor-clamped similarity,
/// normalized to sum to one.
inline std::vector<double> selection_probabilities(const std::vector<Candidate>& cands) {
  std::vector<double> w;
  double total = 0.0;
  for (const auto& c : cands) {
    w.push_back(std::max(c.sim, kSimilarityFloor));
    total += w.back();
  }
  for (double& x : w) x /= total;
  return w;
}

/// Draws a debias positive for `anchor_id` from its top-K non-displayed
/// look-alikes. Empty when the category has no candidate.
inline std::optional<Candidate> mine_positive(std::int64_t anchor_id, const SimilarityIndex& index,
                                              std::size_t k, Rng& rng) {
  const auto cands = index.top_k(anchor_id, k);
  if (cands.empty()) return std::nullopt;
  const auto probs = selection_probabilities(cands);
  double u = uniform01(rng);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (u < probs[i]) return cands[i];
    u -= probs[i];
  }
  return cands.back();
}

}  // namespace vdctr::debias
