#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace vdctr::data {

struct Item {
  std::int64_t item_id = 0;
  int category_id = 0;
  std::vector<double> latent_style;  // hidden ground truth
  double popularity = 0.0;
  std::vector<double> image;  // observed vector, float-representable values
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
};

struct Query {
  std::int64_t query_id = 0;
  int category_id = 0;
  std::vector<double> latent_style;
  std::vector<double> image;
};

struct ClickEvent {
  std::int64_t query_id = 0;
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  int position = 0;
  int clicked = 0;
  std::int64_t context_id = 0;
  int day = 0;
};

struct RelevanceAnnotation {
  std::int64_t query_id = 0;
  std::vector<std::int64_t> relevant_item_ids;  // ascending
};

/// Everything one generator run produces. Item ids equal their index in
/// `items`, query ids their index in `queries`.
struct Dataset {
  std::vector<Item> items;
  std::vector<Query> queries;
  std::vector<ClickEvent> traffic;
  std::vector<RelevanceAnnotation> relevance;
  std::vector<std::int64_t> dropped_queries;  // no relevant item at threshold
  int n_days = 1;
  std::int64_t n_users = 0;
  std::int64_t n_contexts = 0;
  int n_categories = 0;
};

}  // namespace vdctr::data
