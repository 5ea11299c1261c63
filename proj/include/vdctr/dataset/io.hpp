#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdctr/dataset/types.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/io/binary.hpp"

// JSONL files for the generated data. Images are written as the float values
// they already are; latents only ever go to the truth sidecar.

namespace vdctr::data {

using nlohmann::json;

namespace detail {

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const json& r : rows) {
    out += r.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

}  // namespace detail

inline void write_catalog(const std::filesystem::path& path, const std::vector<Item>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const Item& it : items) {
    rows.push_back(json{{"item_id", it.item_id},
                        {"category_id", it.category_id},
                        {"popularity", it.popularity},
                        {"impressions", it.impressions},
                        {"clicks", it.clicks},
                        {"image", it.image}});
  }
  detail::write_jsonl(path, rows);
}

inline void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
  std::vector<json> rows;
  for (const Query& q : queries) {
    rows.push_back(json{{"query_id", q.query_id}, {"category_id", q.category_id}, {"image", q.image}});
  }
  detail::write_jsonl(path, rows);
}

inline void write_truth(const std::filesystem::path& path, const std::vector<Item>& items,
                        const std::vector<Query>& queries) {
  std::vector<json> rows;
  for (const Item& it : items) rows.push_back(json{{"item_id", it.item_id}, {"latent", it.latent_style}});
  for (const Query& q : queries) rows.push_back(json{{"query_id", q.query_id}, {"latent", q.latent_style}});
  detail::write_jsonl(path, rows);
}

inline void write_traffic(const std::filesystem::path& path, const std::vector<ClickEvent>& events) {
  std::vector<json> rows;
  rows.reserve(events.size());
  for (const ClickEvent& e : events) {
    rows.push_back(json{{"query_id", e.query_id}, {"user_id", e.user_id}, {"item_id", e.item_id},
                        {"position", e.position}, {"clicked", e.clicked},
                        {"context_id", e.context_id}, {"day", e.day}});
  }
  detail::write_jsonl(path, rows);
}

inline void write_relevance(const std::filesystem::path& path,
                            const std::vector<RelevanceAnnotation>& ann) {
  std::vector<json> rows;
  for (const RelevanceAnnotation& a : ann) {
    rows.push_back(json{{"query_id", a.query_id}, {"relevant", a.relevant_item_ids}});
  }
  detail::write_jsonl(path, rows);
}

inline std::vector<Item> read_catalog(const std::filesystem::path& path) {
  std::vector<Item> items;
  for (const json& r : detail::read_jsonl(path)) {
    Item it;
    it.item_id = r.at("item_id").get<std::int64_t>();
    it.category_id = r.at("category_id").get<int>();
    it.popularity = r.at("popularity").get<double>();
    it.impressions = r.at("impressions").get<std::int64_t>();
    it.clicks = r.at("clicks").get<std::int64_t>();
    it.image = r.at("image").get<std::vector<double>>();
    items.push_back(std::move(it));
  }
  return items;
}

inline std::vector<Query> read_queries(const std::filesystem::path& path) {
  std::vector<Query> out;
  for (const json& r : detail::read_jsonl(path)) {
    Query q;
    q.query_id = r.at("query_id").get<std::int64_t>();
    q.category_id = r.at("category_id").get<int>();
    q.image = r.at("image").get<std::vector<double>>();
    out.push_back(std::move(q));
  }
  return out;
}

/// Fills latent_style of items and queries from the truth sidecar.
inline void read_truth(const std::filesystem::path& path, std::vector<Item>& items,
                       std::vector<Query>& queries) {
  for (const json& r : detail::read_jsonl(path)) {
    auto latent = r.at("latent").get<std::vector<double>>();
    if (r.contains("item_id")) {
      items.at(r["item_id"].get<std::size_t>()).latent_style = std::move(latent);
    } else {
      queries.at(r.at("query_id").get<std::size_t>()).latent_style = std::move(latent);
    }
  }
}

inline std::vector<ClickEvent> read_traffic(const std::filesystem::path& path) {
  std::vector<ClickEvent> out;
  for (const json& r : detail::read_jsonl(path)) {
    out.push_back(ClickEvent{r.at("query_id").get<std::int64_t>(), r.at("user_id").get<std::int64_t>(),
                             r.at("item_id").get<std::int64_t>(), r.at("position").get<int>(),
                             r.at("clicked").get<int>(), r.at("context_id").get<std::int64_t>(),
                             r.value("day", 0)});
  }
  return out;
}

inline std::vector<RelevanceAnnotation> read_relevance(const std::filesystem::path& path) {
  std::vector<RelevanceAnnotation> out;
  for (const json& r : detail::read_jsonl(path)) {
    out.push_back(RelevanceAnnotation{r.at("query_id").get<std::int64_t>(),
                                      r.at("relevant").get<std::vector<std::int64_t>>()});
  }
  return out;
}

}  // namespace vdctr::data
