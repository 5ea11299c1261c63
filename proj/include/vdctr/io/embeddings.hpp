#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "vdctr/io/binary.hpp"
#include "vdctr/numerics/tensor.hpp"

// "VEMB" embedding file:
//   magic "VEMB" | version u32 | count u32 | dim u32 | ids u64[count] |
//   rows f32[count * dim], little-endian.

namespace vdctr::io {

inline constexpr std::uint32_t kEmbeddingVersion = 1;

struct EmbeddingTable {
  std::vector<std::uint64_t> ids;
  Tensor rows;  // [count x dim]
};

inline std::string embedding_bytes(const EmbeddingTable& table) {
  const std::size_t count = table.ids.size();
  const std::size_t dim = count == 0 ? (table.rows.rank() == 2 ? table.rows.cols() : 0)
                                     : table.rows.cols();
  if (count != 0 && table.rows.rows() != count) {
    throw DimensionError("embedding table: ids and rows disagree");
  }
  std::ostringstream os(std::ios::binary);
  write_magic(os, "VEMB");
  write_le<std::uint32_t>(os, kEmbeddingVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(count));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dim));
  for (std::uint64_t id : table.ids) write_le<std::uint64_t>(os, id);
  for (std::size_t i = 0; i < count * dim; ++i) {
    write_le<float>(os, static_cast<float>(table.rows[i]));
  }
  return os.str();
}

inline EmbeddingTable parse_embeddings(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  expect_magic(is, "VEMB");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kEmbeddingVersion) {
    throw FormatError("unsupported embedding version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(is);
  const auto dim = read_le<std::uint32_t>(is);
  EmbeddingTable t;
  t.ids.resize(count);
  for (auto& id : t.ids) id = read_le<std::uint64_t>(is);
  std::vector<double> data(static_cast<std::size_t>(count) * dim);
  for (double& v : data) v = static_cast<double>(read_le<float>(is));
  t.rows = Tensor(Shape{count, dim}, std::move(data));
  return t;
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  write_file(path, embedding_bytes(table));
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(read_file(path));
}

}  // namespace vdctr::io
