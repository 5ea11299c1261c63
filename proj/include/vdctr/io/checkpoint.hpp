#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vdctr/io/binary.hpp"
#include "vdctr/numerics/tensor.hpp"

// "CTRL" named-tensor container:
//   magic "CTRL" | version u32 | count u32 |
//   per tensor: name_len u16, name bytes, rank u8, dims u32..., f64 payload.
// All integers and floats little-endian.

namespace vdctr::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  write_magic(os, "CTRL");
  write_le<std::uint32_t>(os, kCheckpointVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    if (nt.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("tensor name too long: " + nt.name.substr(0, 32));
    }
    const Shape& shape = nt.tensor.shape();
    if (shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw FormatError("tensor rank too large");
    }
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : nt.tensor.data()) write_le<double>(os, v);
  }
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  expect_magic(is, "CTRL");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = read_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw FormatError("truncated tensor name");
    const auto rank = read_le<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = read_le<std::uint32_t>(is);
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = read_le<double>(is);
    out.push_back(NamedTensor{std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

inline std::string checkpoint_bytes(const std::vector<NamedTensor>& tensors) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, tensors);
  return os.str();
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<NamedTensor>& tensors) {
  write_file(path, checkpoint_bytes(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::istringstream is(read_file(path), std::ios::binary);
  return read_checkpoint(is);
}

// Metadata rides inside the container as rank-0 tensors whose names carry
// "meta:<key>=<value>"; the payload is unused (0.0).
inline NamedTensor meta_entry(const std::string& key, const std::string& value) {
  return NamedTensor{"meta:" + key + "=" + value, Tensor::scalar(0.0)};
}

inline std::map<std::string, std::string> read_meta(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, std::string> meta;
  for (const NamedTensor& nt : tensors) {
    if (nt.name.rfind("meta:", 0) != 0) continue;
    const auto eq = nt.name.find('=');
    if (eq == std::string::npos) continue;
    meta[nt.name.substr(5, eq - 5)] = nt.name.substr(eq + 1);
  }
  return meta;
}

inline const Tensor& find_tensor(const std::vector<NamedTensor>& tensors,
                                 const std::string& name) {
  for (const NamedTensor& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

}  // namespace vdctr::io
