#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace clrm {

/// One named array of little-endian float64 values.
struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t element_count() const;
};

/// Binary container shared by realization sets, simulator dumps and checkpoints.
///
/// Layout (all integers and floats little-endian):
///   magic     8 bytes  "CLRMBIN1"
///   u32       attribute count, then per attribute: u16 key length, key bytes, i64 value
///   u32       tensor count, then per tensor: u16 name length, name bytes,
///             u32 rank, u64 dims[rank], f64 data[prod(dims)]
struct BinaryContainer {
  std::map<std::string, std::int64_t> attributes;
  std::vector<TensorRecord> tensors;

  const TensorRecord& tensor(const std::string& name) const;
  const TensorRecord* find(const std::string& name) const;
  std::int64_t attribute(const std::string& key) const;
};

void write_container(const std::filesystem::path& path, const BinaryContainer& container);
BinaryContainer read_container(const std::filesystem::path& path);

}  // namespace clrm
