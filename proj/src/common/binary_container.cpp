#include "clrm/common/binary_container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "clrm/common/errors.hpp"

namespace clrm {
namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'M', 'B', 'I', 'N', '1'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw LoadError("truncated container: " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  if (s.size() > 0xFFFF) throw ArgumentError("container key too long: " + s.substr(0, 32));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = get<std::uint16_t>(in, path);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw LoadError("truncated container: " + path.string());
  return s;
}

}  // namespace

std::uint64_t TensorRecord::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
}

const TensorRecord* BinaryContainer::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TensorRecord& BinaryContainer::tensor(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw LoadError("container has no tensor named '" + name + "'");
}

std::int64_t BinaryContainer::attribute(const std::string& key) const {
  const auto it = attributes.find(key);
  if (it == attributes.end()) throw LoadError("container has no attribute '" + key + "'");
  return it->second;
}

void write_container(const std::filesystem::path& path, const BinaryContainer& container) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(container.attributes.size()));
  for (const auto& [key, value] : container.attributes) {
    put_string(out, key);
    put<std::int64_t>(out, value);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& t : container.tensors) {
    if (t.element_count() != t.data.size()) {
      throw ArgumentError("tensor '" + t.name + "' dims do not match its data length");
    }
    put_string(out, t.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    } else {
      for (double v : t.data) put<double>(out, v);
    }
  }
  if (!out) throw LoadError("write failed: " + path.string());
}

BinaryContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open container: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError("not a CLRMBIN1 container: " + path.string());
  }
  BinaryContainer c;
  const auto n_attr = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < n_attr; ++i) {
    auto key = get_string(in, path);
    c.attributes[key] = get<std::int64_t>(in, path);
  }
  const auto n_tensors = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    TensorRecord t;
    t.name = get_string(in, path);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 16) throw LoadError("implausible tensor rank in " + path.string());
    t.dims.resize(rank);
    for (auto& d : t.dims) d = get<std::uint64_t>(in, path);
    t.data.resize(t.element_count());
    if constexpr (std::endian::native == std::endian::little) {
      const auto bytes = static_cast<std::streamsize>(t.data.size() * sizeof(double));
      if (bytes > 0 && !in.read(reinterpret_cast<char*>(t.data.data()), bytes)) {
        throw LoadError("truncated tensor data in " + path.string());
      }
    } else {
      for (auto& v : t.data) v = get<double>(in, path);
    }
    c.tensors.push_back(std::move(t));
  }
  return c;
}

}  // namespace clrm
