#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

namespace clrm {

using Json = nlohmann::json;

/// Throws ConfigError naming the first key of `object` not in `allowed`.
void require_known_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                        std::string_view context);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

/// Reads `key` into `out` when present, leaving the default otherwise.
template <class T>
void read_optional(const Json& object, const char* key, T& out) {
  if (const auto it = object.find(key); it != object.end()) out = it->template get<T>();
}

}  // namespace clrm
