#include "clrm/common/json_util.hpp"

#include <algorithm>
#include <fstream>

#include "clrm/common/errors.hpp"

namespace clrm {

void require_known_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                        std::string_view context) {
  if (!object.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& item : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError(std::string(context) + ": unknown key '" + item.key() + "'");
    }
  }
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open json: " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& value) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot open for writing: " + path.string());
  out << value.dump(2) << '\n';
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace clrm
