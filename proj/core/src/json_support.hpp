#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include "json.hpp"
#include "popmf/error.hpp"
#include "popmf/model_spec.hpp"

namespace popmf::detail {

using Json = nlohmann::ordered_json;

Json parse_json(std::string_view text, std::string_view context);

/// Strict reader for one JSON object: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& object, std::string context);

  bool has(const std::string& key) const { return object_.contains(key); }
  const Json& at(const std::string& key);

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ValidationError(context_ + ": missing required key '" + key + "'");
    return convert<T>(key);
  }

  /// Marks a key as known without reading it.
  void skip(const std::string& key) { used_.insert(key); }

  /// Throws on the first key that was never read.
  void finish() const;

  const std::string& context() const noexcept { return context_; }

 private:
  template <class T>
  T convert(const std::string& key) {
    const Json& value = at(key);
    try {
      return value.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(context_ + ": key '" + key + "' has the wrong type (" + value.dump() + ")");
    }
  }

  const Json& object_;
  std::string context_;
  std::set<std::string> used_;
};

std::filesystem::path resolve_path(const std::filesystem::path& p, const std::filesystem::path& base_dir);

MatrixSpec matrix_from_json(const Json& j, const std::filesystem::path& base_dir, const std::string& context);
Json matrix_to_json(const MatrixSpec& m);

ModelSpec model_spec_from_json(const Json& j, const std::filesystem::path& base_dir);
Json model_spec_to_json(const ModelSpec& spec);

}  // namespace popmf::detail
