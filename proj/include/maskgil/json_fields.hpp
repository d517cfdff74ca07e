#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "maskgil/errors.hpp"

namespace maskgil {

// Strict reader for one JSON object section: every key must be consumed
// through get(), and finish() rejects anything left over.
class JsonFields {
 public:
  JsonFields(const nlohmann::ordered_json& object, std::string section)
      : object_(object), section_(std::move(section)) {
    if (!object_.is_object()) throw ConfigError(section_ + ": expected a JSON object");
  }

  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(section_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::ordered_json& object_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace maskgil
