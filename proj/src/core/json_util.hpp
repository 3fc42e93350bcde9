#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "core/errors.hpp"

namespace tempscale {

using json = nlohmann::json;

// Strict schema helpers: configs reject unknown keys so typos fail loudly
// instead of silently producing a differently-configured run.

inline json parse_json(const std::string& text, const std::string& context) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(context + ": invalid JSON");
  return j;
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

inline const json& require_key(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(context + ": missing key '" + std::string(key) + "'");
  return *it;
}

inline double get_num(const json& obj, const char* key, const std::string& context) {
  const json& v = require_key(obj, key, context);
  if (!v.is_number()) throw ConfigError(context + ": '" + key + "' must be a number");
  return v.get<double>();
}

inline double get_num_or(const json& obj, const char* key, double fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  return get_num(obj, key, context);
}

inline long long get_int(const json& obj, const char* key, const std::string& context) {
  const json& v = require_key(obj, key, context);
  if (!v.is_number_integer()) throw ConfigError(context + ": '" + key + "' must be an integer");
  return v.get<long long>();
}

inline long long get_int_or(const json& obj, const char* key, long long fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  return get_int(obj, key, context);
}

inline bool get_bool_or(const json& obj, const char* key, bool fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(context + ": '" + key + "' must be a boolean");
  return v.get<bool>();
}

inline std::string get_str(const json& obj, const char* key, const std::string& context) {
  const json& v = require_key(obj, key, context);
  if (!v.is_string()) throw ConfigError(context + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::string get_str_or(const json& obj, const char* key, const std::string& fallback,
                              const std::string& context) {
  if (!obj.contains(key)) return fallback;
  return get_str(obj, key, context);
}

}  // namespace tempscale
