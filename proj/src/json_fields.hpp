// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/error.hpp"
#include "toaloc/geometry.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace toaloc::detail {

using Json = nlohmann::json;

inline std::string join_path(std::string_view base, std::string_view key) {
  if (base.empty()) return std::string(key);
  return std::string(base) + "." + std::string(key);
}

inline std::string index_path(std::string_view base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

[[noreturn]] inline void fail(std::string_view path, std::string_view message) {
  throw config_error(std::string(path.empty() ? "config" : path) + ": " + std::string(message));
}

/// Parse JSON text, reporting syntax errors by line and column.
inline Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw config_error(std::string(what) + ": line " + std::to_string(line) + ", column " + std::to_string(column) +
                       ": invalid JSON");
  }
}

inline double as_number(const Json& j, std::string_view path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

inline int as_int(const Json& j, std::string_view path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  const auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail(path, "out of range");
  return static_cast<int>(v);
}

inline Point as_point(const Json& j, std::string_view path) {
  if (!j.is_array() || j.empty()) fail(path, "expected an array of coordinates");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = as_number(j[i], index_path(path, i));
  return Point(std::move(v));
}

/// Object reader that rejects unknown keys once every expected key was read.
class Fields {
public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(std::string_view key) const { return join_path(path_, key); }

  const Json* find(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = j_.find(std::string(key));
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const Json& require(std::string_view key) {
    const Json* v = find(key);
    if (v == nullptr) fail(at(key), "required field missing");
    return *v;
  }

  double number(std::string_view key, double fallback) {
    const Json* v = find(key);
    return v ? as_number(*v, at(key)) : fallback;
  }

  std::optional<double> optional_number(std::string_view key) {
    const Json* v = find(key);
    if (v == nullptr) return std::nullopt;
    return as_number(*v, at(key));
  }

  int integer(std::string_view key, int fallback) {
    const Json* v = find(key);
    return v ? as_int(*v, at(key)) : fallback;
  }

  bool boolean(std::string_view key, bool fallback) {
    const Json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) fail(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(std::string_view key, std::string fallback) {
    const Json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Scenario object in the scenario.json layout; validated.
Scenario scenario_from_fields(Fields& f);

}  // namespace toaloc::detail
