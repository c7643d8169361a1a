#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief key = value configuration files.
 *
 * One setting per line; '#' starts a comment line; keys are dotted names
 * such as backend.url. Later lines override earlier ones.
 */

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "rrm/errors.hpp"
#include "rrm/hash.hpp"
#include "rrm/text.hpp"

namespace rrm {

class Config {
 public:
  static Config parse(std::string_view body, std::string_view origin = "<config>") {
    Config c;
    std::size_t n = 0;
    for (const auto& raw : text::split_lines(body)) {
      ++n;
      const auto line = text::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw Error(ErrorCode::ParseFailure, std::string(origin) + ":" + std::to_string(n) + ": expected key = value");
      const auto key = text::trim(line.substr(0, eq));
      if (key.empty())
        throw Error(ErrorCode::ParseFailure, std::string(origin) + ":" + std::to_string(n) + ": empty key");
      c.values_[std::string(key)] = std::string(text::trim(line.substr(eq + 1)));
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ReadFailure, path.string());
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(body, path.string());
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_or(const std::string& key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
  }

  template <typename T>
  T number_or(const std::string& key, T fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    T out{};
    const char* end = v->data() + v->size();
    auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end)
      throw Error(ErrorCode::ParseFailure, key + ": not a number: " + *v);
    return out;
  }

  bool bool_or(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    const auto s = text::lower(*v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw Error(ErrorCode::ParseFailure, key + ": not a boolean: " + *v);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Digest of the sorted effective settings.
  std::string digest_hex() const {
    std::string flat;
    for (const auto& [k, v] : values_) flat.append(k).append("=").append(v).push_back('\n');
    return digest(flat);
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rrm
