#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace fmx {

// Plain-text key=value configuration. Blank lines and '#' comments ignored.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;

  std::string get_string(std::string_view key, std::string fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  // Canonical "key=value\n" dump in key order; hashed into run manifests.
  std::string canonical() const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

}  // namespace fmx
