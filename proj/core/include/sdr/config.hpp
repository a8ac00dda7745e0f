#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sdr/data.hpp"
#include "sdr/training.hpp"

namespace sdr {

// Flat "key = value" document. '#' starts a comment; blank lines are
// ignored; later keys override earlier ones. Typed getters throw ParseError
// naming the key and the line it came from.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& name);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma separated numbers.
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  // Keys never read by a getter, for strict validation.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  std::string name_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
  mutable std::set<std::string> used_;
};

// Field names match the struct members; world keys carry a "world." prefix.
TrainConfig train_config_from(const KeyValueConfig& config, TrainConfig defaults = {});
WorldConfig world_config_from(const KeyValueConfig& config, WorldConfig defaults = {});

// Canonical "key = value" lines with round-trip precision.
std::string serialize(const TrainConfig& config);
std::string serialize(const WorldConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);
// 16 lowercase hex digits.
std::string hash_hex(std::string_view bytes);

}  // namespace sdr
