#pragma once

// Flat key=value config files with [section] headers, and the resolved
// parameter bag every command runs from.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lshield::cli {

/// Bad key, bad value or malformed file. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "section.key" -> value in file order. '#' and ';' start comment lines.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

ConfigEntries parse_config(std::string_view text, const std::string& origin = "config");
ConfigEntries read_config(const std::filesystem::path& path);

/// Known keys with defaults. File entries are applied first, then flags; a key
/// the command does not declare is rejected either way.
class RunConfig {
 public:
  RunConfig(std::string command, ConfigEntries defaults);

  const std::string& command() const noexcept { return command_; }
  void apply(const ConfigEntries& entries);
  void set(const std::string& key, std::string value);
  bool known(const std::string& key) const;

  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  /// Comma-separated items, whitespace trimmed; empty value gives no items.
  std::vector<std::string> list(const std::string& key) const;

  /// Keys that only affect scheduling (thread counts) and never the
  /// artifacts; they are left out of echo() and hash().
  void mark_scheduling(const std::string& key);

  /// key=value lines in declaration order. The hash covers exactly this text.
  std::string echo() const;
  std::uint64_t hash() const;
  /// Entries that echo() covers.
  ConfigEntries resolved() const;

 private:
  std::size_t index(const std::string& key) const;

  std::string command_;
  ConfigEntries entries_;
  std::vector<std::string> scheduling_;
};

double parse_real(std::string_view text, const std::string& what);
std::uint64_t parse_uint(std::string_view text, const std::string& what);

}  // namespace lshield::cli
