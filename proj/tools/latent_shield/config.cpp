#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "latent_shield/robustness.hpp"

namespace lshield::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

}  // namespace

ConfigEntries parse_config(std::string_view text, const std::string& origin) {
  ConfigEntries out;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw ConfigError(where + ": bad section name '" + std::string(name) + "'");
      section = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (!valid_name(key)) throw ConfigError(where + ": bad key '" + std::string(key) + "'");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    for (const auto& [k, v] : out) {
      if (k == full) throw ConfigError(where + ": duplicate key '" + full + "'");
    }
    out.emplace_back(full, std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

ConfigEntries read_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

RunConfig::RunConfig(std::string command, ConfigEntries defaults)
    : command_(std::move(command)), entries_(std::move(defaults)) {}

std::size_t RunConfig::index(const std::string& key) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == key) return i;
  }
  std::string known;
  for (const auto& [k, v] : entries_) known += (known.empty() ? "" : ", ") + k;
  throw ConfigError("unknown key '" + key + "' for " + command_ + " (known: " + known + ")");
}

bool RunConfig::known(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

void RunConfig::apply(const ConfigEntries& entries) {
  // Check every key before changing anything.
  for (const auto& [k, v] : entries) index(k);
  for (const auto& [k, v] : entries) entries_[index(k)].second = v;
}

void RunConfig::set(const std::string& key, std::string value) { entries_[index(key)].second = std::move(value); }

const std::string& RunConfig::get(const std::string& key) const { return entries_[index(key)].second; }

double parse_real(std::string_view text, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(what + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double RunConfig::real(const std::string& key) const { return parse_real(get(key), key); }

std::uint64_t RunConfig::integer(const std::string& key) const { return parse_uint(get(key), key); }

bool RunConfig::boolean(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::string_view rest = get(key);
  if (trim(rest).empty()) return out;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    if (item.empty()) throw ConfigError(key + ": empty list item");
    out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

void RunConfig::mark_scheduling(const std::string& key) {
  index(key);
  scheduling_.push_back(key);
}

ConfigEntries RunConfig::resolved() const {
  ConfigEntries out;
  for (const auto& e : entries_) {
    if (std::find(scheduling_.begin(), scheduling_.end(), e.first) == scheduling_.end()) out.push_back(e);
  }
  return out;
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : resolved()) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a(command_ + "\n" + echo()); }

}  // namespace lshield::cli
