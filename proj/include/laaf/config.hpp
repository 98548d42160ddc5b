#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "laaf/network.hpp"

namespace laaf::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Run description assembled from a config file and/or command-line flags.
// Optional fields default to the chosen preset's values.
struct RunConfig {
  std::string preset = "discontinuous";
  std::optional<SlopeMode> mode;  // train default: llaaf; verify default: sweep all
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "runs";
  bool full_matrices = false;
  bool noise = false;
  bool corrupt_a = false;

  std::optional<std::vector<int>> widths;
  std::optional<std::string> base;
  std::optional<double> scale;
  std::optional<double> learning_rate;
  std::optional<std::int64_t> iterations;
  std::optional<int> record_every;
  std::optional<double> w_residual, w_data, w_recovery;
  std::optional<std::size_t> data_points, residual_points;
  std::optional<double> nu_true, alpha_true, inverse_init;
  std::optional<double> wave_left, wave_right;
  std::optional<int> epochs, width;
  std::optional<std::size_t> batch;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' wants a number, got '" + v + "'");
  }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return i;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' wants an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' wants a boolean, got '" + v + "'");
}

}  // namespace detail

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& tok : detail::split(text, ',')) {
    if (tok.empty()) continue;
    seeds.push_back(static_cast<std::uint64_t>(detail::parse_int("seeds", tok)));
  }
  if (seeds.empty()) throw ConfigError("config: seed list is empty");
  return seeds;
}

inline std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> widths;
  for (const std::string& tok : detail::split(text, ','))
    if (!tok.empty()) widths.push_back(static_cast<int>(detail::parse_int("widths", tok)));
  if (widths.size() < 2) throw ConfigError("config: widths needs at least two layers");
  return widths;
}

// key = value file with [sections]; '#' starts a comment. Unknown sections or
// keys are rejected by name.
inline void apply_config_text(RunConfig& cfg, std::istream& in) {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"run", {"preset", "mode", "seeds", "out", "iterations", "record_every"}},
      {"network", {"widths", "n", "base"}},
      {"loss", {"w_residual", "w_data", "w_recovery"}},
      {"data", {"points", "residual_points", "noise"}},
      {"problem", {"nu_true", "alpha_true", "inverse_init", "wave_left", "wave_right"}},
      {"dynamics", {"width", "epochs", "batch", "full"}},
  };
  std::string line, section = "run";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!schema.count(section))
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!schema.at(section).count(key))
      throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");

    using namespace detail;
    if (section == "run") {
      if (key == "preset") cfg.preset = value;
      else if (key == "mode") cfg.mode = slope_mode_from(value);
      else if (key == "seeds") cfg.seeds = parse_seed_list(value);
      else if (key == "out") cfg.out_dir = value;
      else if (key == "iterations") cfg.iterations = parse_int(key, value);
      else if (key == "record_every") cfg.record_every = static_cast<int>(parse_int(key, value));
    } else if (section == "network") {
      if (key == "widths") cfg.widths = parse_widths(value);
      else if (key == "n") cfg.scale = parse_double(key, value);
      else if (key == "base") cfg.base = value;
    } else if (section == "loss") {
      if (key == "w_residual") cfg.w_residual = parse_double(key, value);
      else if (key == "w_data") cfg.w_data = parse_double(key, value);
      else if (key == "w_recovery") cfg.w_recovery = parse_double(key, value);
    } else if (section == "data") {
      if (key == "points") cfg.data_points = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "residual_points")
        cfg.residual_points = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "noise") cfg.noise = parse_bool(key, value);
    } else if (section == "problem") {
      if (key == "nu_true") cfg.nu_true = parse_double(key, value);
      else if (key == "alpha_true") cfg.alpha_true = parse_double(key, value);
      else if (key == "inverse_init") cfg.inverse_init = parse_double(key, value);
      else if (key == "wave_left") cfg.wave_left = parse_double(key, value);
      else if (key == "wave_right") cfg.wave_right = parse_double(key, value);
    } else if (section == "dynamics") {
      if (key == "width") cfg.width = static_cast<int>(parse_int(key, value));
      else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
      else if (key == "batch") cfg.batch = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "full") cfg.full_matrices = parse_bool(key, value);
    }
  }
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  RunConfig cfg;
  apply_config_text(cfg, in);
  return cfg;
}

}  // namespace laaf::cli
