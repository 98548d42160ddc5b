#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "laaf/network.hpp"

namespace laaf {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Versioned JSON checkpoint. Floats are written with 17 significant digits so
// the round trip is bit-exact.
inline std::string checkpoint_to_json(const NetworkParams& p) {
  validate(p);
  const FlatParams flat = flatten(p);
  std::ostringstream out;
  out << "{\n";
  out << "  \"format\": \"laaf-checkpoint\",\n";
  out << "  \"version\": 1,\n";
  out << "  \"widths\": [";
  for (std::size_t i = 0; i < p.widths.size(); ++i)
    out << (i ? ", " : "") << p.widths[i];
  out << "],\n";
  out << "  \"slope_mode\": \"" << to_string(p.mode.slope) << "\",\n";
  out << "  \"base\": \"" << to_string(p.mode.base) << "\",\n";
  out << "  \"scale\": " << format_double(p.mode.scale) << ",\n";
  out << "  \"seed\": " << p.init_seed << ",\n";
  out << "  \"params\": [";
  for (std::size_t i = 0; i < flat.values.size(); ++i)
    out << (i ? ", " : "") << format_double(flat.values[i]);
  out << "]\n}\n";
  return out.str();
}

inline NetworkParams checkpoint_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (!j.contains("format") || j["format"] != "laaf-checkpoint")
    throw std::invalid_argument("checkpoint: unrecognized format field");
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw std::invalid_argument("checkpoint: unsupported version");

  FlatParams flat;
  flat.layout.widths = j.at("widths").get<std::vector<int>>();
  flat.layout.mode.slope = slope_mode_from(j.at("slope_mode").get<std::string>());
  flat.layout.mode.base = nonlinearity_from(j.at("base").get<std::string>());
  flat.layout.mode.scale = j.at("scale").get<double>();
  flat.values = j.at("params").get<std::vector<double>>();
  if (flat.values.size() != flat.layout.total())
    throw std::invalid_argument("checkpoint: parameter count does not match widths/mode");
  NetworkParams p = unflatten(flat);
  p.init_seed = j.at("seed").get<std::uint64_t>();
  validate(p);
  return p;
}

inline void save_checkpoint(const NetworkParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << checkpoint_to_json(p);
}

inline NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace laaf
