#pragma once

// Training configuration: defaults, validation with field-specific messages,
// and a flat key=value config-file reader ('#' comments, blank lines ok).

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mover {

struct TrainConfig {
  int k = 3;          // modalities
  int B = 64;         // batch size
  int d = 32;         // embedding dimension
  int d_in = 32;      // input dimension
  int C = 4;          // classes
  double sigma = 0.1; // latent noise scale
  double epsilon = 0.05;
  double tau = 0.1;
  double lambda = 1.0;
  int kprime = 3;
  std::string strategy = "topk";            // hard | topk | soft
  std::string contrastive_form = "infonce"; // infonce | paper_literal
  int negatives = 8;
  double lr = 0.05;
  int steps = 500;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof())
    throw std::invalid_argument("config: bad value for '" + key + "': " + value);
  return out;
}

}  // namespace detail

inline void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "k") cfg.k = parse_number<int>(key, value);
  else if (key == "B") cfg.B = parse_number<int>(key, value);
  else if (key == "d") cfg.d = parse_number<int>(key, value);
  else if (key == "d_in") cfg.d_in = parse_number<int>(key, value);
  else if (key == "C") cfg.C = parse_number<int>(key, value);
  else if (key == "sigma") cfg.sigma = parse_number<double>(key, value);
  else if (key == "epsilon") cfg.epsilon = parse_number<double>(key, value);
  else if (key == "tau") cfg.tau = parse_number<double>(key, value);
  else if (key == "lambda") cfg.lambda = parse_number<double>(key, value);
  else if (key == "kprime") cfg.kprime = parse_number<int>(key, value);
  else if (key == "strategy") cfg.strategy = value;
  else if (key == "contrastive_form") cfg.contrastive_form = value;
  else if (key == "negatives") cfg.negatives = parse_number<int>(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "steps") cfg.steps = parse_number<int>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline void validate(const TrainConfig& cfg) {
  const auto fail = [](const std::string& field, const std::string& bound) {
    throw std::invalid_argument("config: field '" + field + "' violates bound " + bound);
  };
  if (cfg.k < 2) fail("k", ">= 2");
  if (cfg.C < 2) fail("C", ">= 2");
  if (cfg.B < cfg.C) fail("B", ">= C");
  if (cfg.d < 1) fail("d", ">= 1");
  if (cfg.d_in < 1) fail("d_in", ">= 1");
  if (cfg.sigma < 0.0) fail("sigma", ">= 0");
  if (!(cfg.epsilon > 0.0)) fail("epsilon", "> 0");
  if (!(cfg.tau > 0.0)) fail("tau", "> 0");
  if (cfg.lambda < 0.0) fail("lambda", ">= 0");
  if (cfg.kprime < 1 || cfg.kprime > cfg.B) fail("kprime", "in [1, B]");
  if (cfg.strategy != "hard" && cfg.strategy != "topk" && cfg.strategy != "soft")
    fail("strategy", "in {hard, topk, soft}");
  if (cfg.contrastive_form != "infonce" && cfg.contrastive_form != "paper_literal")
    fail("contrastive_form", "in {infonce, paper_literal}");
  if (cfg.negatives < 1) fail("negatives", ">= 1");
  if (cfg.lr < 0.0) fail("lr", ">= 0");
  if (cfg.steps < 0) fail("steps", ">= 0");
}

// Applies key=value lines from `path` on top of `cfg` (does not validate;
// callers validate after any flag overrides).
inline void load_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value, got: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    set_config_key(cfg, key, value);
  }
}

}  // namespace mover
