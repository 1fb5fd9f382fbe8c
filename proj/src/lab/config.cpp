#include "advlab/lab/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "advlab/error.hpp"

namespace advlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  if (!(is >> v) || !(is >> std::ws).eof())
    throw Error(Errc::config, "config key '" + key + "': cannot parse '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(Errc::config, "config key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << "config line " << lineno << ": expected key = value";
      throw Error(Errc::config, os.str());
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      std::ostringstream os;
      os << "config line " << lineno << ": empty key";
      throw Error(Errc::config, os.str());
    }
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw Error(Errc::config, "config key '" + key + "' given twice");
  }
  return kv;
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::growth: return "growth";
    case ExperimentKind::kappa_table: return "kappa-table";
    case ExperimentKind::effect_fit: return "effect-fit";
    case ExperimentKind::impact_vs_a: return "impact-vs-a";
    case ExperimentKind::cosine_vs_a: return "cosine-vs-a";
    case ExperimentKind::oscillation: return "oscillation";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (auto k : {ExperimentKind::growth, ExperimentKind::kappa_table, ExperimentKind::effect_fit,
                 ExperimentKind::impact_vs_a, ExperimentKind::cosine_vs_a, ExperimentKind::oscillation})
    if (to_string(k) == text) return k;
  throw Error(Errc::config, "unknown experiment kind '" + text + "'");
}

std::string to_string(GradientRule rule) {
  switch (rule) {
    case GradientRule::raw: return "raw";
    case GradientRule::l2_normalized: return "l2";
    case GradientRule::sign_linf: return "linf";
  }
  return "?";
}

GradientRule parse_rule(const std::string& text) {
  if (text == "raw") return GradientRule::raw;
  if (text == "l2") return GradientRule::l2_normalized;
  if (text == "linf") return GradientRule::sign_linf;
  throw Error(Errc::config, "unknown attack rule '" + text + "' (raw, l2, linf)");
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"kind", [&](auto&, auto& v) { c.kind = parse_experiment_kind(v); }},
      {"out", [&](auto&, auto& v) { c.out = v; }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"dataset", [&](auto&, auto& v) { c.dataset = v; }},
      {"eval_dataset", [&](auto&, auto& v) { c.eval_dataset = v; }},
      {"samples", [&](auto& k, auto& v) { c.samples = parse_number<std::size_t>(k, v); }},
      {"networks", [&](auto&, auto& v) { c.networks = split_list(v); }},
      {"width", [&](auto& k, auto& v) { c.width = parse_number<int>(k, v); }},
      {"checkpoint", [&](auto&, auto& v) { c.checkpoint = v; }},
      {"learning_rate", [&](auto& k, auto& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = parse_number<int>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = parse_number<int>(k, v); }},
      {"adversarial", [&](auto& k, auto& v) { c.adversarial = parse_bool(k, v); }},
      {"pgd_steps", [&](auto& k, auto& v) { c.pgd_steps = parse_number<int>(k, v); }},
      {"pgd_step", [&](auto& k, auto& v) { c.pgd_step = parse_number<double>(k, v); }},
      {"pgd_epsilon", [&](auto& k, auto& v) { c.pgd_epsilon = parse_number<double>(k, v); }},
      {"attack_steps", [&](auto& k, auto& v) { c.attack_steps = parse_number<int>(k, v); }},
      {"attack_alpha", [&](auto& k, auto& v) { c.attack_alpha = parse_number<double>(k, v); }},
      {"attack_rule", [&](auto&, auto& v) { c.attack_rule = parse_rule(v); }},
      {"kappa_regime", [&](auto&, auto& v) { c.kappa_regime = v; }},
      {"trim", [&](auto& k, auto& v) { c.trim = parse_number<double>(k, v); }},
      {"layer", [&](auto& k, auto& v) { c.layer = parse_number<std::size_t>(k, v); }},
      {"eta", [&](auto& k, auto& v) { c.eta = parse_number<double>(k, v); }},
      {"beta", [&](auto& k, auto& v) { c.beta = parse_number<double>(k, v); }},
      {"effect_steps", [&](auto& k, auto& v) { c.effect_steps = parse_number<int>(k, v); }},
      {"probe_length", [&](auto& k, auto& v) { c.probe_length = parse_number<double>(k, v); }},
      {"bins", [&](auto& k, auto& v) { c.bins = parse_number<int>(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(Errc::config, "unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_map(read_key_values(path));
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::config, msg); };
  if (networks.empty()) fail("at least one network is required");
  if (checkpoint && networks.size() != 1) fail("a checkpoint stands for exactly one network");
  if (width < 1) fail("width must be positive");
  if (samples < 1) fail("samples must be positive");
  if (!(learning_rate >= 0)) fail("learning_rate must be non-negative");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (pgd_steps < 0 || !(pgd_step > 0) || !(pgd_epsilon > 0)) fail("invalid PGD settings");
  if (attack_steps < 1 || !(attack_alpha > 0)) fail("invalid attack settings");
  if (kappa_regime != "m-step" && kappa_regime != "infinite")
    fail("kappa_regime must be m-step or infinite");
  if (!(trim > 0 && trim <= 1)) fail("trim must lie in (0, 1]");
  if (!(eta > 0)) fail("eta must be positive");
  if (!(beta >= 0)) fail("beta must be non-negative");
  if (effect_steps < 1) fail("effect_steps must be positive");
  if (!(probe_length > 0)) fail("probe_length must be positive");
  if (bins < 1) fail("bins must be positive");
}

}  // namespace advlab
