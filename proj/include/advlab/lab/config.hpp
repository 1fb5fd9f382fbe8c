#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advlab/attack.hpp"

namespace advlab {

/// Flat `key = value` text, one key per line, `#` starts a comment.
/// Duplicate keys are errors.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_values(const std::string& path);

enum class ExperimentKind { growth, kappa_table, effect_fit, impact_vs_a, cosine_vs_a, oscillation };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& text);
GradientRule parse_rule(const std::string& text);
std::string to_string(GradientRule rule);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::growth;
  std::string out = "out";
  std::uint64_t seed = 0;

  // data
  std::string dataset = "synth:blobs,n=2000,dims=64,classes=10,seed=0";
  std::string eval_dataset = "synth:blobs,n=500,dims=64,classes=10,seed=0";
  std::size_t samples = 50;  // eval samples used per network

  // networks
  std::vector<std::string> networks{"mlp2"};  // mlp1..mlp5, resmlp3..resmlp5
  int width = 200;
  std::optional<std::string> checkpoint;      // load instead of training (single network)

  // training
  double learning_rate = 0.01;
  int epochs = 50;
  int batch_size = 128;
  bool adversarial = false;
  int pgd_steps = 20;
  double pgd_step = 0.005;
  double pgd_epsilon = 0.05;

  // attack under study
  int attack_steps = 500;
  double attack_alpha = 0.02;
  GradientRule attack_rule = GradientRule::raw;
  std::string kappa_regime = "m-step";  // or "infinite"
  double trim = 0.9;                    // free-gate trimming

  // effects
  std::size_t layer = 0;
  double eta = 0.01;
  double beta = 0.001;         // strength of the analytic perturbation for kappa'
  int effect_steps = 20;       // raw attack length behind the effect fit, impact and cosine
  double probe_length = 0.001;
  int bins = 10;

  /// Builds a config from key/value pairs; unknown keys are errors.
  static ExperimentConfig from_map(const std::map<std::string, std::string>& kv);
  static ExperimentConfig from_file(const std::string& path);
  void validate() const;
};

}  // namespace advlab
