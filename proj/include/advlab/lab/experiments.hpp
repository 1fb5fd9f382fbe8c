#pragma once

#include <string>
#include <utility>
#include <vector>

#include "advlab/lab/config.hpp"
#include "advlab/lab/csv.hpp"
#include "advlab/lab/dataset.hpp"
#include "advlab/trainer.hpp"

namespace advlab {

/// Zoo member by name: mlpK (K linear layers) or resmlpK.
ReluNetwork make_network(const std::string& name, Eigen::Index inputs, int width,
                         Eigen::Index outputs, std::uint64_t seed);

/// Training settings of an experiment; `adversarial` adds the PGD adversary.
TrainConfig training_config(const ExperimentConfig& cfg);
AttackConfig pgd_attack(const ExperimentConfig& cfg);
/// The attack under study (attack_* keys).
AttackConfig study_attack(const ExperimentConfig& cfg, bool freeze_gates);

/// Loads cfg.checkpoint, or builds and trains the named network.
ReluNetwork prepare_network(const ExperimentConfig& cfg, const std::string& name,
                            const Dataset& train, std::size_t index);

CsvTable growth_table(const ReluNetwork& net, const Dataset& eval, const ExperimentConfig& cfg);

struct KappaRow {
  std::string baseline;  // frozen-quadratic, free-quadratic, frozen-ce, free-ce
  double kappa = 0;
  std::size_t samples = 0;
};
std::vector<KappaRow> kappa_rows(const ReluNetwork& net, const Dataset& eval,
                                 const ExperimentConfig& cfg);

/// kappa_prime: phi* against the first-order effect formula with the oracle
/// perturbation at strength cfg.beta, gates frozen. kappa: phi* after a real
/// effect_steps attack with free gates against the formula at A = A-hat,
/// trimmed to cfg.trim.
struct EffectFit {
  double kappa = 0;
  double kappa_prime = 0;
  std::vector<double> kappa_samples;
  std::vector<double> kappa_prime_samples;
};
EffectFit effect_fit(const ReluNetwork& net, const Dataset& eval, const ExperimentConfig& cfg);

/// Per-sample raw attack of effect_steps steps, its A-hat and the weight-gradient
/// difference; shared by the impact and cosine experiments.
struct ImpactSample {
  double h_z = 0;
  double hz_gx2 = 0;
  double a_hat = 0;
  double abs_phi_star = 0;
  Mat delta_g_w;
};
std::vector<ImpactSample> impact_samples(const ReluNetwork& net, const Dataset& eval,
                                         const ExperimentConfig& cfg);
CsvTable impact_table(const std::vector<ImpactSample>& samples);
CsvTable cosine_table(const std::vector<ImpactSample>& samples, int bins);

/// Probes on x and x + delta with delta from the PGD attack; `zero_delta`
/// probes with delta = 0 instead.
CsvTable oscillation_table(const ReluNetwork& net, const Dataset& eval,
                           const ExperimentConfig& cfg, bool zero_delta = false);

struct ExperimentOutput {
  std::vector<std::pair<std::string, CsvTable>> tables;  // file name, table
};

/// Runs the configured experiment over every network; the caller writes files.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);
/// Runs and writes every table under cfg.out.
ExperimentOutput run_and_write(const ExperimentConfig& cfg);

}  // namespace advlab
