#include "advlab/lab/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "advlab/effects.hpp"
#include "advlab/lab/checkpoint.hpp"
#include "advlab/oracle.hpp"

namespace advlab {

namespace {

Error with_context(const std::string& where, const Error& e) {
  return Error(e.code(), where + ": " + e.what());
}

LossHead quadratic_head(Eigen::Index outputs, int label) {
  if (outputs == 1) return Quadratic{Vec::Constant(1, parity_label(label))};
  return Quadratic{Vec::Unit(outputs, label)};
}

// Reduced binary objective for multi-logit networks, the parity sigmoid otherwise.
LossHead effect_head(const ReluNetwork& net, const Vec& x, int label) {
  if (net.output_dim() == 1) return SigmoidBCE{parity_label(label)};
  return reduced_head(forward(net, x).z);
}

AttackConfig quiet(AttackConfig a) {
  a.keep_vectors = false;
  a.track_curvature = false;
  a.record_every = std::max(1, a.steps);
  return a;
}

Vec analytic(const SpectralDecomposition& s, const ExperimentConfig& cfg) {
  if (cfg.kappa_regime == "infinite")
    return analytic_delta_inf(s, cfg.attack_alpha * cfg.attack_steps).delta;
  return analytic_delta_m(s, cfg.attack_alpha, cfg.attack_steps).delta;
}

}  // namespace

ReluNetwork make_network(const std::string& name, Eigen::Index inputs, int width,
                         Eigen::Index outputs, std::uint64_t seed) {
  const bool res = name.rfind("resmlp", 0) == 0;
  const std::string digits = name.substr(res ? 6 : 3);
  if ((!res && name.rfind("mlp", 0) != 0) || digits.empty() ||
      digits.find_first_not_of("0123456789") != std::string::npos)
    throw Error(Errc::config, "unknown network '" + name + "' (mlpK or resmlpK)");
  const std::size_t layers = std::stoul(digits);
  return ReluNetwork(res ? resmlp_spec(inputs, width, layers, outputs, seed)
                         : mlp_spec(inputs, width, layers, outputs, seed));
}

AttackConfig pgd_attack(const ExperimentConfig& cfg) {
  AttackConfig a;
  a.rule = GradientRule::sign_linf;
  a.steps = cfg.pgd_steps;
  a.step_size = cfg.pgd_step;
  a.epsilon = cfg.pgd_epsilon;
  a.norm = Norm::linf;
  a.project = true;
  return a;
}

AttackConfig study_attack(const ExperimentConfig& cfg, bool freeze_gates) {
  AttackConfig a;
  a.rule = cfg.attack_rule;
  a.steps = cfg.attack_steps;
  a.step_size = cfg.attack_alpha;
  a.freeze_gates = freeze_gates;
  return a;
}

TrainConfig training_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch_size;
  t.seed = cfg.seed;
  if (cfg.adversarial) t.adversary = pgd_attack(cfg);
  return t;
}

ReluNetwork prepare_network(const ExperimentConfig& cfg, const std::string& name,
                            const Dataset& train, std::size_t index) {
  if (cfg.checkpoint) return load_checkpoint(*cfg.checkpoint);
  const Eigen::Index outputs = train.classes;
  ReluNetwork net = make_network(name, train.dims(), cfg.width, outputs, cfg.seed * 1000 + index + 1);
  const TrainConfig t = training_config(cfg);
  return t.adversary ? adversarial_train(std::move(net), train, t).net
                     : sgd_train(std::move(net), train, t).net;
}

CsvTable growth_table(const ReluNetwork& net, const Dataset& eval, const ExperimentConfig& cfg) {
  CsvTable table{{"sample_id", "t", "t_over_m_success", "delta_norm", "grad_norm", "rule"}, {}};
  AttackConfig attack = study_attack(cfg, false);
  attack.keep_vectors = false;
  attack.track_curvature = false;
  const Dataset data = eval.head(cfg.samples);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LossHead head = head_for_class(net.output_dim(), data.labels[i]);
    const AttackTrajectory traj = run_attack(net, head, data.inputs[i], attack);
    const double ms = traj.m_success ? *traj.m_success : std::numeric_limits<double>::quiet_NaN();
    for (const AttackRecord& r : traj.records)
      table.add_row({static_cast<std::int64_t>(i), static_cast<std::int64_t>(r.t), r.t / ms,
                     r.delta_norm, r.grad_norm, to_string(attack.rule)});
  }
  return table;
}

std::vector<KappaRow> kappa_rows(const ReluNetwork& net, const Dataset& eval,
                                 const ExperimentConfig& cfg) {
  const Dataset data = eval.head(cfg.samples);
  struct Baseline {
    std::string name;
    bool frozen;
    bool quadratic;
    std::vector<Vec> real, analytic;
  };
  std::vector<Baseline> baselines{{"frozen-quadratic", true, true, {}, {}},
                                  {"free-quadratic", false, true, {}, {}},
                                  {"frozen-ce", true, false, {}, {}},
                                  {"free-ce", false, false, {}, {}}};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec& x = data.inputs[i];
    for (Baseline& b : baselines) {
      const LossHead head = b.quadratic ? quadratic_head(net.output_dim(), data.labels[i])
                                        : head_for_class(net.output_dim(), data.labels[i]);
      try {
        const SpectralDecomposition s =
            spectral(net, head, x, b.frozen ? GateMode::frozen : GateMode::free);
        Vec predicted = analytic(s, cfg);
        Vec real = run_attack(net, head, x, quiet(study_attack(cfg, b.frozen))).delta;
        b.analytic.push_back(std::move(predicted));
        b.real.push_back(std::move(real));
      } catch (const Error& e) {
        if (e.code() != Errc::non_finite && e.code() != Errc::degenerate) throw;
      }
    }
  }
  std::vector<KappaRow> rows;
  for (const Baseline& b : baselines) {
    KappaRow row{b.name, std::numeric_limits<double>::quiet_NaN(), 0};
    if (!b.real.empty()) {
      const FitReport fit = kappa_fit(b.real, b.analytic, b.frozen ? 1.0 : cfg.trim);
      row.kappa = fit.kappa;
      row.samples = fit.retained;
    }
    rows.push_back(row);
  }
  return rows;
}

EffectFit effect_fit(const ReluNetwork& net, const Dataset& eval, const ExperimentConfig& cfg) {
  const Dataset data = eval.head(cfg.samples);
  AttackConfig attack = study_attack(cfg, false);
  attack.rule = GradientRule::raw;
  attack.steps = cfg.effect_steps;
  attack.keep_vectors = false;
  attack.record_every = attack.steps;

  EffectFit out;
  std::vector<Vec> frozen_star, frozen_hat, free_star, free_hat;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec& x = data.inputs[i];
    const LossHead head = effect_head(net, x, data.labels[i]);
    const GateState gates = forward(net, x).gates;
    const ReadoutGradients rg = readout_gradients(net, head, x, cfg.layer, gates);

    EffectScalars sc;
    sc.h_z = rg.h_z;
    sc.g_z = rg.g_z;
    sc.gx_tilde_norm = rg.g_tilde_x.norm();
    sc.gh_tilde_norm = rg.g_tilde_h.norm();
    sc.eta = cfg.eta;

    const SpectralDecomposition s = rank1_spectrum(rg.g_tilde_x, rg.h_z, rg.g_z);
    const Vec delta_hat = analytic_delta_inf(s, cfg.beta).delta;
    const WeightGradientPair pair = delta_g_w(net, head, x, delta_hat, cfg.layer, cfg.eta, gates);
    sc.a = cfg.beta * rg.h_z * sc.gx_tilde_norm * sc.gx_tilde_norm;
    sc.t_ori = projected_effect(pair.g_w, rg.g_tilde_x, rg.g_tilde_h, cfg.eta);
    frozen_star.push_back(Vec::Constant(1, measured_effect(pair, rg.g_tilde_x, rg.g_tilde_h)));
    frozen_hat.push_back(Vec::Constant(1, effect_rhs(EffectVariant::additional, sc)));

    const AttackTrajectory traj = run_attack(net, head, x, attack);
    const WeightGradientPair real = delta_g_w_free(net, head, x, traj.delta, cfg.eta);
    sc.a = traj.a_hat_total;
    sc.a_hat = traj.a_hat_total;
    free_star.push_back(Vec::Constant(1, measured_effect(real, rg.g_tilde_x, rg.g_tilde_h)));
    free_hat.push_back(Vec::Constant(1, effect_rhs(EffectVariant::additional, sc)));
  }
  const FitReport frozen = kappa_fit(frozen_star, frozen_hat, 1.0);
  const FitReport free = kappa_fit(free_star, free_hat, cfg.trim);
  out.kappa_prime = frozen.kappa;
  out.kappa = free.kappa;
  out.kappa_prime_samples.assign(frozen.per_sample_errors.begin(), frozen.per_sample_errors.end());
  out.kappa_samples.assign(free.per_sample_errors.begin(), free.per_sample_errors.end());
  return out;
}

std::vector<ImpactSample> impact_samples(const ReluNetwork& net, const Dataset& eval,
                                         const ExperimentConfig& cfg) {
  const Dataset data = eval.head(cfg.samples);
  AttackConfig attack = study_attack(cfg, false);
  attack.rule = GradientRule::raw;
  attack.steps = cfg.effect_steps;
  attack.keep_vectors = false;
  attack.record_every = attack.steps;
  std::vector<ImpactSample> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec& x = data.inputs[i];
    const LossHead head = effect_head(net, x, data.labels[i]);
    const AttackTrajectory traj = run_attack(net, head, x, attack);
    const ReadoutGradients rg = readout_gradients(net, head, x, 0, traj.clean_gates);
    const WeightGradientPair pair = delta_g_w_free(net, head, x, traj.delta, cfg.eta);
    ImpactSample s;
    s.h_z = rg.h_z;
    s.hz_gx2 = rg.h_z * rg.g_tilde_x.squaredNorm();
    s.a_hat = traj.a_hat_total;
    s.abs_phi_star = std::abs(measured_effect(pair, rg.g_tilde_x, rg.g_tilde_h));
    s.delta_g_w = pair.delta_g_w;
    out.push_back(std::move(s));
  }
  return out;
}

CsvTable impact_table(const std::vector<ImpactSample>& samples) {
  CsvTable table{{"sample_id", "H_z", "Hz_gx2", "A_hat", "abs_phi_star", "delta_gw_norm"}, {}};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImpactSample& s = samples[i];
    table.add_row({static_cast<std::int64_t>(i), s.h_z, s.hz_gx2, s.a_hat, s.abs_phi_star,
                   s.delta_g_w.norm()});
  }
  return table;
}

CsvTable cosine_table(const std::vector<ImpactSample>& samples, int bins) {
  std::vector<Mat> dg;
  std::vector<double> a;
  for (const ImpactSample& s : samples) {
    dg.push_back(s.delta_g_w);
    a.push_back(s.a_hat);
  }
  const CosineReport r = cosine_report(dg, a, bins);
  CsvTable table{{"bin", "a_hat_mid", "mean_cosine", "n"}, {}};
  for (std::size_t b = 0; b < r.bin_mean_cosine.size(); ++b)
    table.add_row({static_cast<std::int64_t>(b), r.bin_mid[b], r.bin_mean_cosine[b],
                   static_cast<std::int64_t>(r.bin_count[b])});
  return table;
}

CsvTable oscillation_table(const ReluNetwork& net, const Dataset& eval,
                           const ExperimentConfig& cfg, bool zero_delta) {
  const Dataset data = eval.head(cfg.samples);
  const AttackConfig attack = quiet(pgd_attack(cfg));
  CsvTable table{{"sample_id", "delta_ori", "delta_adv"}, {}};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec& x = data.inputs[i];
    const LossHead head = head_for_class(net.output_dim(), data.labels[i]);
    const Vec delta = zero_delta ? Vec::Zero(x.size()) : run_attack(net, head, x, attack).delta;
    const OscillationProbe p = oscillation_probe(net, head, x, delta, cfg.probe_length, cfg.layer);
    if (p.skipped) continue;
    table.add_row({static_cast<std::int64_t>(i), p.delta_ori, p.delta_adv});
  }
  return table;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string kind = to_string(cfg.kind);
  Dataset train, eval;
  try {
    train = dataset_from_uri(cfg.dataset);
    eval = dataset_from_uri(cfg.eval_dataset);
  } catch (const Error& e) {
    throw with_context(kind + " experiment, loading data", e);
  }

  ExperimentOutput out;
  CsvTable kappa{{"network", "baseline", "kappa", "n_samples"}, {}};
  CsvTable fit{{"network", "kappa", "kappa_prime"}, {}};
  for (std::size_t n = 0; n < cfg.networks.size(); ++n) {
    const std::string& name = cfg.networks[n];
    try {
      const ReluNetwork net = prepare_network(cfg, name, train, n);
      switch (cfg.kind) {
        case ExperimentKind::growth:
          out.tables.emplace_back("growth_" + name + ".csv", growth_table(net, eval, cfg));
          break;
        case ExperimentKind::kappa_table:
          for (const KappaRow& r : kappa_rows(net, eval, cfg))
            kappa.add_row({name, r.baseline, r.kappa, static_cast<std::int64_t>(r.samples)});
          break;
        case ExperimentKind::effect_fit: {
          const EffectFit f = effect_fit(net, eval, cfg);
          fit.add_row({name, f.kappa, f.kappa_prime});
          break;
        }
        case ExperimentKind::impact_vs_a:
          out.tables.emplace_back("impact_" + name + ".csv",
                                  impact_table(impact_samples(net, eval, cfg)));
          break;
        case ExperimentKind::cosine_vs_a:
          out.tables.emplace_back("cosine_" + name + ".csv",
                                  cosine_table(impact_samples(net, eval, cfg), cfg.bins));
          break;
        case ExperimentKind::oscillation:
          out.tables.emplace_back("oscillation_" + name + ".csv", oscillation_table(net, eval, cfg));
          break;
      }
    } catch (const Error& e) {
      throw with_context(kind + " experiment, network " + name, e);
    }
  }
  if (cfg.kind == ExperimentKind::kappa_table) out.tables.emplace_back("kappa_table.csv", kappa);
  if (cfg.kind == ExperimentKind::effect_fit) out.tables.emplace_back("effect_fit.csv", fit);
  return out;
}

ExperimentOutput run_and_write(const ExperimentConfig& cfg) {
  ExperimentOutput out = run_experiment(cfg);
  std::filesystem::create_directories(cfg.out);
  for (const auto& [file, table] : out.tables)
    write_csv(table, (std::filesystem::path(cfg.out) / file).string());
  return out;
}

}  // namespace advlab
