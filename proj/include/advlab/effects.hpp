#pragma once

#include <optional>
#include <vector>

#include "advlab/network.hpp"

namespace advlab {

/// Clean and perturbed gradients of the composite weight at one layer,
/// both taken under the clean input's gates.
struct WeightGradientPair {
  Mat g_w;
  Mat g_w_adv;
  Mat delta_g_w;   // g_w_adv - g_w
  Mat expansion;   // x (H_h dh)^T + delta (g_h + H_h dh)^T
  Vec perturbation;
  double eta = 0;
  std::size_t layer = 0;
};

WeightGradientPair delta_g_w(const ReluNetwork& net, const LossHead& head, const Vec& x,
                             const Vec& delta, std::size_t layer, double eta,
                             const std::optional<GateState>& gates = std::nullopt);

/// First-layer variant where each gradient uses its own input's gates, so
/// both are the gradients training would apply. No expansion is computed.
WeightGradientPair delta_g_w_free(const ReluNetwork& net, const LossHead& head, const Vec& x,
                                  const Vec& delta, double eta);

/// -eta * g~_x^T dG g~_h for a weight-space gradient difference dG.
double projected_effect(const Mat& dg, const Vec& g_tilde_x, const Vec& g_tilde_h, double eta);
/// phi* = -eta * g~_x^T (g_w_adv - g_w) g~_h.
double measured_effect(const WeightGradientPair& pair, const Vec& g_tilde_x,
                       const Vec& g_tilde_h);

/// additional: the extra effect of the attacked input; adversarial: vanilla
/// plus extra; normalized: the extra effect of a fixed-norm perturbation.
enum class EffectVariant { additional, adversarial, normalized };

struct EffectScalars {
  double a = 0;      // beta * H_z * ||g~_x||^2
  double a_hat = 0;  // trajectory estimate of a
  double h_z = 0;
  double g_z = 0;
  double gx_tilde_norm = 0;
  double gh_tilde_norm = 0;
  double delta_hat_norm = 0;
  double scale = 0;  // C of the normalized perturbation
  double eta = 0;
  double t_ori = 0;  // -eta g~_x^T g_w g~_h
};

/// Right-hand side of the training-effect formula for `variant`.
double effect_rhs(EffectVariant variant, const EffectScalars& s);
/// The term subtracted in every variant's right-hand side, before the sign.
double second_term(const EffectScalars& s);

struct EffectMeasurement {
  double phi_star = 0;
  double phi_hat = 0;
  EffectVariant variant = EffectVariant::additional;
  EffectScalars scalars;
};

/// g~_x, g~_h, g_z and H_z of the single-logit (or reduced) objective at x
/// under `gates`, for the composite view at `layer`.
struct ReadoutGradients {
  Vec g_tilde_x;
  Vec g_tilde_h;
  double g_z = 0;
  double h_z = 0;
};
ReadoutGradients readout_gradients(const ReluNetwork& net, const LossHead& head, const Vec& x,
                                   std::size_t layer, const GateState& gates);

struct QuadraticDecomposition {
  double zeroth = 0;
  double first = 0;
  double second = 0;
  double residual = 0;  // measured loss minus the three terms
};

/// Second-order expansion of the loss in the layer-`layer` preactivation
/// along dh = composite_w^T delta, under the clean gates.
QuadraticDecomposition loss_quadratic_decomposition(const ReluNetwork& net, const LossHead& head,
                                                    const Vec& x, const Vec& delta,
                                                    std::size_t layer);

struct OscillationProbe {
  double delta_ori = 0;
  double delta_adv = 0;
  double probe_length = 0;
  bool skipped = false;  // a weight gradient was zero
};

/// Relative change of the layer-`layer` weight gradient after a step of
/// length `probe_length` along the normalized negative gradient, on x and on
/// x + delta. Uses the network's own gates at each evaluation.
OscillationProbe oscillation_probe(const ReluNetwork& net, const LossHead& head, const Vec& x,
                                   const Vec& delta, double probe_length, std::size_t layer = 0);

struct CosineReport {
  std::vector<double> a_hat;     // per retained sample
  std::vector<double> cosine;    // with the mean difference
  std::vector<double> bin_edges; // bins + 1 quantile edges
  std::vector<double> bin_mean_cosine;
  std::vector<double> bin_mid;   // mean a_hat of the bin
  std::vector<std::size_t> bin_count;
  std::size_t excluded = 0;
};

/// Cosine of each sample's weight-gradient difference with their mean,
/// averaged in equal-population bins of a_hat.
CosineReport cosine_report(const std::vector<Mat>& delta_g_w, const std::vector<double>& a_hat,
                           int bins = 10);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace advlab
