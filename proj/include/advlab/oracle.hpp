#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "advlab/network.hpp"

namespace advlab {

enum class SpectralSource { rank1_sigmoid, lowrank_softmax, finite_difference };
enum class GateMode { frozen, free };

/// Eigenpairs of the input Hessian restricted to the modes that carry the
/// gradient. Columns of `vectors` are orthonormal and g_x = vectors * gammas.
struct SpectralDecomposition {
  Vec lambdas;  // descending
  Mat vectors;
  Vec gammas;
  Vec g_x;
  SpectralSource source = SpectralSource::rank1_sigmoid;
};

/// Default source: rank-1 for single-logit heads, low-rank otherwise.
SpectralDecomposition spectral(const ReluNetwork& net, const LossHead& head, const Vec& x,
                               GateMode gates,
                               std::optional<SpectralSource> source = std::nullopt);

/// Rank-1 spectrum from a readout gradient g~ and scalar curvature h_z;
/// `g_z` scales g~ into the loss gradient.
SpectralDecomposition rank1_spectrum(const Vec& g_tilde, double h_z, double g_z);

struct MStep {
  double alpha = 0;
  int steps = 0;
};
struct Infinite {
  double beta = 0;
};
struct Normalized {
  double beta = 0;
  double scale = 0;  // C
};
using Regime = std::variant<MStep, Infinite, Normalized>;

struct AnalyticPerturbation {
  Vec delta;
  Vec predicted_gradient;
  Regime regime;
};

/// ((1 + alpha*lambda)^m - 1) / lambda
double m_step_gain(double lambda, double alpha, int m);
/// (1 + alpha*lambda)^m
double m_step_growth(double lambda, double alpha, int m);
/// (exp(beta*lambda) - 1) / lambda
double inf_gain(double lambda, double beta);
/// exp(beta*lambda)
double inf_growth(double lambda, double beta);

AnalyticPerturbation analytic_delta_m(const SpectralDecomposition& spec, double alpha, int m);
AnalyticPerturbation analytic_delta_inf(const SpectralDecomposition& spec, double beta);
AnalyticPerturbation analytic_delta_norm(const SpectralDecomposition& spec, double beta,
                                         double scale);
AnalyticPerturbation analytic_delta(const SpectralDecomposition& spec, const Regime& regime);
Vec predicted_gradient(const SpectralDecomposition& spec, const Regime& regime);

struct FitReport {
  double kappa = 0;
  Vec per_sample_errors;  // one entry per non-excluded sample, input order
  double trim_fraction = 1;
  std::size_t retained = 0;
  std::size_t excluded = 0;  // samples with a zero real perturbation
};

/// Mean relative error ||real - analytic|| / ||real|| over the `trim`
/// fraction of samples with the smallest error (count rounded up).
FitReport kappa_fit(const std::vector<Vec>& real, const std::vector<Vec>& analytic, double trim);

}  // namespace advlab
