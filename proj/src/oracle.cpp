#include "advlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace advlab {

namespace {

constexpr double kSmallLambda = 1e-8;
constexpr double kFdStep = 1e-4;

void finish(SpectralDecomposition& s) { s.gammas = s.vectors.transpose() * s.g_x; }

SpectralDecomposition lowrank(const Mat& jac, const Mat& h_z, const Vec& g_x) {
  // H_x = J^T H_z J = B^T B with B = H_z^{1/2} J; the nonzero spectrum
  // comes from the small matrix B B^T.
  const SymEigen<double> hz = sym_eigen(h_z);
  const Vec root = hz.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  const Mat sqrt_hz = hz.eigenvectors * root.asDiagonal() * hz.eigenvectors.transpose();
  const Mat b = sqrt_hz * jac;
  const Mat small = b * b.transpose();
  const SymEigen<double> se = sym_eigen(Mat(0.5 * (small + small.transpose())));

  const double top = se.eigenvalues.size() ? std::abs(se.eigenvalues(0)) : 0.0;
  std::vector<double> lambdas;
  std::vector<Vec> vectors;
  for (Eigen::Index i = 0; i < se.eigenvalues.size(); ++i) {
    const double mu = se.eigenvalues(i);
    if (!(mu > 1e-12 * std::max(top, 1e-300))) continue;
    lambdas.push_back(mu);
    vectors.push_back(b.transpose() * se.eigenvectors.col(i) / std::sqrt(mu));
  }

  SpectralDecomposition s;
  s.source = SpectralSource::lowrank_softmax;
  s.g_x = g_x;
  Vec residual = g_x;
  for (const Vec& v : vectors) residual -= v.dot(g_x) * v;
  if (residual.norm() > 1e-14 * std::max(g_x.norm(), 1e-300)) {
    lambdas.push_back(0.0);
    vectors.push_back(residual.normalized());
  }
  if (vectors.empty()) throw Error(Errc::degenerate, "input gradient and Hessian both vanish");
  s.lambdas.resize(static_cast<Eigen::Index>(lambdas.size()));
  s.vectors.resize(g_x.size(), s.lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    s.lambdas(static_cast<Eigen::Index>(i)) = lambdas[i];
    s.vectors.col(static_cast<Eigen::Index>(i)) = vectors[i];
  }
  finish(s);
  return s;
}

SpectralDecomposition finite_difference(const ReluNetwork& net, const LossHead& head,
                                        const Vec& x, const ForwardTrace& clean, GateMode gates,
                                        const Vec& g_x) {
  auto loss = [&](const Vec& p) {
    const ForwardTrace t = gates == GateMode::frozen ? forward(net, p, clean.gates) : forward(net, p);
    return loss_eval(head, t.z).loss;
  };
  const Mat h = fd_hessian(loss, x, kFdStep);
  const SymEigen<double> se = sym_eigen(h, 1e-12);
  SpectralDecomposition s;
  s.source = SpectralSource::finite_difference;
  s.lambdas = se.eigenvalues;
  s.vectors = se.eigenvectors;
  s.g_x = g_x;
  finish(s);
  return s;
}

double checked(double v, const char* what, double lambda) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << what << " overflows for the mode with eigenvalue " << lambda;
    throw Error(Errc::non_finite, os.str());
  }
  return v;
}

}  // namespace

SpectralDecomposition rank1_spectrum(const Vec& g_tilde, double h_z, double g_z) {
  const double n = g_tilde.norm();
  if (n == 0) throw Error(Errc::degenerate, "readout gradient vanishes (flat point)");
  SpectralDecomposition s;
  s.source = SpectralSource::rank1_sigmoid;
  s.lambdas = Vec::Constant(1, h_z * n * n);
  s.vectors = g_tilde / n;
  s.g_x = g_z * g_tilde;
  finish(s);
  return s;
}

SpectralDecomposition spectral(const ReluNetwork& net, const LossHead& head, const Vec& x,
                               GateMode gates, std::optional<SpectralSource> source) {
  const ForwardTrace clean = forward(net, x);
  const bool single = net.output_dim() == 1 || std::holds_alternative<ReducedSigmoid>(head);
  const SpectralSource src =
      source.value_or(single ? SpectralSource::rank1_sigmoid : SpectralSource::lowrank_softmax);
  switch (src) {
    case SpectralSource::rank1_sigmoid: {
      const ScalarObjective obj = scalarize(head, clean.z);
      const ScalarLoss sl = scalar_loss(obj, clean.z);
      const Vec g_tilde = backward(net, clean, obj.readout).dx;
      return rank1_spectrum(g_tilde, sl.h, sl.g);
    }
    case SpectralSource::lowrank_softmax: {
      const InputGradient ig = grad_input(net, clean, head);
      return lowrank(ig.jac_z, ig.loss.h_z, ig.g_x);
    }
    case SpectralSource::finite_difference: {
      const InputGradient ig = grad_input(net, clean, head);
      return finite_difference(net, head, x, clean, gates, ig.g_x);
    }
  }
  throw Error(Errc::precondition, "unknown spectral source");
}

double m_step_growth(double lambda, double alpha, int m) {
  if (m < 0) throw Error(Errc::precondition, "step count must be non-negative");
  const double base = 1 + alpha * lambda;
  if (!(base > 0)) {
    std::ostringstream os;
    os << "step size " << alpha << " too large for eigenvalue " << lambda
       << " (1 + alpha*lambda <= 0)";
    throw Error(Errc::precondition, os.str());
  }
  return checked(std::exp(m * std::log1p(alpha * lambda)), "m-step growth", lambda);
}

double m_step_gain(double lambda, double alpha, int m) {
  m_step_growth(lambda, alpha, m);
  if (std::abs(lambda) < kSmallLambda)
    return m * alpha + 0.5 * m * (m - 1.0) * alpha * alpha * lambda;
  return checked(std::expm1(m * std::log1p(alpha * lambda)) / lambda, "m-step gain", lambda);
}

double inf_growth(double lambda, double beta) {
  if (beta < 0) throw Error(Errc::precondition, "beta must be non-negative");
  return checked(std::exp(beta * lambda), "exp(beta*lambda)", lambda);
}

double inf_gain(double lambda, double beta) {
  inf_growth(lambda, beta);
  if (std::abs(lambda) < kSmallLambda) return beta + 0.5 * beta * beta * lambda;
  return checked(std::expm1(beta * lambda) / lambda, "exp(beta*lambda)", lambda);
}

namespace {

template <class Gain, class Growth>
AnalyticPerturbation combine(const SpectralDecomposition& s, Regime regime, Gain gain,
                             Growth growth) {
  AnalyticPerturbation out;
  out.regime = regime;
  Vec dcoef(s.lambdas.size()), gcoef(s.lambdas.size());
  for (Eigen::Index i = 0; i < s.lambdas.size(); ++i) {
    dcoef(i) = gain(s.lambdas(i)) * s.gammas(i);
    gcoef(i) = growth(s.lambdas(i)) * s.gammas(i);
  }
  out.delta = s.vectors * dcoef;
  out.predicted_gradient = s.vectors * gcoef;
  if (!out.delta.allFinite() || !out.predicted_gradient.allFinite())
    throw Error(Errc::non_finite, "analytic perturbation is not finite");
  return out;
}

}  // namespace

AnalyticPerturbation analytic_delta_m(const SpectralDecomposition& spec, double alpha, int m) {
  if (!(alpha > 0)) throw Error(Errc::precondition, "alpha must be positive");
  if (m < 0) throw Error(Errc::precondition, "step count must be non-negative");
  return combine(
      spec, MStep{alpha, m}, [&](double l) { return m_step_gain(l, alpha, m); },
      [&](double l) { return m_step_growth(l, alpha, m); });
}

AnalyticPerturbation analytic_delta_inf(const SpectralDecomposition& spec, double beta) {
  if (!(beta >= 0)) throw Error(Errc::precondition, "beta must be non-negative");
  return combine(
      spec, Infinite{beta}, [&](double l) { return inf_gain(l, beta); },
      [&](double l) { return inf_growth(l, beta); });
}

AnalyticPerturbation analytic_delta_norm(const SpectralDecomposition& spec, double beta,
                                         double scale) {
  if (!(scale > 0)) throw Error(Errc::precondition, "normalization scale must be positive");
  AnalyticPerturbation out = analytic_delta_inf(spec, beta);
  const double n = out.delta.norm();
  if (n == 0) throw Error(Errc::degenerate, "infinite-step perturbation vanishes");
  out.delta *= scale / n;
  out.regime = Normalized{beta, scale};
  return out;
}

AnalyticPerturbation analytic_delta(const SpectralDecomposition& spec, const Regime& regime) {
  if (const auto* m = std::get_if<MStep>(&regime))
    return analytic_delta_m(spec, m->alpha, m->steps);
  if (const auto* i = std::get_if<Infinite>(&regime)) return analytic_delta_inf(spec, i->beta);
  const auto& n = std::get<Normalized>(regime);
  return analytic_delta_norm(spec, n.beta, n.scale);
}

Vec predicted_gradient(const SpectralDecomposition& spec, const Regime& regime) {
  if (const auto* m = std::get_if<MStep>(&regime))
    return analytic_delta_m(spec, m->alpha, m->steps).predicted_gradient;
  const double beta = std::holds_alternative<Infinite>(regime)
                          ? std::get<Infinite>(regime).beta
                          : std::get<Normalized>(regime).beta;
  return analytic_delta_inf(spec, beta).predicted_gradient;
}

FitReport kappa_fit(const std::vector<Vec>& real, const std::vector<Vec>& analytic, double trim) {
  if (real.size() != analytic.size())
    throw Error(Errc::dimension, "real and analytic sets differ in size");
  if (real.empty()) throw Error(Errc::precondition, "kappa_fit needs at least one sample");
  if (!(trim > 0 && trim <= 1)) throw Error(Errc::precondition, "trim must lie in (0, 1]");

  FitReport r;
  r.trim_fraction = trim;
  std::vector<double> errors;
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (real[i].size() != analytic[i].size())
      throw Error(Errc::dimension, "sample dimensions differ");
    const double n = real[i].stableNorm();
    if (n == 0) {
      ++r.excluded;
      continue;
    }
    errors.push_back((real[i] - analytic[i]).stableNorm() / n);
  }
  if (errors.empty()) throw Error(Errc::degenerate, "every real perturbation is zero");
  r.per_sample_errors = Eigen::Map<const Vec>(errors.data(), static_cast<Eigen::Index>(errors.size()));

  std::sort(errors.begin(), errors.end());
  r.retained = static_cast<std::size_t>(std::ceil(trim * errors.size() - 1e-9));
  r.retained = std::clamp<std::size_t>(r.retained, 1, errors.size());
  r.kappa = std::accumulate(errors.begin(), errors.begin() + static_cast<std::ptrdiff_t>(r.retained), 0.0) /
            static_cast<double>(r.retained);
  return r;
}

}  // namespace advlab
