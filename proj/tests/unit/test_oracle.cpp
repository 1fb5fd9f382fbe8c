#include <doctest.h>

#include <cmath>
#include <random>

#include "advlab/attack.hpp"
#include "advlab/linalg.hpp"
#include "advlab/oracle.hpp"

using namespace advlab;

namespace {

SpectralDecomposition diagonal_spectrum(const Vec& lambdas, const Vec& gammas) {
  SpectralDecomposition s;
  s.lambdas = lambdas;
  s.vectors = Mat::Identity(lambdas.size(), lambdas.size());
  s.gammas = gammas;
  s.g_x = gammas;
  return s;
}

Vec v(std::initializer_list<double> xs) {
  Vec out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

Vec random_vec(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = u(rng);
  return out;
}

double cosine(const Vec& a, const Vec& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_CASE("rank-one spectrum") {
  const SpectralDecomposition s = rank1_spectrum(v({3, 4}), 0.25, -0.5);
  CHECK(s.lambdas(0) == doctest::Approx(6.25));
  CHECK(s.vectors(0, 0) == doctest::Approx(0.6));
  CHECK(s.vectors(1, 0) == doctest::Approx(0.8));
  CHECK((s.vectors * s.gammas - s.g_x).norm() < 1e-9);
  CHECK((s.g_x - (-0.5) * v({3, 4})).norm() < 1e-15);

  // The same curvature from a sigmoid loss on z = (3, 4) . x at x = 0.
  auto loss = [](const Vec& x) { return std::log1p(std::exp(-(3 * x(0) + 4 * x(1)))); };
  const auto e = sym_eigen(fd_hessian(loss, Vec::Zero(2), 1e-4));
  CHECK(e.eigenvalues(0) == doctest::Approx(6.25).epsilon(1e-6));

  CHECK_THROWS_AS(rank1_spectrum(Vec::Zero(2), 0.25, -0.5), Error);
}

TEST_CASE("softmax spectrum agrees with the finite-difference spectrum") {
  const ReluNetwork net(mlp_spec(6, 10, 2, 4, 17));
  const Vec x = random_vec(6, 3);
  const LossHead head = SoftmaxCE{1};
  const SpectralDecomposition low = spectral(net, head, x, GateMode::frozen);
  const SpectralDecomposition fd =
      spectral(net, head, x, GateMode::frozen, SpectralSource::finite_difference);
  CHECK(low.source == SpectralSource::lowrank_softmax);
  CHECK((low.vectors * low.gammas - low.g_x).norm() < 1e-9);
  CHECK((low.vectors.transpose() * low.vectors -
         Mat::Identity(low.vectors.cols(), low.vectors.cols()))
            .norm() < 1e-9);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK(std::abs(low.lambdas(i) - fd.lambdas(i)) <= 1e-4 * std::abs(fd.lambdas(0)));
}

TEST_CASE("sigmoid network uses the rank-one path") {
  const ReluNetwork net(mlp_spec(5, 8, 2, 1, 4));
  const Vec x = random_vec(5, 2);
  const SpectralDecomposition s = spectral(net, SigmoidBCE{1}, x, GateMode::frozen);
  const SpectralDecomposition fd =
      spectral(net, SigmoidBCE{1}, x, GateMode::frozen, SpectralSource::finite_difference);
  CHECK(s.source == SpectralSource::rank1_sigmoid);
  CHECK(s.lambdas(0) == doctest::Approx(fd.lambdas(0)).epsilon(1e-4));
}

TEST_CASE("m-step gains") {
  const SpectralDecomposition flat = diagonal_spectrum(v({0, 0}), v({1, -2}));
  CHECK((analytic_delta_m(flat, 0.1, 7).delta - 0.7 * flat.g_x).norm() < 1e-14);

  const SpectralDecomposition one = diagonal_spectrum(v({1}), v({1}));
  CHECK(analytic_delta_m(one, 0.1, 2).delta(0) == doctest::Approx(0.21).epsilon(1e-14));
  CHECK(m_step_growth(1, 0.1, 2) == doctest::Approx(1.21).epsilon(1e-14));

  const AnalyticPerturbation none = analytic_delta_m(one, 0.1, 0);
  CHECK(none.delta.norm() == 0);
  CHECK(none.predicted_gradient == one.g_x);

  CHECK(m_step_gain(1e-10, 0.1, 3) == doctest::Approx(0.3 + 3 * 0.01 * 1e-10).epsilon(1e-14));
  CHECK_THROWS_AS(m_step_gain(-20, 0.1, 3), Error);
}

TEST_CASE("infinite-step gains") {
  const SpectralDecomposition one = diagonal_spectrum(v({1}), v({1}));
  CHECK(analytic_delta_inf(one, 0).delta.norm() == 0);
  CHECK(analytic_delta_inf(one, std::log(2.0)).delta(0) == doctest::Approx(1).epsilon(1e-15));
  CHECK(inf_gain(0, 0.3) == 0.3);
  CHECK(inf_gain(1e-12, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(inf_growth(1000, 1), Error);

  const SpectralDecomposition s = diagonal_spectrum(v({1.5, 0.2, -0.7}), v({0.3, -1, 2}));
  const Vec lim = analytic_delta_inf(s, 1.0).delta;
  const Vec m = analytic_delta_m(s, 1.0 / 10000, 10000).delta;
  CHECK((m - lim).norm() / lim.norm() < 1e-2);
}

TEST_CASE("normalized perturbation") {
  const SpectralDecomposition flat = diagonal_spectrum(v({0, 0}), v({3, 4}));
  const Vec d = analytic_delta_norm(flat, 1.0, 1.0).delta;
  CHECK(d(0) == doctest::Approx(0.6));
  CHECK(d(1) == doctest::Approx(0.8));
  CHECK(analytic_delta_norm(flat, 1.0, 2.5).delta.norm() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK_THROWS_AS(analytic_delta_norm(flat, 0.0, 1.0), Error);

  const SpectralDecomposition s = diagonal_spectrum(v({1, 0}), v({1, 1}));
  CHECK(cosine(analytic_delta_norm(s, 1e-6, 1).delta, s.g_x) > 0.999999);
  CHECK(std::abs(analytic_delta_norm(s, 12, 1).delta(0)) >= 0.99);
}

TEST_CASE("predicted gradient") {
  const SpectralDecomposition s = diagonal_spectrum(v({2, 0.5, 0}), v({1, 1, 1}));
  CHECK(predicted_gradient(s, MStep{0.1, 0}) == s.g_x);
  CHECK(predicted_gradient(s, Infinite{0}) == s.g_x);
  double last = 0;
  for (int m = 0; m <= 30; ++m) {
    const double n = predicted_gradient(s, MStep{0.05, m}).norm();
    CHECK(n >= last);
    last = n;
  }
}

TEST_CASE("analytic solution tracks a frozen quadratic attack") {
  const ReluNetwork net(mlp_spec(6, 10, 2, 3, 5));
  const Vec x = random_vec(6, 7);
  const LossHead head = Quadratic{v({1, 0, 0})};
  AttackConfig cfg;
  cfg.step_size = 0.02;
  cfg.steps = 50;
  cfg.freeze_gates = true;
  const AttackTrajectory t = run_attack(net, head, x, cfg);
  const SpectralDecomposition s = spectral(net, head, x, GateMode::frozen);
  const AnalyticPerturbation a = analytic_delta_m(s, 0.02, 50);
  CHECK((a.delta - t.delta).norm() / t.delta.norm() < 1e-6);

  const ForwardTrace after = forward(net, x + t.delta, t.clean_gates);
  const Vec g = backward(net, after, loss_eval(head, after.z).g_z).dx;
  CHECK((a.predicted_gradient - g).norm() / g.norm() < 1e-6);

  const FitReport fit = kappa_fit({t.delta}, {a.delta}, 1.0);
  CHECK(fit.kappa <= 1e-4);
}

TEST_CASE("kappa fit") {
  const std::vector<Vec> a{v({1, 0}), v({0, 2})};
  CHECK(kappa_fit(a, a, 1.0).kappa == 0);
  CHECK(kappa_fit({v({1, 0})}, {v({0.9, 0})}, 1.0).kappa == doctest::Approx(0.1));

  const std::vector<Vec> real{v({1}), v({1}), v({1}), v({1})};
  const std::vector<Vec> hat{v({1.1}), v({1.2}), v({1.3}), v({5})};
  const FitReport trimmed = kappa_fit(real, hat, 0.75);
  CHECK(trimmed.retained == 3);
  CHECK(trimmed.kappa == doctest::Approx(0.2));
  CHECK(trimmed.per_sample_errors.size() == 4);

  const FitReport zero = kappa_fit({v({0}), v({2})}, {v({1}), v({1})}, 1.0);
  CHECK(zero.excluded == 1);
  CHECK(zero.kappa == doctest::Approx(0.5));

  CHECK_THROWS_AS(kappa_fit({v({1})}, {v({1}), v({2})}, 1.0), Error);
  CHECK_THROWS_AS(kappa_fit({v({1})}, {v({1})}, 0.0), Error);
}
