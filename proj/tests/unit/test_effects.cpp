#include <doctest.h>

#include <cmath>
#include <random>

#include "advlab/effects.hpp"
#include "advlab/oracle.hpp"

using namespace advlab;

namespace {

Vec normal_vec(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

EffectScalars worked_example() {
  EffectScalars s;
  s.a = std::log(2.0);
  s.eta = 0.1;
  s.g_z = -0.5;
  s.h_z = 0.25;
  s.gh_tilde_norm = 2;
  s.t_ori = -0.01;
  return s;
}

double residual(const WeightGradientPair& p) { return (p.delta_g_w - p.expansion).norm(); }

}  // namespace

TEST_CASE("zero perturbation gives a zero gradient difference") {
  const ReluNetwork net(mlp_spec(6, 10, 2, 1, 3));
  const Vec x = normal_vec(6, 1).cwiseAbs();
  const WeightGradientPair p = delta_g_w(net, SigmoidBCE{1}, x, Vec::Zero(6), 0, 0.01);
  CHECK(p.delta_g_w.norm() == 0);
  CHECK(p.expansion.norm() == 0);
  const WeightGradientPair f = delta_g_w_free(net, SigmoidBCE{1}, x, Vec::Zero(6), 0.01);
  CHECK(f.delta_g_w.norm() == 0);
}

TEST_CASE("expansion residual is second order in the perturbation") {
  for (std::size_t layers : {1, 2, 3}) {
    const ReluNetwork net(mlp_spec(6, 10, layers, 1, 3));
    const Vec x = normal_vec(6, 1).cwiseAbs();
    const Vec d = normal_vec(6, 2);
    const GateState gates = forward(net, x).gates;
    const double r1 = residual(delta_g_w(net, SigmoidBCE{1}, x, 0.05 * d, 0, 0.01, gates));
    const double r2 = residual(delta_g_w(net, SigmoidBCE{1}, x, 0.025 * d, 0, 0.01, gates));
    CHECK(r1 / r2 >= 3.5);
    CHECK(r1 / r2 <= 4.5);
  }
}

TEST_CASE("expansion residual is third order where the loss has no third derivative") {
  ReluNetwork net(mlp_spec(6, 1, 1, 1, 5));
  const Vec x = normal_vec(6, 7);
  net.bias(0)(0) = -net.weights()[0].row(0).dot(x);
  const Vec d = normal_vec(6, 8);
  const double r1 = residual(delta_g_w(net, SigmoidBCE{1}, x, 0.02 * d, 0, 0.01));
  const double r2 = residual(delta_g_w(net, SigmoidBCE{1}, x, 0.01 * d, 0, 0.01));
  CHECK(r1 / r2 >= 6);
}

TEST_CASE("measured effect is linear in the learning rate") {
  const ReluNetwork net(mlp_spec(6, 10, 2, 1, 3));
  const Vec x = normal_vec(6, 1).cwiseAbs();
  const Vec d = 0.1 * normal_vec(6, 2);
  const GateState gates = forward(net, x).gates;
  const ReadoutGradients rg = readout_gradients(net, SigmoidBCE{1}, x, 0, gates);
  const double a = measured_effect(delta_g_w(net, SigmoidBCE{1}, x, d, 0, 0.01, gates),
                                   rg.g_tilde_x, rg.g_tilde_h);
  const double b = measured_effect(delta_g_w(net, SigmoidBCE{1}, x, d, 0, 0.02, gates),
                                   rg.g_tilde_x, rg.g_tilde_h);
  CHECK(b == 2 * a);
  CHECK(projected_effect(Mat::Zero(6, 10), rg.g_tilde_x, rg.g_tilde_h, 0.01) == 0);
}

TEST_CASE("measured effect follows the first-order formula on a one-layer sigmoid model") {
  const ReluNetwork net(mlp_spec(6, 1, 1, 1, 5));
  const Vec x = 0.3 * normal_vec(6, 7);
  const double eta = 0.01;
  const double beta = 1e-4;
  const GateState gates = forward(net, x).gates;
  const ReadoutGradients rg = readout_gradients(net, SigmoidBCE{1}, x, 0, gates);
  const Vec delta =
      analytic_delta_inf(rank1_spectrum(rg.g_tilde_x, rg.h_z, rg.g_z), beta).delta;
  const WeightGradientPair p = delta_g_w(net, SigmoidBCE{1}, x, delta, 0, eta, gates);

  EffectScalars s;
  s.h_z = rg.h_z;
  s.g_z = rg.g_z;
  s.gx_tilde_norm = rg.g_tilde_x.norm();
  s.gh_tilde_norm = rg.g_tilde_h.norm();
  s.eta = eta;
  s.a = beta * rg.h_z * s.gx_tilde_norm * s.gx_tilde_norm;
  s.t_ori = projected_effect(p.g_w, rg.g_tilde_x, rg.g_tilde_h, eta);
  const double phi_star = measured_effect(p, rg.g_tilde_x, rg.g_tilde_h);
  const double phi_hat = effect_rhs(EffectVariant::additional, s);
  CHECK(std::abs(phi_star - phi_hat) / std::abs(phi_star) <= 1e-6);
}

TEST_CASE("effect formula on the worked example") {
  const EffectScalars s = worked_example();
  CHECK(effect_rhs(EffectVariant::additional, s) == doctest::Approx(-0.81).epsilon(1e-12));
  CHECK(effect_rhs(EffectVariant::adversarial, s) - effect_rhs(EffectVariant::additional, s) ==
        doctest::Approx(s.t_ori).epsilon(1e-12));
  CHECK(second_term(s) >= 0);
}

TEST_CASE("no attack, no additional effect") {
  EffectScalars s = worked_example();
  s.a = 0;
  CHECK(effect_rhs(EffectVariant::additional, s) == 0);
  CHECK(effect_rhs(EffectVariant::adversarial, s) == s.t_ori);
}

TEST_CASE("normalized variant") {
  EffectScalars s = worked_example();
  s.delta_hat_norm = 2;
  s.scale = 1;
  const double u = (std::exp(s.a) - 1) / s.delta_hat_norm;
  const double k = s.eta * s.g_z * s.g_z * s.gh_tilde_norm * s.gh_tilde_norm / s.h_z;
  CHECK(effect_rhs(EffectVariant::normalized, s) ==
        doctest::Approx(s.scale * u * s.t_ori - s.scale * k * (u + s.scale * u * u)));
  s.h_z = 0;
  CHECK_THROWS_AS(effect_rhs(EffectVariant::additional, s), Error);
}

TEST_CASE("quadratic decomposition of the loss") {
  const ReluNetwork net(mlp_spec(6, 10, 2, 3, 3));
  const Vec x = normal_vec(6, 1).cwiseAbs();
  const QuadraticDecomposition zero =
      loss_quadratic_decomposition(net, SoftmaxCE{0}, x, Vec::Zero(6), 0);
  CHECK(zero.first == 0);
  CHECK(zero.second == 0);
  CHECK(zero.residual == 0);

  const Vec d = normal_vec(6, 2);
  const QuadraticDecomposition q =
      loss_quadratic_decomposition(net, Quadratic{Vec::Ones(3)}, x, 0.1 * d, 0);
  CHECK(std::abs(q.residual) < 1e-12 * (std::abs(q.zeroth) + 1));

  const double r1 = std::abs(loss_quadratic_decomposition(net, SoftmaxCE{0}, x, 0.05 * d, 0).residual);
  const double r2 =
      std::abs(loss_quadratic_decomposition(net, SoftmaxCE{0}, x, 0.025 * d, 0).residual);
  CHECK(r1 / r2 >= 7);
}

TEST_CASE("oscillation probe") {
  const ReluNetwork net(mlp_spec(6, 10, 2, 3, 3));
  const Vec x = normal_vec(6, 1).cwiseAbs();
  const OscillationProbe same = oscillation_probe(net, SoftmaxCE{1}, x, Vec::Zero(6), 1e-3);
  CHECK(same.delta_ori == same.delta_adv);
  CHECK_THROWS_AS(oscillation_probe(net, SoftmaxCE{1}, x, Vec::Zero(6), 0), Error);

  // One affine layer under a quadratic head: the weight gradient moves by
  // exactly probe_length * ||x||^2, spread over D outputs.
  const ReluNetwork lin(mlp_spec(6, 3, 1, 3, 4));
  const Vec d = normal_vec(6, 5);
  const OscillationProbe p = oscillation_probe(lin, Quadratic{Vec::Ones(3)}, x, d, 1e-3);
  CHECK(p.delta_ori == doctest::Approx(x.squaredNorm() / 3).epsilon(1e-9));
  CHECK(p.delta_adv == doctest::Approx((x + d).squaredNorm() / 3).epsilon(1e-9));
}

TEST_CASE("cosine report") {
  const Mat m = Mat::Random(3, 4);
  const CosineReport same = cosine_report({m, m, m, m}, {1, 2, 3, 4}, 2);
  for (double c : same.bin_mean_cosine) CHECK(c == doctest::Approx(1));

  Mat a = Mat::Zero(2, 1), b = Mat::Zero(2, 1);
  a(0, 0) = 1;
  b(1, 0) = 1;
  const CosineReport ortho = cosine_report({a, b}, {0.5, 1.5}, 2);
  for (double c : ortho.cosine) CHECK(c == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(ortho.bin_count[0] == 1);
  CHECK(ortho.bin_count[1] == 1);

  const CosineReport skip = cosine_report({a, b, Mat::Zero(2, 1)}, {1, 2, 3}, 1);
  CHECK(skip.excluded == 1);
}

TEST_CASE("rank correlations") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 1000}) == doctest::Approx(1));
  CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1));
  CHECK(spearman({1, 1, 2}, {1, 1, 2}) == doctest::Approx(1));
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1));
  CHECK(pearson({1, 2, 3, 4}, {1, 4, 9, 16}) < 1);
}
