#include "advlab/effects.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace advlab {

namespace {

GateState gates_or_clean(const ReluNetwork& net, const Vec& x,
                         const std::optional<GateState>& gates) {
  if (!gates) return forward(net, x).gates;
  check_gates(net, *gates);
  return *gates;
}

// Per-layer weight gradient (out x in) under the network's own gates.
Mat layer_gradient(const ReluNetwork& net, const LossHead& head, const Vec& x, std::size_t layer) {
  return grad_weights(net, forward(net, x), head).weights.at(layer);
}

}  // namespace

WeightGradientPair delta_g_w(const ReluNetwork& net, const LossHead& head, const Vec& x,
                             const Vec& delta, std::size_t layer, double eta,
                             const std::optional<GateState>& gates) {
  if (delta.size() != x.size()) throw Error(Errc::dimension, "perturbation width");
  if (!delta.allFinite()) throw Error(Errc::non_finite, "perturbation is not finite");
  const GateState g = gates_or_clean(net, x, gates);
  const ForwardTrace clean = forward(net, x, g);
  const ForwardTrace adv = forward(net, x + delta, g);

  WeightGradientPair out;
  out.layer = layer;
  out.eta = eta;
  out.perturbation = delta;
  out.g_w = grad_composite(net, clean, head, layer);
  out.g_w_adv = grad_composite(net, adv, head, layer);
  out.delta_g_w = out.g_w_adv - out.g_w;

  const LinearizedModel lin = linearize(net, g, layer, false);
  const LossEval e = loss_eval(head, clean.z);
  const Vec g_h = backward(net, clean, e.g_z).dpre[layer];
  const Vec dh = lin.composite_w.transpose() * delta;
  const Vec hh_dh = lin.downstream.transpose() * (e.h_z * (lin.downstream * dh));
  out.expansion = x * hh_dh.transpose() + delta * (g_h + hh_dh).transpose();
  return out;
}

WeightGradientPair delta_g_w_free(const ReluNetwork& net, const LossHead& head, const Vec& x,
                                  const Vec& delta, double eta) {
  if (delta.size() != x.size()) throw Error(Errc::dimension, "perturbation width");
  if (!delta.allFinite()) throw Error(Errc::non_finite, "perturbation is not finite");
  WeightGradientPair out;
  out.eta = eta;
  out.perturbation = delta;
  out.g_w = grad_composite(net, forward(net, x), head, 0);
  out.g_w_adv = grad_composite(net, forward(net, x + delta), head, 0);
  out.delta_g_w = out.g_w_adv - out.g_w;
  return out;
}

double projected_effect(const Mat& dg, const Vec& g_tilde_x, const Vec& g_tilde_h, double eta) {
  if (dg.rows() != g_tilde_x.size() || dg.cols() != g_tilde_h.size())
    throw Error(Errc::dimension, "readout gradients do not match the composite weight shape");
  return -eta * g_tilde_x.dot(dg * g_tilde_h);
}

double measured_effect(const WeightGradientPair& pair, const Vec& g_tilde_x,
                       const Vec& g_tilde_h) {
  return projected_effect(pair.delta_g_w, g_tilde_x, g_tilde_h, pair.eta);
}

double second_term(const EffectScalars& s) {
  if (!(s.h_z > 0)) {
    std::ostringstream os;
    os << "curvature H_z = " << s.h_z << " must be positive";
    throw Error(Errc::precondition, os.str());
  }
  const double k = s.eta * s.g_z * s.g_z * s.gh_tilde_norm * s.gh_tilde_norm / s.h_z;
  return k * (std::exp(2 * s.a) - std::exp(s.a));
}

double effect_rhs(EffectVariant variant, const EffectScalars& s) {
  switch (variant) {
    case EffectVariant::additional:
      return std::expm1(s.a) * s.t_ori - second_term(s);
    case EffectVariant::adversarial:
      return std::exp(s.a) * s.t_ori - second_term(s);
    case EffectVariant::normalized: {
      if (!(s.delta_hat_norm > 0))
        throw Error(Errc::precondition, "normalized variant needs a nonzero perturbation norm");
      if (!(s.h_z > 0)) throw Error(Errc::precondition, "curvature H_z must be positive");
      const double u = std::expm1(s.a) / s.delta_hat_norm;
      const double k = s.eta * s.g_z * s.g_z * s.gh_tilde_norm * s.gh_tilde_norm / s.h_z;
      return s.scale * u * s.t_ori - s.scale * k * (u + s.scale * u * u);
    }
  }
  throw Error(Errc::precondition, "unknown effect variant");
}

ReadoutGradients readout_gradients(const ReluNetwork& net, const LossHead& head, const Vec& x,
                                   std::size_t layer, const GateState& gates) {
  const ForwardTrace trace = forward(net, x, gates);
  require_composite_view(net, trace, layer);
  const ScalarObjective obj = scalarize(head, trace.z);
  const Backward b = backward(net, trace, obj.readout);
  const ScalarLoss sl = scalar_loss(obj, trace.z);
  return {b.dx, b.dpre[layer], sl.g, sl.h};
}

QuadraticDecomposition loss_quadratic_decomposition(const ReluNetwork& net, const LossHead& head,
                                                    const Vec& x, const Vec& delta,
                                                    std::size_t layer) {
  const ForwardTrace clean = forward(net, x);
  require_composite_view(net, forward(net, x, clean.gates), layer);
  const LinearizedModel lin = linearize(net, clean.gates, layer, false);
  const LossEval e = loss_eval(head, clean.z);
  const Vec g_h = lin.downstream.transpose() * e.g_z;
  const Vec dh = lin.composite_w.transpose() * delta;
  const Vec dz = lin.downstream * dh;

  QuadraticDecomposition out;
  out.zeroth = e.loss;
  out.first = g_h.dot(dh);
  out.second = 0.5 * dz.dot(e.h_z * dz);
  const double moved = loss_eval(head, forward(net, x + delta, clean.gates).z).loss;
  if (!std::isfinite(moved)) throw Error(Errc::non_finite, "perturbed loss is not finite");
  out.residual = moved - out.zeroth - out.first - out.second;
  return out;
}

OscillationProbe oscillation_probe(const ReluNetwork& net, const LossHead& head, const Vec& x,
                                   const Vec& delta, double probe_length, std::size_t layer) {
  if (!(probe_length > 0)) throw Error(Errc::precondition, "probe length must be positive");
  if (layer >= net.num_layers()) throw Error(Errc::dimension, "probe layer out of range");
  OscillationProbe out;
  out.probe_length = probe_length;
  const double width = static_cast<double>(net.spec().layer_dims[layer + 1]);

  auto probe = [&](const Vec& input, double& result) {
    const Mat g = layer_gradient(net, head, input, layer);
    const double n = g.norm();
    if (n == 0) {
      out.skipped = true;
      return;
    }
    ReluNetwork moved = net;
    moved.weight(layer) -= (probe_length / n) * g;
    const Mat g_moved = layer_gradient(moved, head, input, layer);
    result = (g_moved - g).norm() / (width * probe_length);
  };
  probe(x, out.delta_ori);
  probe(x + delta, out.delta_adv);
  return out;
}

CosineReport cosine_report(const std::vector<Mat>& delta_g_w, const std::vector<double>& a_hat,
                           int bins) {
  if (delta_g_w.size() != a_hat.size())
    throw Error(Errc::dimension, "one A-hat value per sample is required");
  if (bins < 1) throw Error(Errc::precondition, "at least one bin is required");

  CosineReport r;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < delta_g_w.size(); ++i) {
    if (delta_g_w[i].norm() > 0 && std::isfinite(a_hat[i]))
      keep.push_back(i);
    else
      ++r.excluded;
  }
  if (keep.size() < 2) throw Error(Errc::precondition, "cosine report needs at least 2 samples");

  Mat mean = Mat::Zero(delta_g_w[keep[0]].rows(), delta_g_w[keep[0]].cols());
  for (std::size_t i : keep) mean += delta_g_w[i];
  mean /= static_cast<double>(keep.size());
  const double mean_norm = mean.norm();

  for (std::size_t i : keep) {
    const Mat& d = delta_g_w[i];
    const double c = mean_norm > 0 ? (d.array() * mean.array()).sum() / (d.norm() * mean_norm) : 0.0;
    r.a_hat.push_back(a_hat[i]);
    r.cosine.push_back(std::clamp(c, -1.0, 1.0));
  }

  std::vector<std::size_t> order(r.a_hat.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.a_hat[a] < r.a_hat[b]; });
  const std::size_t n = order.size();
  const std::size_t nb = std::min<std::size_t>(static_cast<std::size_t>(bins), n);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t lo = b * n / nb, hi = (b + 1) * n / nb;
    double cs = 0, as = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      cs += r.cosine[order[k]];
      as += r.a_hat[order[k]];
    }
    r.bin_edges.push_back(r.a_hat[order[lo]]);
    r.bin_mean_cosine.push_back(cs / static_cast<double>(hi - lo));
    r.bin_mid.push_back(as / static_cast<double>(hi - lo));
    r.bin_count.push_back(hi - lo);
  }
  r.bin_edges.push_back(r.a_hat[order.back()]);
  return r;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw Error(Errc::precondition, "correlation needs two aligned samples of size >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0;
  return sab / std::sqrt(saa * sbb);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

}  // namespace advlab
