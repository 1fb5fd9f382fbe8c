#include "advlab/attack.hpp"

#include <cmath>
#include <sstream>

namespace advlab {

void AttackConfig::validate() const {
  if (!(step_size > 0) || !std::isfinite(step_size))
    throw Error(Errc::config, "attack step size must be positive");
  if (steps < 0) throw Error(Errc::config, "attack step count must be non-negative");
  if (record_every < 1) throw Error(Errc::config, "record_every must be at least 1");
  if (project && !epsilon) throw Error(Errc::config, "projection needs an epsilon budget");
  if (epsilon && !(*epsilon > 0)) throw Error(Errc::config, "epsilon must be positive");
}

namespace {

struct Probe {
  ForwardTrace trace;
  Vec grad;
  double h_z = 0;
  double g_tilde_norm = 0;
};

// Readout used for the per-step curvature: the head's scalar objective when
// it has one, otherwise best minus second-best of the clean logits.
struct Readout {
  Vec r;
  std::optional<ScalarObjective> objective;
};

Readout make_readout(const LossHead& head, const Vec& z) {
  Readout out;
  const bool scalarizable =
      !std::holds_alternative<Quadratic>(head) || std::get<Quadratic>(head).target.size() == 1;
  if (scalarizable) {
    out.objective = scalarize(head, z);
    out.r = out.objective->readout;
  } else {
    out.r = binary_reduce(z).readout;
  }
  return out;
}

Probe probe(const ReluNetwork& net, const LossHead& head, const Vec& point,
            const GateState* frozen, const Readout& readout, bool curvature, int step) {
  Probe p;
  p.trace = frozen ? forward(net, point, *frozen) : forward(net, point);
  const LossEval e = loss_eval(head, p.trace.z);
  p.grad = backward(net, p.trace, e.g_z).dx;
  if (!p.grad.allFinite()) {
    std::ostringstream os;
    os << "attack gradient became non-finite at step " << step;
    throw Error(Errc::non_finite, os.str());
  }
  if (curvature) {
    p.h_z = readout.objective ? scalar_loss(*readout.objective, p.trace.z).h
                              : readout.r.dot(e.h_z * readout.r);
    p.g_tilde_norm = backward(net, p.trace, readout.r).dx.norm();
  }
  return p;
}

Vec step_direction(GradientRule rule, const Vec& g) {
  switch (rule) {
    case GradientRule::raw:
      return g;
    case GradientRule::l2_normalized: {
      const double n = g.norm();
      if (n == 0) return Vec::Zero(g.size());
      return g / n;
    }
    case GradientRule::sign_linf:
      return g.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
  }
  return g;
}

void project(Vec& delta, const AttackConfig& cfg) {
  const double eps = *cfg.epsilon;
  if (cfg.norm == Norm::linf) {
    delta = delta.cwiseMax(-eps).cwiseMin(eps);
  } else {
    const double n = delta.norm();
    if (n > eps) delta *= eps / n;
  }
}

}  // namespace

AttackTrajectory run_attack(const ReluNetwork& net, const LossHead& head, const Vec& x,
                            const AttackConfig& cfg) {
  cfg.validate();
  AttackTrajectory traj;
  traj.steps = cfg.steps;
  traj.record_every = cfg.record_every;
  traj.delta = Vec::Zero(x.size());

  const ForwardTrace clean = forward(net, x);
  traj.clean_gates = clean.gates;
  traj.clean_prediction = predicted_class(clean.z);
  const GateState* frozen = cfg.freeze_gates ? &traj.clean_gates : nullptr;
  const Readout readout = make_readout(head, clean.z);

  Probe current = probe(net, head, x, frozen, readout, false, 0);
  traj.clean_grad_norm = current.grad.norm();
  for (int t = 1; t <= cfg.steps; ++t) {
    const Vec step = cfg.step_size * step_direction(cfg.rule, current.grad);
    traj.delta += step;
    if (cfg.project) project(traj.delta, cfg);

    current = probe(net, head, x + traj.delta, frozen, readout, cfg.track_curvature, t);
    const int predicted = predicted_class(current.trace.z);
    if (!traj.m_success && predicted != traj.clean_prediction) traj.m_success = t;
    if (cfg.track_curvature)
      traj.a_hat_total += cfg.step_size * current.h_z * current.g_tilde_norm * current.g_tilde_norm;

    if (t % cfg.record_every == 0 || t == cfg.steps) {
      AttackRecord rec;
      rec.t = t;
      if (cfg.keep_vectors) {
        rec.delta = traj.delta;
        rec.update = step;
      }
      rec.delta_norm = traj.delta.norm();
      rec.grad_norm = current.grad.norm();
      rec.h_z = current.h_z;
      rec.g_tilde_norm = current.g_tilde_norm;
      rec.a_hat_partial = traj.a_hat_total;
      rec.predicted = predicted;
      traj.records.push_back(std::move(rec));
    }
  }
  return traj;
}

double a_hat(const AttackTrajectory& traj, double alpha) {
  if (traj.records.size() != static_cast<std::size_t>(traj.steps))
    throw Error(Errc::precondition, "A-hat needs a record for every attack step");
  double sum = 0;
  for (const AttackRecord& rec : traj.records)
    sum += alpha * rec.h_z * rec.g_tilde_norm * rec.g_tilde_norm;
  return sum;
}

}  // namespace advlab
