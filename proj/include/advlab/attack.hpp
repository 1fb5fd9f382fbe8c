#pragma once

#include <optional>
#include <vector>

#include "advlab/network.hpp"

namespace advlab {

enum class GradientRule {
  raw,            // delta += alpha * g
  l2_normalized,  // delta += alpha * g / ||g||; zero gradients skip the step
  sign_linf,      // delta += alpha * sign(g), sign(0) = 0
};

enum class Norm { l2, linf };

struct AttackConfig {
  double step_size = 0.02;
  int steps = 0;
  GradientRule rule = GradientRule::raw;
  bool freeze_gates = false;  // reuse the clean input's gates at every step
  std::optional<double> epsilon;
  Norm norm = Norm::linf;
  bool project = false;       // project delta onto the epsilon ball after each step
  int record_every = 1;
  bool keep_vectors = true;   // store delta and the step update in each record
  bool track_curvature = true;  // H_z^(t) and ||g~|| per step (needed for A-hat)

  void validate() const;
};

/// State after step t, evaluated at x + delta^(t).
struct AttackRecord {
  int t = 0;
  Vec delta;
  Vec update;             // step taken at t, before projection
  double delta_norm = 0;
  double grad_norm = 0;   // ||g_{x + delta^(t)}||
  double h_z = 0;         // scalar curvature of the readout loss
  double g_tilde_norm = 0;
  double a_hat_partial = 0;
  int predicted = 0;
};

struct AttackTrajectory {
  std::vector<AttackRecord> records;
  std::optional<int> m_success;  // first step whose prediction differs from the clean one
  Vec delta;                      // final perturbation
  int steps = 0;
  int record_every = 1;
  double a_hat_total = 0;         // running sum over every step, recorded or not
  int clean_prediction = 0;
  double clean_grad_norm = 0;
  GateState clean_gates;
};

/// Multi-step gradient ascent on the loss of `head` starting at x.
AttackTrajectory run_attack(const ReluNetwork& net, const LossHead& head, const Vec& x,
                            const AttackConfig& cfg);

/// sum_t alpha * H_z^(t) * ||g~_{x + delta^(t)}||^2 over all recorded steps.
/// Needs a record for every step.
double a_hat(const AttackTrajectory& traj, double alpha);

}  // namespace advlab
