#pragma once

#include <variant>

#include "advlab/linalg.hpp"

namespace advlab {

/// Binary cross-entropy on a single logit with label y in {-1, +1}:
/// L = log(1 + exp(-z y)).
struct SigmoidBCE {
  int label = 1;
};

/// Softmax cross-entropy against a class index.
struct SoftmaxCE {
  int label = 0;
};

/// L = 0.5 * ||z - target||^2, so H_z = I.
struct Quadratic {
  Vec target;
};

/// Sigmoid cross-entropy with label +1 on the scalar readout^T z; the
/// multi-class loss seen through best minus second-best logit.
struct ReducedSigmoid {
  Vec readout;
};

using LossHead = std::variant<SigmoidBCE, SoftmaxCE, Quadratic, ReducedSigmoid>;

/// Loss value with its first and second derivatives in the logits. For the
/// sigmoid head g_z and H_z are 1-vectors / 1x1 matrices.
struct LossEval {
  double loss = 0;
  Vec g_z;
  Mat h_z;
};

LossEval loss_eval(const LossHead& head, const Vec& z);

/// Number of logits the head consumes (sigmoid: 1).
Eigen::Index head_arity(const LossHead& head);

/// Predicted class for the logits: argmax for c > 1 (lowest index on ties),
/// and for a single logit 1 when z > 0, else 0.
int predicted_class(const Vec& z);

/// Whether the logits classify the head's label correctly. Sigmoid labels
/// are compared by sign, softmax labels by argmax; quadratic heads compare
/// argmax against argmax(target).
bool head_correct(const LossHead& head, const Vec& z);

/// Result of collapsing a softmax head onto its two strongest logits.
struct BinaryReduction {
  double z = 0;        // best minus second-best logit
  int best = 0;
  int second = 1;
  SigmoidBCE head{1};
  Vec readout;         // e_best - e_second, so z = readout^T logits
};

BinaryReduction binary_reduce(const Vec& z);

/// A loss driven by one scalar logit s = readout^T z. This is the object the
/// rank-1 analysis works with: sigmoid heads read their only logit, softmax
/// heads read best minus second-best, quadratic heads read their only logit.
struct ScalarObjective {
  Vec readout;
  LossHead head;  // SigmoidBCE or single-output Quadratic, evaluated on s
};

/// Scalar objective for a head at clean logits z. Softmax heads are reduced
/// with binary_reduce; multi-output quadratic heads are rejected.
ScalarObjective scalarize(const LossHead& head, const Vec& z);

struct ScalarLoss {
  double s = 0;
  double loss = 0;
  double g = 0;
  double h = 0;
};

ScalarLoss scalar_loss(const ScalarObjective& obj, const Vec& z);

/// ReducedSigmoid head fixed at the clean logits z.
ReducedSigmoid reduced_head(const Vec& z);

/// Label mapping used for single-logit networks: odd classes are +1.
inline int parity_label(int cls) { return (cls % 2 != 0) ? 1 : -1; }

/// Head a network with `outputs` logits trains against for class `cls`.
LossHead head_for_class(Eigen::Index outputs, int cls);

}  // namespace advlab
