#include "advlab/loss.hpp"

#include <cmath>
#include <sstream>

namespace advlab {

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

// 1 / (1 + exp(t)).
double inv_one_plus_exp(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return e / (1 + e);
  }
  return 1 / (1 + std::exp(t));
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_logits(const LossHead& head, const Vec& z) {
  if (!z.allFinite()) throw Error(Errc::non_finite, "loss_eval received non-finite logits");
  if (z.size() != head_arity(head)) {
    std::ostringstream os;
    os << "head expects " << head_arity(head) << " logits, got " << z.size();
    throw Error(Errc::dimension, os.str());
  }
}

}  // namespace

Eigen::Index head_arity(const LossHead& head) {
  return std::visit(overloaded{
                        [](const SigmoidBCE&) -> Eigen::Index { return 1; },
                        [](const SoftmaxCE&) -> Eigen::Index { return -1; },
                        [](const Quadratic& q) -> Eigen::Index { return q.target.size(); },
                        [](const ReducedSigmoid& r) -> Eigen::Index { return r.readout.size(); },
                    },
                    head);
}

LossEval loss_eval(const LossHead& head, const Vec& z) {
  if (const auto* sm = std::get_if<SoftmaxCE>(&head)) {
    if (!z.allFinite()) throw Error(Errc::non_finite, "loss_eval received non-finite logits");
    if (z.size() < 2 || sm->label < 0 || sm->label >= z.size()) {
      std::ostringstream os;
      os << "softmax head with class " << sm->label << " on " << z.size() << " logits";
      throw Error(Errc::dimension, os.str());
    }
  } else {
    check_logits(head, z);
  }

  LossEval out;
  std::visit(overloaded{
                 [&](const SigmoidBCE& s) {
                   if (s.label != 1 && s.label != -1)
                     throw Error(Errc::precondition, "sigmoid label must be -1 or +1");
                   const double y = s.label;
                   const double zy = z(0) * y;
                   const double q = inv_one_plus_exp(zy);  // 1/(1+e^{zy})
                   out.loss = softplus(-zy);
                   out.g_z = Vec::Constant(1, -y * q);
                   // y^2 e^{zy}/(1+e^{zy})^2 = q (1 - q), with 1 - q = 1/(1+e^{-zy})
                   out.h_z = Mat::Constant(1, 1, y * y * q * inv_one_plus_exp(-zy));
                 },
                 [&](const SoftmaxCE& s) {
                   const double zmax = z.maxCoeff();
                   const Vec e = (z.array() - zmax).exp().matrix();
                   const double sum = e.sum();
                   const Vec p = e / sum;
                   out.loss = std::log(sum) + zmax - z(s.label);
                   out.g_z = p;
                   out.g_z(s.label) -= 1;
                   out.h_z = Mat(p.asDiagonal()) - p * p.transpose();
                 },
                 [&](const Quadratic& q) {
                   const Vec r = z - q.target;
                   out.loss = 0.5 * r.squaredNorm();
                   out.g_z = r;
                   out.h_z = Mat::Identity(z.size(), z.size());
                 },
                 [&](const ReducedSigmoid& r) {
                   const double s = r.readout.dot(z);
                   const double q = inv_one_plus_exp(s);
                   out.loss = softplus(-s);
                   out.g_z = -q * r.readout;
                   out.h_z = (q * inv_one_plus_exp(-s)) * r.readout * r.readout.transpose();
                 },
             },
             head);
  return out;
}

int predicted_class(const Vec& z) {
  if (z.size() == 1) return z(0) > 0 ? 1 : 0;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i)
    if (z(i) > z(best)) best = i;
  return static_cast<int>(best);
}

bool head_correct(const LossHead& head, const Vec& z) {
  return std::visit(overloaded{
                        [&](const SigmoidBCE& s) { return (z(0) > 0 ? 1 : -1) == s.label; },
                        [&](const SoftmaxCE& s) { return predicted_class(z) == s.label; },
                        [&](const Quadratic& q) {
                          if (q.target.size() == 1) return (z(0) > 0) == (q.target(0) > 0);
                          return predicted_class(z) == predicted_class(q.target);
                        },
                        [&](const ReducedSigmoid& r) { return r.readout.dot(z) > 0; },
                    },
                    head);
}

BinaryReduction binary_reduce(const Vec& z) {
  if (z.size() < 2) {
    std::ostringstream os;
    os << "binary reduction needs at least 2 logits, got " << z.size();
    throw Error(Errc::dimension, os.str());
  }
  if (!z.allFinite()) throw Error(Errc::non_finite, "binary_reduce received non-finite logits");
  BinaryReduction r;
  r.best = predicted_class(z);
  r.second = r.best == 0 ? 1 : 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (i == r.best) continue;
    if (z(i) > z(r.second)) r.second = static_cast<int>(i);
  }
  r.z = z(r.best) - z(r.second);
  r.readout = Vec::Zero(z.size());
  r.readout(r.best) = 1;
  r.readout(r.second) = -1;
  return r;
}

ScalarObjective scalarize(const LossHead& head, const Vec& z) {
  return std::visit(
      overloaded{
          [&](const SigmoidBCE& s) {
            return ScalarObjective{Vec::Ones(1), s};
          },
          [&](const SoftmaxCE&) {
            const BinaryReduction r = binary_reduce(z);
            return ScalarObjective{r.readout, r.head};
          },
          [&](const Quadratic& q) {
            if (q.target.size() != 1)
              throw Error(Errc::dimension,
                          "scalar objective needs a single-output quadratic head");
            return ScalarObjective{Vec::Ones(1), q};
          },
          [&](const ReducedSigmoid& r) {
            return ScalarObjective{r.readout, SigmoidBCE{1}};
          },
      },
      head);
}

ScalarLoss scalar_loss(const ScalarObjective& obj, const Vec& z) {
  if (obj.readout.size() != z.size())
    throw Error(Errc::dimension, "readout width does not match the logits");
  ScalarLoss out;
  out.s = obj.readout.dot(z);
  const LossEval e = loss_eval(obj.head, Vec::Constant(1, out.s));
  out.loss = e.loss;
  out.g = e.g_z(0);
  out.h = e.h_z(0, 0);
  return out;
}

ReducedSigmoid reduced_head(const Vec& z) { return {binary_reduce(z).readout}; }

LossHead head_for_class(Eigen::Index outputs, int cls) {
  if (outputs == 1) return SigmoidBCE{parity_label(cls)};
  if (cls < 0 || cls >= outputs) {
    std::ostringstream os;
    os << "class " << cls << " out of range for " << outputs << " outputs";
    throw Error(Errc::dimension, os.str());
  }
  return SoftmaxCE{cls};
}

}  // namespace advlab
