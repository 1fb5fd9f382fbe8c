#pragma once

// Dense vector/matrix aliases, a cyclic Jacobi symmetric eigensolver and
// central finite-difference oracles. Everything is templated on the scalar
// type; the rest of the library instantiates it with double.

#include <Eigen/Dense>
#include <Eigen/Jacobi>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "advlab/error.hpp"

namespace advlab {

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = VecX<double>;
using Mat = MatX<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Eigenpairs of a symmetric matrix. Eigenvalues are sorted descending and
/// column i of `eigenvectors` belongs to eigenvalue i.
template <typename Scalar>
struct SymEigen {
  VecX<Scalar> eigenvalues;
  MatX<Scalar> eigenvectors;
  int sweeps = 0;
  Scalar off_norm = 0;  // off-diagonal Frobenius norm at exit
};

namespace detail {

template <typename Scalar>
Scalar off_diagonal_norm(const MatX<Scalar>& a) {
  Scalar s = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

// Largest-magnitude entry positive; ties go to the lowest index.
template <typename Scalar>
void canonical_sign(Eigen::Ref<VecX<Scalar>> v) {
  Eigen::Index best = 0;
  Scalar best_abs = -1;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best_abs) {
      best_abs = std::abs(v(i));
      best = i;
    }
  }
  if (v.size() > 0 && v(best) < 0) v = -v;
}

}  // namespace detail

/// Cyclic Jacobi eigensolver. Converged when the off-diagonal Frobenius
/// norm drops to tol * ||A||_F.
template <typename Derived>
SymEigen<typename Derived::Scalar> sym_eigen(const Eigen::MatrixBase<Derived>& input,
                                             typename Derived::Scalar tol = 1e-12,
                                             int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  if (input.rows() != input.cols() || input.rows() == 0) {
    std::ostringstream os;
    os << "sym_eigen needs a non-empty square matrix, got " << input.rows() << "x" << input.cols();
    throw Error(Errc::dimension, os.str());
  }
  if (!input.allFinite()) throw Error(Errc::non_finite, "sym_eigen input has non-finite entries");
  const Eigen::Index n = input.rows();
  MatX<Scalar> a = input;
  const Scalar scale = a.cwiseAbs().maxCoeff();
  const Scalar asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > Scalar(1e-12) * scale) {
    std::ostringstream os;
    os << "max |A - A^T| = " << asym << " exceeds 1e-12 relative to max |A| = " << scale;
    throw Error(Errc::not_symmetric, os.str());
  }
  a = (a + a.transpose()) / Scalar(2);

  MatX<Scalar> v = MatX<Scalar>::Identity(n, n);
  const Scalar target = tol * a.norm();
  Scalar off = detail::off_diagonal_norm(a);
  int sweep = 0;
  while (off > target) {
    if (sweep == max_sweeps) {
      std::ostringstream os;
      os << "Jacobi stopped after " << max_sweeps << " sweeps with off-diagonal residual " << off
         << " (target " << target << ")";
      throw Error(Errc::no_convergence, os.str());
    }
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == Scalar(0)) continue;
        Eigen::JacobiRotation<Scalar> rot;
        rot.makeJacobi(a, p, q);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        a(p, q) = a(q, p) = Scalar(0);
        v.applyOnTheRight(p, q, rot);
      }
    }
    ++sweep;
    off = detail::off_diagonal_norm(a);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  SymEigen<Scalar> out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = a(src, src);
    out.eigenvectors.col(k) = v.col(src);
    detail::canonical_sign<Scalar>(out.eigenvectors.col(k));
  }
  out.sweeps = sweep;
  out.off_norm = off;
  return out;
}

/// Default central-difference step: cbrt(machine epsilon) * max(1, ||x||_inf).
template <typename Derived>
typename Derived::Scalar fd_default_step(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar inf_norm = x.size() ? x.cwiseAbs().maxCoeff() : Scalar(0);
  return std::cbrt(std::numeric_limits<Scalar>::epsilon()) * std::max(Scalar(1), inf_norm);
}

/// Default Hessian stencil step: epsilon^(1/4) * max(1, ||x||_inf).
template <typename Derived>
typename Derived::Scalar fd_hessian_default_step(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar inf_norm = x.size() ? x.cwiseAbs().maxCoeff() : Scalar(0);
  return std::sqrt(std::sqrt(std::numeric_limits<Scalar>::epsilon())) *
         std::max(Scalar(1), inf_norm);
}

namespace detail {

template <typename Scalar, typename F>
Scalar checked_eval(F& f, const VecX<Scalar>& x, Eigen::Index coord) {
  const Scalar value = f(x);
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "finite-difference evaluation returned " << value << " while perturbing coordinate "
       << coord;
    throw Error(Errc::non_finite, os.str());
  }
  return value;
}

}  // namespace detail

/// Central-difference gradient of a scalar field.
template <typename F, typename Derived>
VecX<typename Derived::Scalar> fd_gradient(F&& f, const Eigen::MatrixBase<Derived>& x0,
                                           std::optional<typename Derived::Scalar> step = {}) {
  using Scalar = typename Derived::Scalar;
  const Scalar h = step ? *step : fd_default_step(x0);
  if (!(h > 0)) throw Error(Errc::precondition, "finite-difference step must be positive");
  VecX<Scalar> x = x0;
  VecX<Scalar> g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar xi = x(i);
    x(i) = xi + h;
    const Scalar fp = detail::checked_eval<Scalar>(f, x, i);
    x(i) = xi - h;
    const Scalar fm = detail::checked_eval<Scalar>(f, x, i);
    x(i) = xi;
    g(i) = (fp - fm) / (2 * h);
  }
  return g;
}

/// Central 4-point Hessian stencil per entry, symmetrized.
template <typename F, typename Derived>
MatX<typename Derived::Scalar> fd_hessian(F&& f, const Eigen::MatrixBase<Derived>& x0,
                                          std::optional<typename Derived::Scalar> step = {}) {
  using Scalar = typename Derived::Scalar;
  const Scalar h = step ? *step : fd_hessian_default_step(x0);
  if (!(h > 0)) throw Error(Errc::precondition, "finite-difference step must be positive");
  const Eigen::Index n = x0.size();
  VecX<Scalar> x = x0;
  MatX<Scalar> hess(n, n);
  auto at = [&](Eigen::Index i, Scalar si, Eigen::Index j, Scalar sj) {
    const Scalar xi = x(i), xj = x(j);
    x(i) += si * h;
    x(j) += sj * h;
    const Scalar value = detail::checked_eval<Scalar>(f, x, i);
    x(i) = xi;
    x(j) = xj;
    return value;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Scalar v = at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1);
      hess(i, j) = hess(j, i) = v / (4 * h * h);
    }
  }
  return (hess + hess.transpose()) / Scalar(2);
}

}  // namespace advlab
