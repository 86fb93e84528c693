#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "nashcbo/errors.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/rng.hpp"

namespace nashcbo {

// Cournot oligopoly on d markets with M firms.  Firm m ships quantities
// x_m in R^d and pays
//   E_m(x) = x_m . (c_m - p(x)),   p(x) = phi(L * sum_k x_k),
// with the clamped power price phi_h(z) = max{a - b z_h, 0}^beta and a
// market-coupling matrix L.  Instances are synthesized around a known
// equilibrium: marginal costs c are chosen so the first-order conditions
// vanish at a drawn x*.
struct CournotGameSpec {
  int d = 0;
  int M = 0;
  double beta = 2.0;
  double a = 100.0;
  double b = 1e-3;
  Matrix L;      // d x d
  Matrix c;      // d x M, column m is firm m's marginal cost vector
  Matrix xstar;  // d x M, equilibrium the instance was built around

  CournotGameSpec(int d_in, int M_in, double beta_in, double a_in, double b_in,
                  Matrix L_in, Matrix c_in, Matrix xstar_in)
      : d(d_in),
        M(M_in),
        beta(beta_in),
        a(a_in),
        b(b_in),
        L(std::move(L_in)),
        c(std::move(c_in)),
        xstar(std::move(xstar_in)) {
    if (d <= 0 || M <= 0)
      throw std::invalid_argument("cournot: need d >= 1 and M >= 1");
    if (!(beta >= 1.0) || !(a > 0.0) || !(b > 0.0))
      throw std::invalid_argument("cournot: need beta >= 1, a > 0, b > 0");
    if (L.rows() != d || L.cols() != d)
      throw std::invalid_argument("cournot: L must be d x d");
    if (c.rows() != d || c.cols() != M)
      throw std::invalid_argument("cournot: c must be d x M");
    if (xstar.rows() != d || xstar.cols() != M)
      throw std::invalid_argument("cournot: xstar must be d x M");
    if (!(c.minCoeff() > 0.0))
      throw SynthesisError("cournot: marginal costs must be strictly "
                           "positive, got min entry " +
                           std::to_string(c.minCoeff()));
  }
};

// Price map p(total) = phi(L * total).
inline Vector cournot_price(const CournotGameSpec& spec,
                            const Eigen::Ref<const Vector>& total) {
  if (total.size() != spec.d)
    throw std::invalid_argument("cournot_price: total must have size d");
  Vector p(spec.d);
  const Vector z = spec.L * total;
  for (int h = 0; h < spec.d; ++h) {
    const double base = std::max(spec.a - spec.b * z[h], 0.0);
    p[h] = std::pow(base, spec.beta);
  }
  return p;
}

// Diagonal of the price-map derivative Dphi at L * total; clamped markets
// contribute a one-sided derivative of 0.
inline Vector cournot_price_slope(const CournotGameSpec& spec,
                                  const Eigen::Ref<const Vector>& total) {
  Vector dphi(spec.d);
  const Vector z = spec.L * total;
  for (int h = 0; h < spec.d; ++h) {
    const double base = spec.a - spec.b * z[h];
    dphi[h] = base > 0.0
                  ? -spec.b * spec.beta * std::pow(base, spec.beta - 1.0)
                  : 0.0;
  }
  return dphi;
}

// Gradient of E_m with respect to firm m's own quantities:
//   grad = c_m - p(x) - L^T Dphi(L sum x) x_m.
inline Vector cournot_gradient(const CournotGameSpec& spec, int m,
                               const Eigen::Ref<const Vector>& own,
                               const Eigen::Ref<const Matrix>& others) {
  if (m < 0 || m >= spec.M)
    throw std::invalid_argument("cournot_gradient: bad player index");
  if (own.size() != spec.d || others.rows() != spec.d ||
      others.cols() != spec.M - 1)
    throw std::invalid_argument("cournot_gradient: shape mismatch");
  Vector total = own;
  for (Eigen::Index j = 0; j < others.cols(); ++j) total += others.col(j);
  const Vector p = cournot_price(spec, total);
  const Vector dphi = cournot_price_slope(spec, total);
  return spec.c.col(m) - p -
         spec.L.transpose() * (dphi.asDiagonal() * own).eval();
}

inline GameProblem make_problem(const CournotGameSpec& spec) {
  GameProblem g;
  g.players = spec.M;
  g.dim = spec.d;
  g.cost = [spec](int m, const Eigen::Ref<const Vector>& own,
                  const Eigen::Ref<const Matrix>& others) {
    Vector total = own;
    for (Eigen::Index j = 0; j < others.cols(); ++j) total += others.col(j);
    const Vector p = cournot_price(spec, total);
    return own.dot(spec.c.col(m) - p);
  };
  return g;
}

// Builds the instance whose first-order conditions vanish at the supplied
// equilibrium: c_m = phi(L sum x*) + L^T Dphi(L sum x*) x*_m.
inline CournotGameSpec make_cournot_from_equilibrium(
    int d, int M, const Eigen::Ref<const Matrix>& xstar, double beta = 2.0,
    double a = 100.0, double b = 1e-3) {
  if (xstar.rows() != d || xstar.cols() != M)
    throw std::invalid_argument("make_cournot_from_equilibrium: xstar must "
                                "be d x M");
  Matrix L = Matrix::Identity(d, d) * 3.0 + Matrix::Ones(d, d);
  CournotGameSpec probe(d, M, beta, a, b, L, Matrix::Ones(d, M), xstar);
  const Vector total = xstar.rowwise().sum();
  const Vector p = cournot_price(probe, total);
  const Vector dphi = cournot_price_slope(probe, total);
  Matrix c(d, M);
  for (int m = 0; m < M; ++m)
    c.col(m) = p + L.transpose() * (dphi.asDiagonal() * xstar.col(m)).eval();
  return CournotGameSpec(d, M, beta, a, b, std::move(L), std::move(c),
                         xstar);
}

// Random instance: equilibrium quantities drawn uniformly from [0,10]^{d x M}.
inline CournotGameSpec synthesize_cournot(int d, int M, std::uint64_t seed,
                                          double beta = 2.0, double a = 100.0,
                                          double b = 1e-3) {
  Matrix xstar(d, M);
  for (int m = 0; m < M; ++m) {
    CounterStream stream(seed, kRngDomainSynth, 0, static_cast<std::uint64_t>(m),
                         0);
    for (int h = 0; h < d; ++h) xstar(h, m) = 10.0 * stream.next_uniform();
  }
  return make_cournot_from_equilibrium(d, M, xstar, beta, a, b);
}

}  // namespace nashcbo
