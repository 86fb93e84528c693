#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nashcbo/errors.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/summation.hpp"

namespace nashcbo {

// Gibbs weights w_i = exp(-alpha (E_i - min E)).  Shifting by the minimum
// makes the largest weight exactly 1 and the normalizer at least 1, so the
// computation cannot overflow and is exactly invariant under adding a
// constant to every cost.  Underflow of far-from-optimal weights to 0 is
// accepted behavior at large alpha.
inline Vector consensus_weights(const Eigen::Ref<const Vector>& costs,
                                double alpha) {
  if (costs.size() == 0)
    throw std::invalid_argument("consensus_weights: empty cost vector");
  if (!(alpha >= 0.0))
    throw std::invalid_argument("consensus_weights: alpha must be >= 0");
  if (!costs.allFinite())
    throw std::invalid_argument("consensus_weights: non-finite cost");
  const double emin = costs.minCoeff();
  Vector w(costs.size());
  for (Eigen::Index i = 0; i < costs.size(); ++i)
    w[i] = std::exp(-alpha * (costs[i] - emin));
  return w;
}

// Weighted average of the sample positions (columns) under the Gibbs
// weights.  Sums are accumulated exactly, so the result is a pure function
// of the (position, cost) multiset; a final clamp to the per-coordinate
// sample hull keeps the convex-combination contract under the one rounding
// the division can introduce.
inline Vector consensus_point(const Eigen::Ref<const Matrix>& positions,
                              const Eigen::Ref<const Vector>& costs,
                              double alpha) {
  if (positions.cols() != costs.size())
    throw std::invalid_argument("consensus_point: one cost per column");
  if (positions.cols() == 0)
    throw std::invalid_argument("consensus_point: empty sample");
  const Vector w = consensus_weights(costs, alpha);
  ExactAccumulator den_acc;
  for (Eigen::Index i = 0; i < w.size(); ++i) den_acc.add(w[i]);
  const double den = den_acc.total();
  const Eigen::Index d = positions.rows();
  Vector out(d);
  ExactAccumulator num_acc;
  for (Eigen::Index h = 0; h < d; ++h) {
    num_acc.reset();
    for (Eigen::Index i = 0; i < positions.cols(); ++i)
      num_acc.add(w[i] * positions(h, i));
    double v = num_acc.total() / den;
    const double lo = positions.row(h).minCoeff();
    const double hi = positions.row(h).maxCoeff();
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    out[h] = v;
  }
  return out;
}

// Empirical log-sum-exp functional -(1/alpha) log( (1/N) sum exp(-alpha E) ),
// evaluated in min-shifted form.  Lies in [min E, min E + log(N)/alpha].
inline double laplace_value(const Eigen::Ref<const Vector>& costs,
                            double alpha) {
  if (costs.size() == 0)
    throw std::invalid_argument("laplace_value: empty cost vector");
  if (!(alpha > 0.0))
    throw std::invalid_argument("laplace_value: alpha must be > 0");
  if (!costs.allFinite())
    throw std::invalid_argument("laplace_value: non-finite cost");
  const double emin = costs.minCoeff();
  ExactAccumulator acc;
  for (Eigen::Index i = 0; i < costs.size(); ++i)
    acc.add(std::exp(-alpha * (costs[i] - emin)));
  const double mean = acc.total() / static_cast<double>(costs.size());
  return emin - std::log(mean) / alpha;
}

// Gap between the log-sum-exp functional and the sample minimum; always in
// [0, log(N)/alpha] and shrinking as alpha grows.
inline double laplace_gap(const Eigen::Ref<const Vector>& costs,
                          double alpha) {
  return laplace_value(costs, alpha) - costs.minCoeff();
}

// Sup of |E(x) - E(xbar)| over the radius-r interval around xbar, by dense
// grid search (endpoints included).
inline double discrepancy_sup(const std::function<double(double)>& cost,
                              double xbar, double r, int grid_n = 10000) {
  if (!(r > 0.0)) throw std::invalid_argument("discrepancy_sup: need r > 0");
  if (grid_n < 2)
    throw std::invalid_argument("discrepancy_sup: need at least 2 grid points");
  const double at_center = cost(xbar);
  double sup = 0.0;
  for (int j = 0; j < grid_n; ++j) {
    const double x =
        xbar - r + 2.0 * r * static_cast<double>(j) / (grid_n - 1);
    const double dev = std::fabs(cost(x) - at_center);
    if (dev > sup) sup = dev;
  }
  return sup;
}

// Own-coordinate slice of a 1-D quadratic game with the other players frozen.
inline double discrepancy_sup(const QuadraticGameSpec& spec, int m,
                              const Eigen::Ref<const Vector>& others,
                              double xbar, double r, int grid_n = 10000) {
  const GameProblem g = make_problem(spec);
  Matrix oth(1, spec.players() - 1);
  oth.row(0) = others.transpose();
  return discrepancy_sup(
      [&](double x) {
        Vector own(1);
        own[0] = x;
        return g.cost(m, own, oth);
      },
      xbar, r, grid_n);
}

inline double discrepancy_sup(const PerturbedQuadraticGameSpec& spec, int m,
                              const Eigen::Ref<const Vector>& others,
                              double xbar, double r, int grid_n = 10000) {
  const GameProblem g = make_problem(spec);
  Matrix oth(1, spec.players() - 1);
  oth.row(0) = others.transpose();
  return discrepancy_sup(
      [&](double x) {
        Vector own(1);
        own[0] = x;
        return g.cost(m, own, oth);
      },
      xbar, r, grid_n);
}

struct QuantLaplaceResult {
  double lhs = 0.0;        // |xbar - consensus|
  double rhs = 0.0;        // (2q)^nu / eta + exp(-alpha q) * mean / mass
  double ball_fraction = 0.0;
  bool holds = false;
};

// Computable consensus-quality bound: the distance from a reference point to
// the sample consensus is controlled by a local-growth term plus an
// exponentially small term weighted by the inverse mass near the reference.
//   lhs = |xbar - consensus(sample)|
//   rhs = (2q)^nu / eta
//         + exp(-alpha q) * mean_i |x_i - xbar| / frac{i : |x_i - xbar|_inf <= r}
// Requires 0 < q <= E_inf / 2 and a nonempty ball.
inline QuantLaplaceResult quantitative_laplace_check(
    const Eigen::Ref<const Matrix>& positions,
    const Eigen::Ref<const Vector>& costs,
    const Eigen::Ref<const Vector>& xbar, double q, double r, double alpha,
    double nu, double eta, double e_inf) {
  if (positions.rows() != xbar.size())
    throw std::invalid_argument("quantitative_laplace_check: dim mismatch");
  if (!(q > 0.0) || !(q <= 0.5 * e_inf))
    throw std::invalid_argument(
        "quantitative_laplace_check: need 0 < q <= E_inf / 2");
  if (!(r > 0.0) || !(nu > 0.0) || !(eta > 0.0))
    throw std::invalid_argument(
        "quantitative_laplace_check: need r, nu, eta > 0");
  const Eigen::Index n = positions.cols();
  Eigen::Index in_ball = 0;
  ExactAccumulator mean_acc;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = positions.col(i) - xbar;
    mean_acc.add(diff.norm());
    if (diff.lpNorm<Eigen::Infinity>() <= r) ++in_ball;
  }
  if (in_ball == 0)
    throw std::invalid_argument(
        "quantitative_laplace_check: no sample mass in the ball B_r(xbar)");
  QuantLaplaceResult out;
  out.ball_fraction =
      static_cast<double>(in_ball) / static_cast<double>(n);
  const Vector cons = consensus_point(positions, costs, alpha);
  out.lhs = (xbar - cons).norm();
  const double mean_dist = mean_acc.total() / static_cast<double>(n);
  out.rhs = std::pow(2.0 * q, nu) / eta +
            std::exp(-alpha * q) * mean_dist / out.ball_fraction;
  out.holds = out.lhs <= out.rhs + 1e-12;
  return out;
}

}  // namespace nashcbo
