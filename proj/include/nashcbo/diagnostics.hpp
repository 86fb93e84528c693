#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nashcbo/cournot.hpp"
#include "nashcbo/dynamics.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/summation.hpp"

namespace nashcbo {

// Cumulative squared distance of the ensemble to a reference profile:
//   V^m = (1/N) sum_i |X^{m,i} - xstar_m|^2,   V = sum_m V^m.
// Exact accumulation keeps the value independent of particle order.
inline std::pair<double, Vector> variance_to_point(const Ensemble& e,
                                                   const NashPoint& xstar) {
  const int M = e.num_players();
  const int d = e.dim();
  const int N = e.particles();
  if (xstar.rows() != d || xstar.cols() != M)
    throw std::invalid_argument("variance_to_point: reference shape mismatch");
  Vector per_player(M);
  ExactAccumulator acc;
  for (int m = 0; m < M; ++m) {
    acc.reset();
    for (int i = 0; i < N; ++i) {
      double sq = 0.0;
      for (int h = 0; h < d; ++h) {
        const double diff = e.players[m](h, i) - xstar(h, m);
        sq += diff * diff;
      }
      acc.add(sq);
    }
    per_player[m] = acc.total() / static_cast<double>(N);
  }
  ExactAccumulator total;
  for (int m = 0; m < M; ++m) total.add(per_player[m]);
  return {total.total(), std::move(per_player)};
}

// Euclidean norm of the stacked own-gradients of every player; zero exactly
// at an interior equilibrium.
inline double residual_norm(const CournotGameSpec& spec,
                            const Eigen::Ref<const Matrix>& x) {
  if (x.rows() != spec.d || x.cols() != spec.M)
    throw std::invalid_argument("residual_norm: profile must be d x M");
  double sq = 0.0;
  for (int m = 0; m < spec.M; ++m) {
    const Vector g = cournot_gradient(spec, m, x.col(m), drop_column(x, m));
    sq += g.squaredNorm();
  }
  return std::sqrt(sq);
}

// Smooth bump supported on the product of radius-r max-norm balls around the
// columns of xstar; equals 1 exactly at xstar and 0 on and outside the
// boundary.
inline double mollifier(const Eigen::Ref<const Matrix>& x,
                        const NashPoint& xstar, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("mollifier: need r > 0");
  if (x.rows() != xstar.rows() || x.cols() != xstar.cols())
    throw std::invalid_argument("mollifier: shape mismatch");
  const double r2 = r * r;
  double log_sum = 0.0;
  for (Eigen::Index m = 0; m < x.cols(); ++m)
    for (Eigen::Index h = 0; h < x.rows(); ++h) {
      const double y = x(h, m) - xstar(h, m);
      const double y2 = y * y;
      if (y2 >= r2) return 0.0;
      log_sum += 1.0 - r2 / (r2 - y2);
    }
  return std::exp(log_sum);
}

// Mean-field decay rate guaranteed for the variance functional: V(t) decays
// at least like exp(-(2 lambda - sigma^2) t / 2) while the consensus stays
// accurate.  May be negative; callers interpret.
inline double predicted_rate(double lambda, double sigma) {
  return (2.0 * lambda - sigma * sigma) / 2.0;
}

// Time horizon after which the guaranteed decay has brought V(0) down to
// epsilon.  The underlying statement assumes V(0) >= 2 epsilon > 0.
inline double t_epsilon(double v0, double epsilon, double lambda,
                        double sigma) {
  const double gap = 2.0 * lambda - sigma * sigma;
  if (!(gap > 0.0))
    throw std::invalid_argument("t_epsilon: requires 2*lambda > sigma^2");
  if (!(epsilon > 0.0) || !(v0 >= 2.0 * epsilon))
    throw std::invalid_argument("t_epsilon: requires V0 >= 2*epsilon > 0");
  return 2.0 / gap * std::log(v0 / epsilon);
}

// Consensus-accuracy constant
//   c3 = min{ (2 lambda - sigma^2) / (8 sqrt(M) (lambda + sigma^2)),
//             sqrt((2 lambda - sigma^2) / (4 M sigma^2)) }.
inline double c3_constant(double lambda, double sigma, int players) {
  if (players < 1)
    throw std::invalid_argument("c3_constant: need at least one player");
  if (!(sigma > 0.0))
    throw std::invalid_argument(
        "c3_constant: sigma = 0 leaves the second branch undefined");
  const double gap = 2.0 * lambda - sigma * sigma;
  if (!(gap > 0.0))
    throw std::invalid_argument("c3_constant: requires 2*lambda > sigma^2");
  const double m = static_cast<double>(players);
  const double first = gap / (8.0 * std::sqrt(m) * (lambda + sigma * sigma));
  const double second = std::sqrt(gap / (4.0 * m * sigma * sigma));
  return std::min(first, second);
}

// Whether a supplied best-response Lipschitz constant satisfies the
// convergence theorem's smallness requirement c1 <= c3 / 4.
inline bool c1_condition_holds(double c1, double lambda, double sigma,
                               int players) {
  return c1 <= 0.25 * c3_constant(lambda, sigma, players);
}

// Right-hand side of the per-player variance differential inequality:
//   dV^m/dt <= -(2 lambda - sigma^2) V^m
//              + 2 (lambda + sigma^2) sqrt(V^m) dist + sigma^2 dist^2,
// with dist the consensus-to-equilibrium distance of player m.
inline double lemma_rhs(double v_m, double dist, double lambda, double sigma) {
  if (!(v_m >= 0.0) || !(dist >= 0.0))
    throw std::invalid_argument("lemma_rhs: V_m and dist must be >= 0");
  const double s2 = sigma * sigma;
  return -(2.0 * lambda - s2) * v_m +
         2.0 * (lambda + s2) * std::sqrt(v_m) * dist + s2 * dist * dist;
}

// Per-step observables of a run.  The residual field is populated only for
// games that define one (Cournot).
struct TraceRecord {
  long step = 0;
  double t = 0.0;
  double V = 0.0;
  Vector V_m;                       // per player
  std::optional<double> residual;
  Matrix consensus;                 // d x M
  Vector consensus_dist;            // |xstar_m - consensus_m| per player
};

inline TraceRecord make_trace_record(
    const Ensemble& e, const Matrix& consensus, const NashPoint& xstar,
    const std::function<double(const Matrix&)>& residual_fn = {}) {
  TraceRecord rec;
  rec.step = e.step;
  rec.t = e.time;
  auto [total, per_player] = variance_to_point(e, xstar);
  rec.V = total;
  rec.V_m = std::move(per_player);
  rec.consensus = consensus;
  rec.consensus_dist.resize(consensus.cols());
  for (Eigen::Index m = 0; m < consensus.cols(); ++m)
    rec.consensus_dist[m] = (xstar.col(m) - consensus.col(m)).norm();
  if (residual_fn) rec.residual = residual_fn(consensus);
  return rec;
}

struct DecayFit {
  double rate = 0.0;       // negated slope of log V against t
  double intercept = 0.0;  // fitted log V at t = 0
  double t0 = 0.0;
  double t1 = 0.0;
  double r_squared = 0.0;
};

struct FitWindow {
  double t0 = 0.0;
  double t1 = 0.0;
};

// Least-squares line through (t, log V) restricted to the window.
inline DecayFit fit_decay_rate(const std::vector<std::pair<double, double>>& trace,
                               FitWindow window) {
  std::vector<double> ts, logs;
  for (const auto& [t, v] : trace) {
    if (t < window.t0 || t > window.t1) continue;
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(
          "fit_decay_rate: nonpositive or non-finite V inside the window");
    ts.push_back(t);
    logs.push_back(std::log(v));
  }
  const std::size_t n = ts.size();
  if (n < 2)
    throw std::invalid_argument("fit_decay_rate: need at least 2 points in "
                                "the window");
  double mean_t = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_t += ts[i];
    mean_y += logs[i];
  }
  mean_t /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = ts[i] - mean_t;
    const double dy = logs[i] - mean_y;
    sxx += dt * dt;
    sxy += dt * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0))
    throw std::invalid_argument("fit_decay_rate: window has no time spread");
  const double slope = sxy / sxx;
  DecayFit fit;
  fit.rate = -slope;
  fit.intercept = mean_y - slope * mean_t;
  fit.t0 = window.t0;
  fit.t1 = window.t1;
  // A flat series has nothing to explain; treat rounding-level spread in the
  // log values as flat rather than letting r^2 collapse to 0/0 noise.
  const double flat_tol = 1e-14 * (std::fabs(mean_y) + 1.0);
  fit.r_squared = syy > static_cast<double>(n) * flat_tol * flat_tol
                      ? (sxy * sxy) / (sxx * syy)
                      : 1.0;
  return fit;
}

// Default window: the middle [0.2 T, 0.8 T] of the run, restricted to times
// before V stagnates at its accuracy floor (taken as floor_factor times the
// trace minimum).
inline FitWindow default_fit_window(
    const std::vector<std::pair<double, double>>& trace,
    double floor_factor = 10.0) {
  if (trace.size() < 2)
    throw std::invalid_argument("default_fit_window: need at least 2 points");
  const double t_end = trace.back().first;
  double v_min = std::numeric_limits<double>::infinity();
  for (const auto& [t, v] : trace)
    if (v < v_min) v_min = v;
  double t_stag = t_end;
  // A floor is only detectable when the trace spans more than floor_factor;
  // otherwise every point is "near the minimum" and no cap applies.
  if (trace.front().second > floor_factor * v_min) {
    for (const auto& [t, v] : trace)
      if (v <= floor_factor * v_min) {
        t_stag = t;
        break;
      }
  }
  return {0.2 * t_end, std::min(0.8 * t_end, t_stag)};
}

// Window from the start of the run until V first reaches floor_factor times
// its final floor; covers the decaying segment of fast runs whose tail is
// all stagnation.
inline FitWindow prestagnation_window(
    const std::vector<std::pair<double, double>>& trace,
    double floor_factor = 10.0) {
  if (trace.size() < 2)
    throw std::invalid_argument("prestagnation_window: need at least 2 points");
  double v_min = std::numeric_limits<double>::infinity();
  for (const auto& [t, v] : trace)
    if (v < v_min) v_min = v;
  double t_stag = trace.back().first;
  if (trace.front().second > floor_factor * v_min) {
    for (const auto& [t, v] : trace)
      if (v <= floor_factor * v_min) {
        t_stag = t;
        break;
      }
  }
  if (!(t_stag > 0.0)) t_stag = trace.back().first;
  return {0.0, t_stag};
}

// First step index at which the statistic drops to the threshold, or -1 if
// it never does.
inline long first_passage_step(
    const std::vector<std::pair<long, double>>& step_values,
    double threshold) {
  for (const auto& [k, v] : step_values)
    if (v <= threshold) return k;
  return -1;
}

}  // namespace nashcbo
