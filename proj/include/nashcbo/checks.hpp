#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nashcbo/consensus.hpp"
#include "nashcbo/cournot.hpp"
#include "nashcbo/diagnostics.hpp"
#include "nashcbo/dynamics.hpp"
#include "nashcbo/experiments.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/rng.hpp"

namespace nashcbo {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {
inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}
}  // namespace detail

// Gap decay of the log-sum-exp functional on a fixed 200-sample measure:
// the gap stays below log(N)/alpha at every tested alpha and is below 1e-5
// at alpha = 1e6.
inline CheckResult check_laplace() {
  CheckResult out{"laplace", true, ""};
  const int n = 200;
  Vector costs(n);
  CounterStream stream(12345, kRngDomainSynth, 7, 0, 0);
  for (int i = 0; i < n; ++i) costs[i] = 5.0 * stream.next_uniform();
  const double bound_n = std::log(static_cast<double>(n));
  double gap_last = 0.0;
  double prev_gap = std::numeric_limits<double>::infinity();
  for (int p = 0; p <= 6; ++p) {
    const double alpha = std::pow(10.0, p);
    const double gap = laplace_gap(costs, alpha);
    if (!(gap >= 0.0) || !(gap <= bound_n / alpha + 1e-15)) {
      out.pass = false;
      out.detail = "gap bound violated at alpha=1e" + std::to_string(p);
      return out;
    }
    if (gap > prev_gap + 1e-15) {
      out.pass = false;
      out.detail = "gap not non-increasing at alpha=1e" + std::to_string(p);
      return out;
    }
    prev_gap = gap;
    gap_last = gap;
  }
  if (!(gap_last <= 1e-5)) {
    out.pass = false;
    out.detail = "gap at alpha=1e6 is " + detail::fmt(gap_last);
    return out;
  }
  out.detail = "gap(1e6) = " + detail::fmt(gap_last);
  return out;
}

// Quantitative consensus bound on random one-dimensional quadratic-game
// empirical measures.  The constants follow the local-growth construction:
// the own-coordinate slice has curvature a^2, so inverse continuity holds
// with nu = 1/2 and eta = a/sqrt(2), the far-field level outside radius
// R0 = 2 is E_inf = 2 a^2, and q = E_inf/4 dominates the measured
// discrepancy for r <= 1.
inline CheckResult check_quantlaplace() {
  CheckResult out{"quantlaplace", true, ""};
  const int cases = 100;
  const int n = 200;
  const double alphas[3] = {1.0, 1e2, 1e4};
  int tested = 0;
  for (int c = 0; c < cases; ++c) {
    CounterStream stream(777, kRngDomainSynth, static_cast<std::uint64_t>(c),
                         1, 0);
    Vector a(4), b(4);
    for (int m = 0; m < 4; ++m) a[m] = 4.5 + 3.5 * stream.next_uniform();
    for (int m = 0; m < 4; ++m) b[m] = 4.0 * stream.next_uniform() - 2.0;
    const QuadraticGameSpec spec(a, b);
    const int m = static_cast<int>(stream.next_u64() % 4);
    Vector others(3);
    for (int j = 0; j < 3; ++j)
      others[j] = 2.0 * stream.next_uniform() - 1.0;
    const double xbar_val = best_response_quadratic(spec, m, others);
    const double offset = stream.next_uniform() - 0.5;
    const double r = 0.5 + 0.5 * stream.next_uniform();

    Matrix positions(1, n);
    std::vector<double> z(n);
    CounterStream sample_stream(777, kRngDomainInit,
                                static_cast<std::uint64_t>(c), 2, 0);
    sample_stream.fill_normals(z.data(), n);
    for (int i = 0; i < n; ++i)
      positions(0, i) = xbar_val + offset + z[i];

    const GameProblem g = make_problem(spec);
    Matrix oth(1, 3);
    oth.row(0) = others.transpose();
    Vector costs(n);
    for (int i = 0; i < n; ++i)
      costs[i] = g.cost(m, positions.col(i), oth);

    const double curvature = spec.a[m];  // slice is (curvature^2/2)(x-xbar)^2
    const double nu = 0.5;
    const double eta = curvature / std::sqrt(2.0);
    const double r0 = 2.0;
    const double e_inf = 0.5 * curvature * curvature * r0 * r0;
    const double q = 0.25 * e_inf;
    const double e_r = discrepancy_sup(spec, m, others, xbar_val, r, 2001);
    if (!(e_r <= q)) {
      out.pass = false;
      out.detail = "construction invalid: E_r > q in case " +
                   std::to_string(c);
      return out;
    }
    Vector xbar(1);
    xbar[0] = xbar_val;
    for (double alpha : alphas) {
      const auto res = quantitative_laplace_check(positions, costs, xbar, q,
                                                  r, alpha, nu, eta, e_inf);
      ++tested;
      if (!res.holds) {
        out.pass = false;
        std::ostringstream os;
        os << "violated in case " << c << " at alpha=" << alpha
           << " (lhs=" << res.lhs << ", rhs=" << res.rhs << ")";
        out.detail = os.str();
        return out;
      }
    }
  }
  out.detail = std::to_string(tested) + " inequalities hold";
  return out;
}

// Analytic own-gradient of the Cournot cost against central finite
// differences at random interior (non-clamped) points.
inline CheckResult check_gradient() {
  CheckResult out{"gradient", true, ""};
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const int d = 1 + inst;  // dimensions 1..10
    const int M = 4;
    const CournotGameSpec spec =
        synthesize_cournot(d, M, 9000 + static_cast<std::uint64_t>(inst));
    const GameProblem g = make_problem(spec);
    for (int pt = 0; pt < 10; ++pt) {
      CounterStream stream(4242, kRngDomainSynth,
                           static_cast<std::uint64_t>(inst),
                           static_cast<std::uint64_t>(pt), 0);
      Matrix x(d, M);
      for (int m = 0; m < M; ++m)
        for (int h = 0; h < d; ++h) x(h, m) = 10.0 * stream.next_uniform();
      const int m = static_cast<int>(stream.next_u64() % M);
      const Matrix others = drop_column(x, m);
      const Vector grad = cournot_gradient(spec, m, x.col(m), others);
      Vector fd(d);
      Vector own = x.col(m);
      for (int h = 0; h < d; ++h) {
        // Costs here are O(1e5), so subtractive cancellation dominates the
        // central-difference error; the cost is near-quadratic in each
        // coordinate (third derivatives O(b^2)), so a step of 1e-4 keeps
        // truncation negligible while pushing rounding noise below 1e-7.
        const double step = 1e-4 * std::max(1.0, std::fabs(own[h]));
        const double keep = own[h];
        own[h] = keep + step;
        const double up = g.cost(m, own, others);
        own[h] = keep - step;
        const double dn = g.cost(m, own, others);
        own[h] = keep;
        fd[h] = (up - dn) / (2.0 * step);
      }
      const double rel =
          (fd - grad).norm() / std::max(1e-8, grad.norm());
      if (rel > worst) worst = rel;
    }
  }
  if (!(worst <= 1e-6)) {
    out.pass = false;
    out.detail = "max relative error " + detail::fmt(worst);
    return out;
  }
  out.detail = "max relative error " + detail::fmt(worst);
  return out;
}

// Consensus versus a naive direct-summation oracle on well-scaled inputs,
// plus exact invariance under representable cost shifts.
inline CheckResult check_consensus() {
  CheckResult out{"consensus", true, ""};
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    CounterStream stream(31337, kRngDomainSynth,
                         static_cast<std::uint64_t>(c), 3, 0);
    const int n = 2 + static_cast<int>(stream.next_u64() % 49);
    const int d = 1 + static_cast<int>(stream.next_u64() % 3);
    const double alpha = (c % 3 == 0) ? 0.5 : (c % 3 == 1 ? 1.0 : 5.0);
    const double cost_range = 30.0 / alpha;
    Matrix positions(d, n);
    std::vector<double> z(d);
    for (int i = 0; i < n; ++i) {
      stream.fill_normals(z.data(), d);
      for (int h = 0; h < d; ++h) positions(h, i) = 2.0 * z[h];
    }
    // costs on the 2^-20 dyadic grid so shifted sums stay exact
    Vector costs(n);
    const double grid = 0x1.0p-20;
    const double cells = std::floor(cost_range / grid);
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<double>(
          stream.next_u64() % static_cast<std::uint64_t>(cells + 1));
      costs[i] = k * grid;
    }

    // naive oracle: unshifted weights, left-to-right accumulation
    Vector naive(d);
    {
      double den = 0.0;
      Vector num = Vector::Zero(d);
      for (int i = 0; i < n; ++i) {
        const double w = std::exp(-alpha * costs[i]);
        den += w;
        num += w * positions.col(i);
      }
      naive = num / den;
    }
    const Vector mine = consensus_point(positions, costs, alpha);
    const double rel = (mine - naive).norm() / std::max(1.0, naive.norm());
    if (rel > worst) worst = rel;

    // representable shift: an integer multiple of the grid, up to ~1024
    const auto j = static_cast<double>(stream.next_u64() % (1u << 30));
    const double shift = (j - (1u << 29)) * grid;
    const Vector shifted = consensus_point(positions,
                                           (costs.array() + shift).matrix(),
                                           alpha);
    if (!(shifted.array() == mine.array()).all()) {
      out.pass = false;
      out.detail = "shift changed consensus bits in case " +
                   std::to_string(c);
      return out;
    }
  }
  if (!(worst <= 1e-12)) {
    out.pass = false;
    out.detail = "max relative deviation from oracle " + detail::fmt(worst);
    return out;
  }
  out.detail = "max relative deviation from oracle " + detail::fmt(worst);
  return out;
}

// Statistical check of the variance differential inequality on the convex
// quadratic benchmark: across 20 seeds, the seed-averaged centered finite
// difference of V^m stays below the seed-averaged right-hand side plus
// three standard errors of the difference, at 95% of interior steps.
inline CheckResult check_lemma(int seeds = 20, int particles = 10000,
                               long steps = 100) {
  CheckResult out{"lemma", true, ""};
  const QuadraticGameSpec spec(default_quad_a(), default_quad_b());
  const GameProblem g = make_problem(spec);
  const NashPoint xstar = quadratic_nash(spec);

  SolverParams params;
  params.lambda = 5.0;
  params.sigma = 0.1;
  params.alpha = 1e7;
  params.dt = 1e-3;
  params.steps = steps;
  params.particles = particles;
  params.mode = NoiseMode::kAnisotropic;

  InitSpec init;
  init.center = xstar;
  const Vector offset = default_quad_offset();
  for (int m = 0; m < 4; ++m) init.center(0, m) += offset[m];
  init.variance = 5.0;

  const long records = steps + 1;
  const int M = spec.players();
  // per seed, per step, per player: V^m and consensus distance
  std::vector<std::vector<Vector>> vs(seeds), dists(seeds);
  for (int s = 0; s < seeds; ++s) {
    params.seed = 1000 + static_cast<std::uint64_t>(s);
    std::vector<Vector>& v_rows = vs[s];
    std::vector<Vector>& d_rows = dists[s];
    v_rows.reserve(records);
    d_rows.reserve(records);
    run(g, params, init, [&](const Ensemble& e, const Matrix& cons) {
      TraceRecord rec = make_trace_record(e, cons, xstar);
      v_rows.push_back(rec.V_m);
      d_rows.push_back(rec.consensus_dist);
    });
  }

  long pass_count = 0, total = 0;
  for (long k = 1; k + 1 < records; ++k) {
    for (int m = 0; m < M; ++m) {
      // D_s = centered FD of V^m minus the inequality's right-hand side
      double mean = 0.0, sq = 0.0;
      for (int s = 0; s < seeds; ++s) {
        const double fd =
            (vs[s][k + 1][m] - vs[s][k - 1][m]) / (2.0 * params.dt);
        const double rhs = lemma_rhs(vs[s][k][m], dists[s][k][m],
                                     params.lambda, params.sigma);
        const double diff = fd - rhs;
        mean += diff;
        sq += diff * diff;
      }
      mean /= seeds;
      const double var =
          (sq - seeds * mean * mean) / static_cast<double>(seeds - 1);
      const double se = std::sqrt(std::max(0.0, var) / seeds);
      ++total;
      if (mean <= 3.0 * se) ++pass_count;
    }
  }
  const double frac =
      static_cast<double>(pass_count) / static_cast<double>(total);
  std::ostringstream os;
  os << "inequality holds at " << 100.0 * frac << "% of steps";
  out.detail = os.str();
  out.pass = frac >= 0.95;
  return out;
}

inline std::vector<CheckResult> run_checks(const std::string& only = "") {
  std::vector<CheckResult> results;
  const auto want = [&](const char* name) {
    return only.empty() || only == name;
  };
  if (want("laplace")) results.push_back(check_laplace());
  if (want("quantlaplace")) results.push_back(check_quantlaplace());
  if (want("gradient")) results.push_back(check_gradient());
  if (want("consensus")) results.push_back(check_consensus());
  if (want("lemma")) results.push_back(check_lemma());
  return results;
}

}  // namespace nashcbo
