#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nashcbo/consensus.hpp"
#include "nashcbo/errors.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/parallel.hpp"
#include "nashcbo/rng.hpp"
#include "nashcbo/summation.hpp"

namespace nashcbo {

enum class NoiseMode { kAnisotropic, kIsotropic };

inline const char* to_string(NoiseMode mode) {
  return mode == NoiseMode::kAnisotropic ? "aniso" : "iso";
}

struct SolverParams {
  double lambda = 1.0;
  double sigma = 0.0;
  double alpha = 1.0;
  double dt = 1e-2;
  long steps = 100;      // K; the run performs exactly K Euler steps
  int particles = 100;   // N per player
  NoiseMode mode = NoiseMode::kAnisotropic;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Hard violations throw; soft theory violations come back as warnings that
// callers surface in the run manifest.
inline std::vector<std::string> validate_params(const SolverParams& p) {
  if (!(p.lambda > 0.0))
    throw std::invalid_argument("solver params: lambda must be > 0");
  if (!(p.sigma >= 0.0))
    throw std::invalid_argument("solver params: sigma must be >= 0");
  if (!(p.alpha >= 0.0))
    throw std::invalid_argument("solver params: alpha must be >= 0");
  if (!(p.dt > 0.0))
    throw std::invalid_argument("solver params: dt must be > 0");
  if (p.steps < 0)
    throw std::invalid_argument("solver params: steps must be >= 0");
  if (p.particles < 1)
    throw std::invalid_argument("solver params: need at least one particle");
  std::vector<std::string> warnings;
  if (!(2.0 * p.lambda > p.sigma * p.sigma))
    warnings.push_back(
        "variance-decay condition 2*lambda > sigma^2 violated (lambda=" +
        std::to_string(p.lambda) + ", sigma=" + std::to_string(p.sigma) +
        "); convergence is not guaranteed");
  if (p.lambda * p.dt > 1.0)
    warnings.push_back("lambda*dt exceeds 1; the explicit Euler drift step "
                       "overshoots the consensus point");
  return warnings;
}

// Particle ensemble: one d x N block per player, columns are particles.
struct Ensemble {
  std::vector<Matrix> players;
  long step = 0;
  double time = 0.0;

  int num_players() const { return static_cast<int>(players.size()); }
  int dim() const {
    return players.empty() ? 0 : static_cast<int>(players[0].rows());
  }
  int particles() const {
    return players.empty() ? 0 : static_cast<int>(players[0].cols());
  }
  bool all_finite() const {
    for (const auto& block : players)
      if (!block.allFinite()) return false;
    return true;
  }
};

// Gaussian initial data: particle i of player m is
//   center.col(m) + sqrt(variance) * z,  z ~ N(0, I_d),
// drawn from the counter stream keyed (seed, init-domain, m, i) in coordinate
// order, so the ensemble is a pure function of (shape, spec, seed).
struct InitSpec {
  Matrix center;          // d x M
  double variance = 1.0;  // isotropic covariance scale (variance * I)
};

inline Ensemble init_ensemble(const InitSpec& init, int particles,
                              std::uint64_t seed) {
  if (!(init.variance >= 0.0))
    throw std::invalid_argument("init: variance must be >= 0");
  if (particles < 1)
    throw std::invalid_argument("init: need at least one particle");
  const int d = static_cast<int>(init.center.rows());
  const int M = static_cast<int>(init.center.cols());
  if (d < 1 || M < 1)
    throw std::invalid_argument("init: center must be d x M with d, M >= 1");
  const double sd = std::sqrt(init.variance);
  Ensemble e;
  e.players.resize(M);
  std::vector<double> z(d);
  for (int m = 0; m < M; ++m) {
    e.players[m].resize(d, particles);
    for (int i = 0; i < particles; ++i) {
      CounterStream stream(seed, kRngDomainInit, 0,
                           static_cast<std::uint64_t>(m),
                           static_cast<std::uint64_t>(i));
      stream.fill_normals(z.data(), d);
      for (int h = 0; h < d; ++h)
        e.players[m](h, i) = init.center(h, m) + sd * z[h];
    }
  }
  return e;
}

// Per-player particle means (exact sums), used as the frozen opponent
// profile when evaluating one player's costs.
inline Matrix player_means(const Ensemble& e) {
  const int M = e.num_players();
  const int d = e.dim();
  const int N = e.particles();
  Matrix means(d, M);
  ExactAccumulator acc;
  for (int m = 0; m < M; ++m)
    for (int h = 0; h < d; ++h) {
      acc.reset();
      for (int i = 0; i < N; ++i) acc.add(e.players[m](h, i));
      means(h, m) = acc.total() / static_cast<double>(N);
    }
  return means;
}

// Opponent profile for player m: all player means except column m.
inline Matrix drop_column(const Eigen::Ref<const Matrix>& means, int m) {
  Matrix out(means.rows(), means.cols() - 1);
  Eigen::Index j = 0;
  for (Eigen::Index k = 0; k < means.cols(); ++k) {
    if (k == m) continue;
    out.col(j++) = means.col(k);
  }
  return out;
}

// Costs of every particle of every player against the frozen means of the
// others; non-finite costs mean the system has blown up.
inline Matrix evaluate_costs(const Ensemble& e, const GameProblem& game,
                             const Matrix& means, int threads) {
  const int M = e.num_players();
  const int N = e.particles();
  Matrix costs(N, M);
  std::vector<Matrix> others(M);
  for (int m = 0; m < M; ++m) others[m] = drop_column(means, m);
  parallel_for(0, static_cast<long>(M) * N, threads, [&](long idx) {
    const int m = static_cast<int>(idx / N);
    const int i = static_cast<int>(idx % N);
    costs(i, m) = game.cost(m, e.players[m].col(i), others[m]);
  });
  if (!costs.allFinite())
    throw DivergenceError("non-finite cost at step " + std::to_string(e.step),
                          e.step);
  return costs;
}

// Consensus point of every player, computed from one snapshot (all means and
// all costs frozen before anything moves).
inline Matrix consensus_points(const Ensemble& e, const GameProblem& game,
                               double alpha, int threads = 1) {
  const Matrix means = player_means(e);
  const Matrix costs = evaluate_costs(e, game, means, threads);
  const int M = e.num_players();
  Matrix cons(e.dim(), M);
  for (int m = 0; m < M; ++m)
    cons.col(m) = consensus_point(e.players[m], costs.col(m), alpha);
  return cons;
}

// Deterministic source of the standard normal increments; the default draws
// from the counter stream keyed (seed, step-domain, k, m, i).  Tests inject
// their own to pin trajectories.
struct NoiseSource {
  virtual ~NoiseSource() = default;
  virtual void standard_normals(long k, int m, long i, double* out,
                                int n) const = 0;
};

class CounterNoise final : public NoiseSource {
 public:
  explicit CounterNoise(std::uint64_t seed) : seed_(seed) {}
  void standard_normals(long k, int m, long i, double* out,
                        int n) const override {
    CounterStream stream(seed_, kRngDomainStep, static_cast<std::uint64_t>(k),
                         static_cast<std::uint64_t>(m),
                         static_cast<std::uint64_t>(i));
    stream.fill_normals(out, n);
  }

 private:
  std::uint64_t seed_ = 0;
};

// Euler-Maruyama update against a fixed consensus profile:
//   X <- X - lambda (X - xcons) dt + sigma D(X - xcons) dB,
// dB = sqrt(dt) z with z standard normal.  Anisotropic mode scales noise
// coordinatewise by the displacement, isotropic by its Euclidean norm.  A
// particle sitting exactly on the consensus point does not move.
inline void update_positions(Ensemble& e, const Matrix& consensus,
                             const SolverParams& params,
                             const NoiseSource& noise) {
  const int M = e.num_players();
  const int N = e.particles();
  const int d = e.dim();
  const double sqrt_dt = std::sqrt(params.dt);
  const long k = e.step;
  parallel_for(0, static_cast<long>(M) * N, params.threads, [&](long idx) {
    const int m = static_cast<int>(idx / N);
    const int i = static_cast<int>(idx % N);
    thread_local std::vector<double> z;
    z.resize(d);
    noise.standard_normals(k, m, i, z.data(), d);
    auto col = e.players[m].col(i);
    const auto target = consensus.col(m);
    if (params.mode == NoiseMode::kAnisotropic) {
      for (int h = 0; h < d; ++h) {
        const double disp = col[h] - target[h];
        col[h] -= params.lambda * disp * params.dt -
                  params.sigma * disp * sqrt_dt * z[h];
      }
    } else {
      double sq = 0.0;
      for (int h = 0; h < d; ++h) {
        const double disp = col[h] - target[h];
        sq += disp * disp;
      }
      const double scale = std::sqrt(sq);
      for (int h = 0; h < d; ++h) {
        const double disp = col[h] - target[h];
        col[h] -= params.lambda * disp * params.dt -
                  params.sigma * scale * sqrt_dt * z[h];
      }
    }
  });
  e.step += 1;
  e.time += params.dt;
  if (!e.all_finite())
    throw DivergenceError(
        "non-finite particle position after step " + std::to_string(e.step),
        e.step);
}

// One full iteration: snapshot consensus, then move every particle.
// Returns the consensus profile the update used (the pre-move snapshot).
inline Matrix step(Ensemble& e, const GameProblem& game,
                   const SolverParams& params, const NoiseSource& noise) {
  const Matrix cons = consensus_points(e, game, params.alpha, params.threads);
  update_positions(e, cons, params, noise);
  return cons;
}

inline Matrix step(Ensemble& e, const GameProblem& game,
                   const SolverParams& params) {
  const CounterNoise noise(params.seed);
  return step(e, game, params, noise);
}

struct RunResult {
  Ensemble ensemble;        // state after the final step
  Matrix final_consensus;   // consensus profile of that state
  long steps_done = 0;
};

// Observer invoked on the snapshot before each update and once more on the
// final state: steps+1 invocations, with the consensus profile of the
// observed state.
using StepCallback =
    std::function<void(const Ensemble&, const Matrix& consensus)>;

inline RunResult run(const GameProblem& game, const SolverParams& params,
                     Ensemble e, const StepCallback& observe = {}) {
  validate_params(params);
  if (e.num_players() != game.players || e.dim() != game.dim)
    throw std::invalid_argument("run: ensemble shape does not match game");
  const CounterNoise noise(params.seed);
  for (long k = 0; k < params.steps; ++k) {
    const Matrix cons =
        consensus_points(e, game, params.alpha, params.threads);
    if (observe) observe(e, cons);
    update_positions(e, cons, params, noise);
  }
  RunResult out;
  out.final_consensus =
      consensus_points(e, game, params.alpha, params.threads);
  if (observe) observe(e, out.final_consensus);
  out.steps_done = e.step;
  out.ensemble = std::move(e);
  return out;
}

inline RunResult run(const GameProblem& game, const SolverParams& params,
                     const InitSpec& init, const StepCallback& observe = {}) {
  return run(game, params,
             init_ensemble(init, params.particles, params.seed), observe);
}

}  // namespace nashcbo
