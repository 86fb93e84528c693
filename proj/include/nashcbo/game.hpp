#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>

#include "nashcbo/errors.hpp"

namespace nashcbo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Strategy profile with one column per player; a Nash point is a d x M matrix.
using NashPoint = Matrix;

// A game as the solver sees it: M players, d-dimensional strategies, and a
// per-player cost E_m(own; others).  `others` carries the remaining players'
// strategies as columns in increasing player order with column m removed.
// Player indices are 0-based throughout.
struct GameProblem {
  int players = 0;
  int dim = 0;
  std::function<double(int, const Eigen::Ref<const Vector>&,
                       const Eigen::Ref<const Matrix>&)>
      cost;
};

// Checked evaluation: validates shapes and rejects non-finite results.
inline double eval_cost(const GameProblem& game, int m,
                        const Eigen::Ref<const Vector>& own,
                        const Eigen::Ref<const Matrix>& others) {
  if (m < 0 || m >= game.players)
    throw EvaluationError("player index " + std::to_string(m) +
                              " out of range [0," +
                              std::to_string(game.players) + ")",
                          m);
  if (own.size() != game.dim || others.rows() != game.dim ||
      others.cols() != game.players - 1)
    throw EvaluationError("strategy shape mismatch for player " +
                              std::to_string(m),
                          m);
  const double value = game.cost(m, own, others);
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "non-finite cost for player " << m << " at own="
       << own.transpose();
    throw EvaluationError(os.str(), m);
  }
  return value;
}

// One-dimensional quadratic game: player m minimizes
//   E_m(x_m; x_{-m}) = 1/2 (a_m x_m - sum_{i != m} x_i - b_m)^2.
// The coupling matrix A (diag a_m, off-diagonal -1) is strictly diagonally
// dominant when a_m > M, which guarantees a unique Nash point.
struct QuadraticGameSpec {
  Vector a;
  Vector b;

  QuadraticGameSpec(Vector a_in, Vector b_in)
      : a(std::move(a_in)), b(std::move(b_in)) {
    if (a.size() == 0 || a.size() != b.size())
      throw std::invalid_argument("quadratic game: a and b must be nonempty "
                                  "and equally sized");
    const auto M = static_cast<double>(a.size());
    for (Eigen::Index m = 0; m < a.size(); ++m) {
      if (!(a[m] > M))
        throw std::invalid_argument(
            "quadratic game: need a_m > M for every player (a[" +
            std::to_string(m) + "] = " + std::to_string(a[m]) + ", M = " +
            std::to_string(a.size()) + ")");
    }
  }

  int players() const { return static_cast<int>(a.size()); }
};

// Coupling matrix A with A_mm = a_m and A_mi = -1 for i != m.
inline Matrix quadratic_coupling(const QuadraticGameSpec& spec) {
  const int M = spec.players();
  Matrix A = Matrix::Constant(M, M, -1.0);
  for (int m = 0; m < M; ++m) A(m, m) = spec.a[m];
  return A;
}

// Unique Nash point of the quadratic game, as a 1 x M strategy profile.
// Solves A x = b and verifies the residual.
inline NashPoint quadratic_nash(const QuadraticGameSpec& spec) {
  const Matrix A = quadratic_coupling(spec);
  const Vector x = A.partialPivLu().solve(spec.b);
  const double resid = (A * x - spec.b).lpNorm<Eigen::Infinity>();
  const double scale = std::max(1.0, spec.b.lpNorm<Eigen::Infinity>());
  if (!(resid <= 1e-12 * scale))
    throw std::runtime_error("quadratic_nash: linear solve residual " +
                             std::to_string(resid) + " out of tolerance");
  NashPoint out(1, spec.players());
  out.row(0) = x.transpose();
  return out;
}

// Best response of player m to the other players' scalar strategies:
// argmin of E_m is (sum(y) + b_m) / a_m.
inline double best_response_quadratic(const QuadraticGameSpec& spec, int m,
                                      const Eigen::Ref<const Vector>& y) {
  if (m < 0 || m >= spec.players())
    throw std::invalid_argument("best_response_quadratic: bad player index");
  if (y.size() != spec.players() - 1)
    throw std::invalid_argument("best_response_quadratic: y must hold the "
                                "other M-1 strategies");
  return (y.sum() + spec.b[m]) / spec.a[m];
}

inline GameProblem make_problem(const QuadraticGameSpec& spec) {
  GameProblem g;
  g.players = spec.players();
  g.dim = 1;
  g.cost = [spec](int m, const Eigen::Ref<const Vector>& own,
                  const Eigen::Ref<const Matrix>& others) {
    const double u = spec.a[m] * own[0] - others.row(0).sum() - spec.b[m];
    return 0.5 * u * u;
  };
  return g;
}

// Non-convex perturbation added on top of the quadratic game:
//   R(t) = amplitude * (1 - cos(frequency * t)) + t^2,
// centered at each player's equilibrium strategy so the Nash point of the
// base game stays a Nash point of the perturbed game.
struct PerturbedQuadraticGameSpec {
  QuadraticGameSpec base;
  NashPoint xstar;  // 1 x M
  double amplitude = 10.0;
  double frequency = 10.0;

  explicit PerturbedQuadraticGameSpec(QuadraticGameSpec base_in,
                                      double amplitude_in = 10.0,
                                      double frequency_in = 10.0)
      : base(std::move(base_in)),
        xstar(quadratic_nash(base)),
        amplitude(amplitude_in),
        frequency(frequency_in) {
    if (!(amplitude >= 0.0) || !(frequency > 0.0))
      throw std::invalid_argument("perturbed quadratic game: need "
                                  "amplitude >= 0 and frequency > 0");
  }

  int players() const { return base.players(); }

  double perturbation(double t) const {
    return amplitude * (1.0 - std::cos(frequency * t)) + t * t;
  }
};

inline GameProblem make_problem(const PerturbedQuadraticGameSpec& spec) {
  GameProblem g;
  g.players = spec.players();
  g.dim = 1;
  g.cost = [spec](int m, const Eigen::Ref<const Vector>& own,
                  const Eigen::Ref<const Matrix>& others) {
    const double u =
        spec.base.a[m] * own[0] - others.row(0).sum() - spec.base.b[m];
    return 0.5 * u * u + spec.perturbation(own[0] - spec.xstar(0, m));
  };
  return g;
}

}  // namespace nashcbo
