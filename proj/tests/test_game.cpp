#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nashcbo/cournot.hpp"
#include "nashcbo/game.hpp"

using namespace nashcbo;

namespace {
Vector vec4(double a, double b, double c, double d) {
  Vector v(4);
  v << a, b, c, d;
  return v;
}
}  // namespace

TEST_CASE("quadratic game validates its coefficients") {
  CHECK_THROWS_AS(QuadraticGameSpec(Vector(), Vector()),
                  std::invalid_argument);
  CHECK_THROWS_AS(QuadraticGameSpec(vec4(5, 6, 7, 8), Vector::Ones(3)),
                  std::invalid_argument);
  // diagonal dominance requires a_m > M
  CHECK_THROWS_AS(QuadraticGameSpec(vec4(4, 6, 7, 8), vec4(1, 2, 3, 4)),
                  std::invalid_argument);
  CHECK_NOTHROW(QuadraticGameSpec(vec4(5, 6, 7, 8), vec4(1, 2, 3, 4)));
}

TEST_CASE("quadratic cost evaluates 1/2 (a x - sum y - b)^2") {
  const QuadraticGameSpec spec(vec4(5, 6, 7, 8), vec4(0, 2, 3, 4));
  const GameProblem g = make_problem(spec);
  REQUIRE(g.players == 4);
  REQUIRE(g.dim == 1);
  Vector own(1);
  own << 1.0;
  Matrix others = Matrix::Zero(1, 3);
  // player 0: a=5, b=0, sum(others)=0 -> 0.5 * 5^2
  CHECK(g.cost(0, own, others) == 12.5);
  others << 1.0, 2.0, 3.0;
  // player 1: a=6, b=2 -> 0.5 * (6 - 6 - 2)^2 = 2
  CHECK(g.cost(1, own, others) == 2.0);
}

TEST_CASE("eval_cost rejects bad shapes and non-finite values") {
  const QuadraticGameSpec spec(vec4(5, 6, 7, 8), vec4(1, 2, 3, 4));
  GameProblem g = make_problem(spec);
  Vector own(1);
  own << 1.0;
  const Matrix others = Matrix::Zero(1, 3);
  CHECK_NOTHROW(eval_cost(g, 0, own, others));
  CHECK_THROWS_AS(eval_cost(g, -1, own, others), EvaluationError);
  CHECK_THROWS_AS(eval_cost(g, 4, own, others), EvaluationError);
  CHECK_THROWS_AS(eval_cost(g, 0, own, Matrix::Zero(1, 2)), EvaluationError);
  g.cost = [](int, const Eigen::Ref<const Vector>&,
              const Eigen::Ref<const Matrix>&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  try {
    eval_cost(g, 2, own, others);
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(e.player() == 2);
  }
}

TEST_CASE("quadratic Nash point matches the frozen linear-solve oracle") {
  const QuadraticGameSpec spec(vec4(5, 6, 7, 8), vec4(1, 2, 3, 4));
  const NashPoint x = quadratic_nash(spec);
  REQUIRE(x.rows() == 1);
  REQUIRE(x.cols() == 4);
  // independently computed solution of (diag(a) - (ones - I)) x = b
  CHECK(x(0, 0) == Catch::Approx(0.6331877729257642).epsilon(1e-13));
  CHECK(x(0, 1) == Catch::Approx(0.6855895196506551).epsilon(1e-13));
  CHECK(x(0, 2) == Catch::Approx(0.7248908296943232).epsilon(1e-13));
  CHECK(x(0, 3) == Catch::Approx(0.7554585152838429).epsilon(1e-13));
  // defining property: a_m x_m - sum_{i != m} x_i = b_m
  for (int m = 0; m < 4; ++m) {
    const double lhs =
        spec.a[m] * x(0, m) - (x.row(0).sum() - x(0, m));
    CHECK(lhs == Catch::Approx(spec.b[m]).margin(1e-12));
  }
}

TEST_CASE("best response is the cost minimizer and fixes the Nash point") {
  const QuadraticGameSpec spec(vec4(5, 6, 7, 8), vec4(1, 2, 3, 4));
  const GameProblem g = make_problem(spec);
  const NashPoint x = quadratic_nash(spec);
  for (int m = 0; m < 4; ++m) {
    Vector y(3);
    int j = 0;
    for (int i = 0; i < 4; ++i)
      if (i != m) y[j++] = x(0, i);
    const double br = best_response_quadratic(spec, m, y);
    CHECK(br == Catch::Approx(x(0, m)).epsilon(1e-13));
    // the best response beats nearby points
    Vector own(1);
    Matrix others(1, 3);
    others.row(0) = y.transpose();
    own << br;
    const double at_br = g.cost(m, own, others);
    CHECK(at_br <= 1e-20);
    own << br + 0.1;
    CHECK(g.cost(m, own, others) > at_br);
    own << br - 0.1;
    CHECK(g.cost(m, own, others) > at_br);
  }
  CHECK_THROWS_AS(best_response_quadratic(spec, 5, Vector::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(best_response_quadratic(spec, 0, Vector::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("perturbation has the frozen value and vanishes only at 0") {
  const QuadraticGameSpec base(vec4(5, 6, 7, 8), vec4(1, 2, 3, 4));
  const PerturbedQuadraticGameSpec spec(base);
  CHECK(spec.perturbation(0.0) == 0.0);
  // R(pi/10) = 10 (1 - cos(pi)) + (pi/10)^2 = 20 + pi^2/100
  CHECK(spec.perturbation(M_PI / 10.0) ==
        Catch::Approx(20.098696044010893).epsilon(1e-14));
  CHECK(spec.perturbation(0.3) > 0.0);
  CHECK(spec.perturbation(-0.3) > 0.0);
}

TEST_CASE("the Nash point survives the perturbation") {
  const QuadraticGameSpec base(vec4(5, 6, 7, 8), vec4(1, 2, 3, 4));
  const PerturbedQuadraticGameSpec spec(base);
  const GameProblem g = make_problem(spec);
  const NashPoint x = spec.xstar;
  for (int m = 0; m < 4; ++m) {
    Matrix others(1, 3);
    int j = 0;
    for (int i = 0; i < 4; ++i)
      if (i != m) others(0, j++) = x(0, i);
    Vector own(1);
    own << x(0, m);
    const double at_star = g.cost(m, own, others);
    CHECK(std::fabs(at_star) <= 1e-18);
    // perturbed cost is still minimized there (sampled neighborhood)
    for (double step : {-0.5, -0.05, 0.05, 0.5}) {
      own << x(0, m) + step;
      CHECK(g.cost(m, own, others) > at_star);
    }
  }
}

TEST_CASE("scalar Cournot synthesis matches the hand computation") {
  // d = 1, M = 1, x* = 5: L = 4, z = 20, phi = (100 - 0.02)^2,
  // c = phi + L * dphi * x* with dphi = -2 b (a - b z)
  Matrix xstar(1, 1);
  xstar << 5.0;
  const CournotGameSpec spec = make_cournot_from_equilibrium(1, 1, xstar);
  CHECK(spec.L(0, 0) == 4.0);
  const double base = 100.0 - 1e-3 * 20.0;
  const double phi = base * base;
  const double dphi = -2.0 * 1e-3 * base;
  const double c_expected = phi + 4.0 * dphi * 5.0;
  CHECK(c_expected == Catch::Approx(9992.0012).epsilon(1e-14));
  CHECK(spec.c(0, 0) == Catch::Approx(c_expected).epsilon(1e-14));
  // gradient vanishes at the equilibrium by construction
  const Vector grad =
      cournot_gradient(spec, 0, xstar.col(0), Matrix(1, 0));
  CHECK(std::fabs(grad[0]) <= 1e-10);
}

TEST_CASE("Cournot price clamps at zero and the slope follows") {
  Matrix xstar = Matrix::Constant(2, 3, 5.0);
  const CournotGameSpec spec = make_cournot_from_equilibrium(2, 3, xstar);
  Vector small = Vector::Zero(2);
  const Vector p0 = cournot_price(spec, small);
  CHECK(p0[0] == Catch::Approx(100.0 * 100.0));
  // push totals beyond the clamp: need L z >= a/b = 1e5
  Vector huge = Vector::Constant(2, 1e6);
  const Vector p_clamped = cournot_price(spec, huge);
  CHECK(p_clamped[0] == 0.0);
  CHECK(p_clamped[1] == 0.0);
  const Vector slope_clamped = cournot_price_slope(spec, huge);
  CHECK(slope_clamped[0] == 0.0);
  const Vector slope_interior = cournot_price_slope(spec, small);
  CHECK(slope_interior[0] < 0.0);
}

TEST_CASE("synthesized Cournot instances are reproducible and valid") {
  const CournotGameSpec one = synthesize_cournot(3, 4, 2024);
  const CournotGameSpec two = synthesize_cournot(3, 4, 2024);
  CHECK((one.xstar.array() == two.xstar.array()).all());
  CHECK((one.c.array() == two.c.array()).all());
  const CournotGameSpec other = synthesize_cournot(3, 4, 2025);
  CHECK(!(one.xstar.array() == other.xstar.array()).all());
  CHECK(one.xstar.minCoeff() >= 0.0);
  CHECK(one.xstar.maxCoeff() <= 10.0);
  CHECK(one.c.minCoeff() > 0.0);
  // the drawn equilibrium satisfies the first-order conditions
  double sq = 0.0;
  for (int m = 0; m < 4; ++m) {
    Matrix others(3, 3);
    int j = 0;
    for (int i = 0; i < 4; ++i)
      if (i != m) others.col(j++) = one.xstar.col(i);
    sq += cournot_gradient(one, m, one.xstar.col(m), others).squaredNorm();
  }
  CHECK(std::sqrt(sq) <= 1e-9);
}

TEST_CASE("Cournot rejects invalid instances") {
  Matrix L = Matrix::Identity(2, 2);
  Matrix c = Matrix::Ones(2, 2);
  Matrix xs = Matrix::Ones(2, 2);
  CHECK_THROWS_AS(CournotGameSpec(2, 2, 0.5, 100.0, 1e-3, L, c, xs),
                  std::invalid_argument);
  CHECK_THROWS_AS(CournotGameSpec(2, 2, 2.0, -1.0, 1e-3, L, c, xs),
                  std::invalid_argument);
  CHECK_THROWS_AS(CournotGameSpec(2, 2, 2.0, 100.0, 1e-3, Matrix::Ones(3, 3),
                                  c, xs),
                  std::invalid_argument);
  Matrix bad_c = c;
  bad_c(0, 0) = -2.0;
  CHECK_THROWS_AS(CournotGameSpec(2, 2, 2.0, 100.0, 1e-3, L, bad_c, xs),
                  SynthesisError);
}

TEST_CASE("Cournot cost is own . (c - p)") {
  Matrix xstar = Matrix::Constant(2, 2, 4.0);
  const CournotGameSpec spec = make_cournot_from_equilibrium(2, 2, xstar);
  const GameProblem g = make_problem(spec);
  Vector own(2);
  own << 1.0, 2.0;
  Matrix others(2, 1);
  others << 3.0, 4.0;
  Vector total(2);
  total << 4.0, 6.0;
  const Vector p = cournot_price(spec, total);
  const double expected = own.dot(spec.c.col(0) - p);
  CHECK(g.cost(0, own, others) == Catch::Approx(expected).epsilon(1e-15));
}
