#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nashcbo/consensus.hpp"
#include "nashcbo/rng.hpp"
#include "nashcbo/summation.hpp"

using namespace nashcbo;

TEST_CASE("exact accumulation matches analytically exact sums") {
  // 0.1 added ten times is not 1.0 in naive order-dependent arithmetic,
  // but the correctly rounded true sum of these particular doubles is known:
  // compare against long-double accumulation.
  std::vector<double> xs(10, 0.1);
  long double ref = 0.0L;
  for (double x : xs) ref += static_cast<long double>(x);
  CHECK(exact_sum(xs) == static_cast<double>(ref));

  // catastrophic cancellation: 1e100 + 1 - 1e100 must leave exactly 1
  ExactAccumulator acc;
  acc.add(1e100);
  acc.add(1.0);
  acc.add(-1e100);
  CHECK(acc.total() == 1.0);
  acc.reset();
  CHECK(acc.total() == 0.0);
}

TEST_CASE("exact sums are bit-invariant under permutation") {
  CounterStream stream(555, kRngDomainSynth, 0, 0, 0);
  std::vector<double> xs(300);
  for (auto& x : xs) x = (stream.next_uniform() - 0.5) * std::pow(
                             10.0, 30.0 * (stream.next_uniform() - 0.5));
  const double base = exact_sum(xs);
  std::mt19937 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(xs.begin(), xs.end(), rng);
    CHECK(exact_sum(xs) == base);
  }
}

TEST_CASE("consensus weights use the min-shifted Gibbs form") {
  Vector costs(2);
  costs << 0.0, 1.0;
  const Vector w = consensus_weights(costs, 1.0);
  CHECK(w[0] == 1.0);  // the minimizer's weight is exactly 1
  CHECK(w[1] == Catch::Approx(0.36787944117144233).epsilon(1e-16));
  // alpha = 0 weighs everything equally
  const Vector w0 = consensus_weights(costs, 0.0);
  CHECK(w0[0] == 1.0);
  CHECK(w0[1] == 1.0);
  CHECK_THROWS_AS(consensus_weights(Vector(), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(consensus_weights(costs, -1.0), std::invalid_argument);
  Vector bad(2);
  bad << 0.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(consensus_weights(bad, 1.0), std::invalid_argument);
}

TEST_CASE("consensus point matches the two-sample closed form") {
  Matrix positions(1, 2);
  positions << 0.0, 1.0;
  Vector costs(2);
  costs << 0.0, 1.0;
  // weighted mean = e^{-1} / (1 + e^{-1}) = 1 / (1 + e)
  const Vector c = consensus_point(positions, costs, 1.0);
  CHECK(c[0] == Catch::Approx(0.2689414213699951).epsilon(1e-16));
  // huge alpha collapses onto the minimizer exactly (underflow by design)
  const Vector sharp = consensus_point(positions, costs, 1e4);
  CHECK(sharp[0] == 0.0);
  // alpha = 0 gives the plain mean
  const Vector flat = consensus_point(positions, costs, 0.0);
  CHECK(flat[0] == 0.5);
}

TEST_CASE("consensus point is a convex combination of the samples") {
  CounterStream stream(99, kRngDomainSynth, 1, 0, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(stream.next_u64() % 30);
    const int d = 1 + static_cast<int>(stream.next_u64() % 4);
    Matrix positions(d, n);
    Vector costs(n);
    std::vector<double> z(d);
    for (int i = 0; i < n; ++i) {
      stream.fill_normals(z.data(), d);
      for (int h = 0; h < d; ++h) positions(h, i) = 3.0 * z[h];
      costs[i] = 10.0 * stream.next_uniform();
    }
    const double alpha = std::pow(10.0, 6.0 * stream.next_uniform() - 3.0);
    const Vector c = consensus_point(positions, costs, alpha);
    for (int h = 0; h < d; ++h) {
      CHECK(c[h] >= positions.row(h).minCoeff());
      CHECK(c[h] <= positions.row(h).maxCoeff());
    }
  }
}

TEST_CASE("consensus is bit-invariant under permuting the sample") {
  CounterStream stream(100, kRngDomainSynth, 2, 0, 0);
  Matrix positions(3, 40);
  Vector costs(40);
  std::vector<double> z(3);
  for (int i = 0; i < 40; ++i) {
    stream.fill_normals(z.data(), 3);
    for (int h = 0; h < 3; ++h) positions(h, i) = z[h];
    costs[i] = 5.0 * stream.next_uniform();
  }
  const Vector base = consensus_point(positions, costs, 2.0);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix p2(3, 40);
    Vector c2(40);
    for (int i = 0; i < 40; ++i) {
      p2.col(i) = positions.col(perm[i]);
      c2[i] = costs[perm[i]];
    }
    const Vector v = consensus_point(p2, c2, 2.0);
    CHECK((v.array() == base.array()).all());
  }
}

TEST_CASE("a fully collapsed sample is a fixed point of the consensus map") {
  Matrix positions = Matrix::Constant(2, 17, 0.7300000000000001);
  Vector costs = Vector::Constant(17, 3.25);
  const Vector c = consensus_point(positions, costs, 123.0);
  CHECK(c[0] == 0.7300000000000001);
  CHECK(c[1] == 0.7300000000000001);
}

TEST_CASE("log-sum-exp value has the frozen two-sample oracle") {
  Vector costs(2);
  costs << 0.0, 1.0;
  // -log((1 + e^{-1})/2) = 0.3798854930417225
  CHECK(laplace_value(costs, 1.0) ==
        Catch::Approx(0.3798854930417225).epsilon(1e-15));
  CHECK(laplace_gap(costs, 1.0) ==
        Catch::Approx(0.3798854930417225).epsilon(1e-15));
  CHECK_THROWS_AS(laplace_value(costs, 0.0), std::invalid_argument);
}

TEST_CASE("log-sum-exp value sits between min and min + log(N)/alpha") {
  CounterStream stream(321, kRngDomainSynth, 3, 0, 0);
  Vector costs(64);
  for (int i = 0; i < 64; ++i) costs[i] = 7.0 * stream.next_uniform();
  const double emin = costs.minCoeff();
  const double bound = std::log(64.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {1e-3, 1e-1, 1.0, 1e1, 1e3, 1e6}) {
    const double v = laplace_value(costs, alpha);
    CHECK(v >= emin);
    CHECK(v <= emin + bound / alpha + 1e-15);
    const double gap = v - emin;
    CHECK(gap <= prev + 1e-15);  // gap shrinks as alpha grows
    prev = gap;
  }
  // small alpha approaches the sample mean
  CHECK(laplace_value(costs, 1e-9) ==
        Catch::Approx(costs.mean()).margin(1e-6));
}

TEST_CASE("slice discrepancy sup has closed forms on simple functions") {
  // |x - xbar| on radius 1/2 peaks at the endpoints
  const double sup =
      discrepancy_sup([](double x) { return std::fabs(x - 2.0); }, 2.0, 0.5);
  CHECK(sup == 0.5);
  // quadratic slice through the best response: sup = (a^2/2) r^2
  Vector a(4), b(4);
  a << 5, 6, 7, 8;
  b << 1, 2, 3, 4;
  const QuadraticGameSpec spec(a, b);
  Vector others(3);
  others << 0.4, -0.2, 0.9;
  const double xbar = best_response_quadratic(spec, 1, others);
  const double got = discrepancy_sup(spec, 1, others, xbar, 1.0, 10001);
  CHECK(got == Catch::Approx(0.5 * 36.0).epsilon(1e-12));
  CHECK_THROWS_AS(discrepancy_sup([](double) { return 0.0; }, 0.0, -1.0),
                  std::invalid_argument);
}

TEST_CASE("discrepancy grid is fine enough to be stable") {
  Vector a(4), b(4);
  a << 5, 6, 7, 8;
  b << 1, 2, 3, 4;
  const PerturbedQuadraticGameSpec spec{QuadraticGameSpec(a, b)};
  Vector others(3);
  others << 0.1, 0.2, 0.3;
  const double coarse = discrepancy_sup(spec, 0, others, 1.0, 0.8, 1000);
  const double fine = discrepancy_sup(spec, 0, others, 1.0, 0.8, 10000);
  CHECK(std::fabs(fine - coarse) <=
        1e-4 * std::max(1.0, std::fabs(fine)));
}

TEST_CASE("quantitative consensus bound: preconditions and a valid case") {
  Matrix positions(1, 4);
  positions << -0.5, 0.0, 0.5, 1.0;
  Vector costs(4);
  costs << 1.0, 0.0, 1.0, 4.0;
  Vector xbar(1);
  xbar << 0.0;
  const double e_inf = 8.0;
  // q must sit in (0, e_inf/2]
  CHECK_THROWS_AS(quantitative_laplace_check(positions, costs, xbar, 0.0, 1.0,
                                             1.0, 0.5, 1.0, e_inf),
                  std::invalid_argument);
  CHECK_THROWS_AS(quantitative_laplace_check(positions, costs, xbar, 5.0, 1.0,
                                             1.0, 0.5, 1.0, e_inf),
                  std::invalid_argument);
  // an empty ball around a far-away reference is rejected
  Vector far(1);
  far << 100.0;
  CHECK_THROWS_AS(quantitative_laplace_check(positions, costs, far, 1.0, 0.5,
                                             1.0, 0.5, 1.0, e_inf),
                  std::invalid_argument);
  const auto res = quantitative_laplace_check(positions, costs, xbar, 4.0,
                                              1.0, 2.0, 0.5, 1.0, e_inf);
  CHECK(res.ball_fraction == 1.0);
  CHECK(res.lhs >= 0.0);
  CHECK(res.rhs > 0.0);
  // with these constants the local-growth term alone is sqrt(8) > diameter
  CHECK(res.holds);
}
