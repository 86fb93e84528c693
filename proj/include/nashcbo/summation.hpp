#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace nashcbo {

// Exact accumulation with Shewchuk partials (the fsum algorithm).  The
// returned value is the correctly rounded true sum, which makes it a pure
// function of the multiset of inputs: invariant under permutations and under
// how work would be split across threads.  Consensus weights and ensemble
// means are computed through this so recorded numbers never depend on
// iteration order.
class ExactAccumulator {
 public:
  void add(double x) {
    std::size_t used = 0;
    for (std::size_t j = 0; j < partials_.size(); ++j) {
      double y = partials_[j];
      if (std::fabs(x) < std::fabs(y)) {
        const double tmp = x;
        x = y;
        y = tmp;
      }
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[used++] = lo;
      x = hi;
    }
    partials_.resize(used);
    partials_.push_back(x);
  }

  // Correctly rounded total.  Mirrors the reference fsum rounding fix so
  // half-ulp ties cannot leak order dependence.
  double total() const {
    double hi = 0.0;
    std::size_t n = partials_.size();
    if (n > 0) {
      hi = partials_[--n];
      double lo = 0.0;
      while (n > 0) {
        const double x = hi;
        const double y = partials_[--n];
        hi = x + y;
        const double yr = hi - x;
        lo = y - yr;
        if (lo != 0.0) break;
      }
      if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) ||
                    (lo > 0.0 && partials_[n - 1] > 0.0))) {
        const double y = lo * 2.0;
        const double x = hi + y;
        if (y == x - hi) hi = x;
      }
    }
    return hi;
  }

  void reset() { partials_.clear(); }

 private:
  std::vector<double> partials_;
};

inline double exact_sum(std::span<const double> xs) {
  ExactAccumulator acc;
  for (double x : xs) acc.add(x);
  return acc.total();
}

}  // namespace nashcbo
