#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nashcbo/cournot.hpp"
#include "nashcbo/diagnostics.hpp"
#include "nashcbo/dynamics.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/parallel.hpp"
#include "nashcbo/rng.hpp"

namespace nashcbo {

enum class GameKind { kQuadratic, kQuadraticPerturbed, kCournot };

inline const char* to_string(GameKind kind) {
  switch (kind) {
    case GameKind::kQuadratic: return "quadratic";
    case GameKind::kQuadraticPerturbed: return "quadratic_perturbed";
    case GameKind::kCournot: return "cournot";
  }
  return "?";
}

// One sweep axis: a named list of values.  The value of an axis named
// "mode" selects the diffusion (0 anisotropic, 1 isotropic), "u" sets
// lambda = (u + sigma^2)/2, "n"/"d" resize the run, and "alpha", "lambda",
// "sigma" override the solver field of the same name.
struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

inline std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (int j = 0; j < count; ++j)
    out[j] = std::pow(10.0, llo + (lhi - llo) * j / (count - 1));
  return out;
}

inline std::vector<double> linear_grid(double lo, double hi, int count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (int j = 0; j < count; ++j)
    out[j] = lo + (hi - lo) * j / (count - 1);
  return out;
}

// Evenly spaced integers covering [lo, hi], at most `count` of them, all
// distinct, endpoints included.
inline std::vector<double> integer_grid(int lo, int hi, int count) {
  std::vector<double> out;
  const int span = hi - lo + 1;
  const int n = std::min(count, span);
  for (int j = 0; j < n; ++j) {
    const int v =
        n == 1 ? lo
               : lo + static_cast<int>(std::lround(
                          static_cast<double>(j) * (span - 1) / (n - 1)));
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

struct SweepSpec {
  std::string id = "custom";
  std::string preset = "custom";
  GameKind game = GameKind::kQuadraticPerturbed;

  // quadratic family instance (d = 1)
  Vector quad_a;
  Vector quad_b;

  // cournot family instance
  int dim = 1;
  int players = 4;
  std::uint64_t game_seed = 2024;
  double beta = 2.0;
  double price_a = 100.0;
  double price_b = 1e-3;

  SolverParams base;
  std::vector<SweepAxis> axes;
  std::vector<std::uint64_t> seeds;

  double init_variance = 5.0;
  Vector init_offset;               // quadratic: center = x* + offset
  bool init_uniform_center = false; // cournot: center = x* + U[-1,1]^{d x M}
  bool shared_init = false;         // init stream keyed by sweep seed only
  long trace_every = 0;             // 0: no per-run traces

  long cells() const {
    long n = 1;
    for (const auto& ax : axes) n *= static_cast<long>(ax.values.size());
    return n;
  }

  std::vector<double> cell_values(long cell) const {
    std::vector<double> out(axes.size());
    long rem = cell;
    for (std::size_t a = axes.size(); a-- > 0;) {
      const long sz = static_cast<long>(axes[a].values.size());
      out[a] = axes[a].values[rem % sz];
      rem /= sz;
    }
    return out;
  }
};

// The default quadratic benchmark instance used by the a-cases.  The game
// family fixes d = 1 and M = 4; these coefficients satisfy a_m > M and give
// an equilibrium away from the origin.
inline Vector default_quad_a() {
  Vector a(4);
  a << 5.0, 6.0, 7.0, 8.0;
  return a;
}
inline Vector default_quad_b() {
  Vector b(4);
  b << 1.0, 2.0, 3.0, 4.0;
  return b;
}
inline Vector default_quad_offset() {
  Vector off(4);
  off << -2.0, 1.0, 0.0, 3.0;
  return off;
}

inline std::vector<std::uint64_t> seed_list(int count) {
  std::vector<std::uint64_t> seeds(count);
  for (int s = 0; s < count; ++s) seeds[s] = static_cast<std::uint64_t>(s + 1);
  return seeds;
}

// Named experiment presets.  The paper preset reproduces the study-scale
// grids; the desk preset subsamples every axis to at most 12 points, caps N
// at 2000 and seeds at 5, and never changes the physical parameters.
inline SweepSpec build_case(const std::string& id, const std::string& preset) {
  if (preset != "paper" && preset != "desk")
    throw std::invalid_argument("build_case: unknown preset '" + preset +
                                "' (expected paper or desk)");
  const bool desk = preset == "desk";
  SweepSpec spec;
  spec.id = id;
  spec.preset = preset;
  spec.players = 4;

  const double sigma_small = 1e-1;
  const double lambda_large = (1e4 + sigma_small * sigma_small) / 2.0;

  if (id == "a1" || id == "a2" || id == "a3" || id == "a4") {
    spec.game = GameKind::kQuadraticPerturbed;
    spec.quad_a = default_quad_a();
    spec.quad_b = default_quad_b();
    spec.dim = 1;
    spec.init_variance = 5.0;
    spec.init_offset = default_quad_offset();
    spec.shared_init = true;
    spec.seeds = seed_list(desk ? 5 : 1);
    spec.base.sigma = sigma_small;
    spec.base.lambda = lambda_large;
    spec.base.alpha = 1e7;
    spec.base.dt = 1e-4;
    spec.base.steps = 100;
    spec.base.particles = 40;
    spec.base.mode = NoiseMode::kAnisotropic;
  }

  if (id == "a1") {
    spec.axes = {{"alpha", log_grid(1e-6, 1e7, desk ? 12 : 500)}};
  } else if (id == "a2") {
    spec.axes = {{"u", log_grid(1e2, 1e4, desk ? 12 : 500)}};
  } else if (id == "a3") {
    spec.axes = {{"n", integer_grid(4, desk ? 2000 : 4000, desk ? 12 : 500)}};
  } else if (id == "a4") {
    spec.base.dt = 1e-2;
    spec.axes = {
        {"lambda", log_grid(1e-1, std::pow(10.0, 2.5), desk ? 10 : 100)},
        {"sigma", log_grid(1e-1, std::pow(10.0, 1.2), desk ? 10 : 100)},
        {"n", desk ? std::vector<double>{100.0}
                   : std::vector<double>{10.0, 100.0, 1000.0}}};
    spec.seeds = seed_list(1);
  } else if (id == "b1" || id == "b2" || id == "b3") {
    spec.game = GameKind::kCournot;
    spec.players = 4;
    spec.init_uniform_center = true;
    spec.shared_init = false;
    spec.base.mode = NoiseMode::kAnisotropic;
    if (id == "b1") {
      spec.dim = 5;
      spec.init_variance = 10.0;
      spec.base.sigma = 1.0;
      spec.base.alpha = 1e10;
      spec.base.dt = 1e-3;
      spec.base.steps = 1000;
      spec.base.particles = desk ? 2000 : 10000;
      spec.seeds = seed_list(desk ? 5 : 20);
      spec.axes = {{"lambda", {5.5, 50.5}}, {"mode", {0.0, 1.0}}};
    } else if (id == "b2") {
      spec.init_variance = 10.0;
      spec.base.sigma = sigma_small;
      spec.base.lambda = lambda_large;
      spec.base.alpha = 1e10;
      spec.base.dt = 1e-4;
      spec.base.steps = 15;
      spec.seeds = seed_list(desk ? 5 : 1);
      spec.axes = {{"d", integer_grid(2, 20, desk ? 12 : 19)},
                   {"n", integer_grid(2, 500, desk ? 12 : 50)}};
    } else {
      spec.init_variance = 10.0;
      spec.base.sigma = sigma_small;
      spec.base.lambda = lambda_large;
      spec.base.dt = 1e-4;
      spec.base.steps = 15;
      spec.base.particles = 1000;
      spec.seeds = seed_list(desk ? 5 : 1);
      spec.axes = {{"d", integer_grid(2, 20, desk ? 12 : 19)},
                   {"alpha", log_grid(10.0, 1e10, desk ? 12 : 100)}};
    }
  } else if (id != "a1" && id != "a2" && id != "a3" && id != "a4") {
    throw std::invalid_argument("build_case: unknown case id '" + id + "'");
  }
  return spec;
}

// Fully resolved configuration of a single run inside a sweep.
struct ResolvedRun {
  SolverParams params;
  GameKind game = GameKind::kQuadraticPerturbed;
  int dim = 1;
  int players = 4;
  InitSpec init;
  NashPoint xstar;
  std::uint64_t init_seed = 0;
};

namespace detail {
// Pairing index: flat cell index computed over every axis except "mode",
// so paired anisotropic/isotropic runs share init and noise streams.
inline long pairing_index(const SweepSpec& spec, long cell) {
  long idx = 0;
  long rem = cell;
  for (std::size_t a = spec.axes.size(); a-- > 0;) {
    const long sz = static_cast<long>(spec.axes[a].values.size());
    const long v = rem % sz;
    rem /= sz;
    if (spec.axes[a].name == "mode") continue;
    idx = idx * sz + v;
  }
  return idx;
}
}  // namespace detail

struct SweepRun {
  long cell = 0;
  std::vector<double> axis_values;
  std::uint64_t seed = 0;
  double initial_V = std::numeric_limits<double>::quiet_NaN();
  double final_V = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> initial_residual;
  std::optional<double> final_residual;
  bool diverged = false;
  long divergence_step = -1;
  long first_passage = -1;  // first step with V <= V(0)/100, -1 if never
  double wall_seconds = 0.0;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRun> runs;  // cell-major, seed-minor
};

struct AggregateCell {
  long cell = 0;
  std::vector<double> axis_values;
  double median_initial_V = 0.0;
  double median_final_V = 0.0;
  std::optional<double> median_final_residual;
  double divergence_fraction = 0.0;
  double median_first_passage = 0.0;  // +inf when the median run never passes
};

inline double median_of(std::vector<double> v) {
  if (v.empty())
    throw std::invalid_argument("median_of: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Per-cell medians over seeds plus the divergence fraction.
inline std::vector<AggregateCell> aggregate(const SweepResult& result) {
  const long cells = result.spec.cells();
  const std::size_t seeds = result.spec.seeds.size();
  std::vector<AggregateCell> out;
  out.reserve(cells);
  for (long cell = 0; cell < cells; ++cell) {
    AggregateCell agg;
    agg.cell = cell;
    agg.axis_values = result.spec.cell_values(cell);
    std::vector<double> v0s, vfs, resids, fps;
    long diverged = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const SweepRun& run = result.runs[cell * seeds + s];
      v0s.push_back(run.initial_V);
      vfs.push_back(run.final_V);
      if (run.final_residual) resids.push_back(*run.final_residual);
      fps.push_back(run.first_passage < 0
                        ? std::numeric_limits<double>::infinity()
                        : static_cast<double>(run.first_passage));
      if (run.diverged) ++diverged;
    }
    agg.median_initial_V = median_of(v0s);
    agg.median_final_V = median_of(vfs);
    if (!resids.empty()) agg.median_final_residual = median_of(resids);
    agg.divergence_fraction =
        static_cast<double>(diverged) / static_cast<double>(seeds);
    agg.median_first_passage = median_of(fps);
    out.push_back(std::move(agg));
  }
  return out;
}

// Applies the cell's axis values to the base configuration and derives the
// run's init/noise seeds.  Init streams of the shared-init cases depend on
// the sweep seed (and N) only, so every grid point starts from the same
// ensemble; otherwise runs are keyed by their pairing index.
inline ResolvedRun resolve_run(const SweepSpec& spec, long cell,
                               std::uint64_t sweep_seed) {
  ResolvedRun rr;
  rr.params = spec.base;
  rr.game = spec.game;
  rr.dim = spec.dim;
  rr.players = spec.players;

  const std::vector<double> values = spec.cell_values(cell);
  for (std::size_t a = 0; a < spec.axes.size(); ++a) {
    const std::string& name = spec.axes[a].name;
    const double v = values[a];
    if (name == "alpha") {
      rr.params.alpha = v;
    } else if (name == "lambda") {
      rr.params.lambda = v;
    } else if (name == "sigma") {
      rr.params.sigma = v;
    } else if (name == "u") {
      rr.params.lambda = (v + spec.base.sigma * spec.base.sigma) / 2.0;
    } else if (name == "n") {
      rr.params.particles = static_cast<int>(std::lround(v));
    } else if (name == "d") {
      rr.dim = static_cast<int>(std::lround(v));
    } else if (name == "mode") {
      rr.params.mode =
          v == 0.0 ? NoiseMode::kAnisotropic : NoiseMode::kIsotropic;
    } else {
      throw std::invalid_argument("resolve_run: unknown axis '" + name + "'");
    }
  }

  const long pair_idx = detail::pairing_index(spec, cell);
  rr.params.seed = derive_seed(sweep_seed, 0x52554eULL,
                               static_cast<std::uint64_t>(pair_idx));
  rr.init_seed =
      spec.shared_init
          ? derive_seed(sweep_seed, 0x53484152ULL,
                        static_cast<std::uint64_t>(rr.params.particles))
          : derive_seed(sweep_seed, 0x43454c4cULL,
                        static_cast<std::uint64_t>(pair_idx));
  return rr;
}

// Builds the game and the init distribution for a resolved run.  Returns the
// problem and fills xstar/init on the ResolvedRun.
inline GameProblem instantiate_game(const SweepSpec& spec, ResolvedRun& rr,
                                    std::optional<CournotGameSpec>& cournot) {
  if (spec.game == GameKind::kCournot) {
    cournot.emplace(synthesize_cournot(rr.dim, rr.players, spec.game_seed,
                                       spec.beta, spec.price_a, spec.price_b));
    rr.xstar = cournot->xstar;
    Matrix center = cournot->xstar;
    if (spec.init_uniform_center) {
      for (int m = 0; m < rr.players; ++m) {
        CounterStream stream(rr.init_seed, kRngDomainCenter, 0,
                             static_cast<std::uint64_t>(m), 0);
        for (int h = 0; h < rr.dim; ++h)
          center(h, m) += 2.0 * stream.next_uniform() - 1.0;
      }
    }
    rr.init.center = std::move(center);
    rr.init.variance = spec.init_variance;
    return make_problem(*cournot);
  }

  QuadraticGameSpec base(spec.quad_a.size() > 0 ? spec.quad_a
                                                : default_quad_a(),
                         spec.quad_b.size() > 0 ? spec.quad_b
                                                : default_quad_b());
  rr.dim = 1;
  rr.players = base.players();
  rr.xstar = quadratic_nash(base);
  Matrix center = rr.xstar;
  if (spec.init_offset.size() > 0) {
    if (spec.init_offset.size() != rr.players)
      throw std::invalid_argument(
          "instantiate_game: init offset must have one entry per player");
    for (int m = 0; m < rr.players; ++m) center(0, m) += spec.init_offset[m];
  }
  rr.init.center = std::move(center);
  rr.init.variance = spec.init_variance;
  if (spec.game == GameKind::kQuadratic) return make_problem(base);
  return make_problem(PerturbedQuadraticGameSpec(std::move(base)));
}

// Observer a sweep attaches to each run; tracks V(0), the first-passage step
// to V(0)/100, and (for Cournot) the residual at the first and last step.
using TraceSink = std::function<void(const TraceRecord&)>;

inline SweepRun execute_run(const SweepSpec& spec, long cell,
                            std::uint64_t sweep_seed,
                            const TraceSink& sink = {}) {
  SweepRun row;
  row.cell = cell;
  row.axis_values = spec.cell_values(cell);
  row.seed = sweep_seed;
  const auto start = std::chrono::steady_clock::now();

  ResolvedRun rr = resolve_run(spec, cell, sweep_seed);
  std::optional<CournotGameSpec> cournot;
  const GameProblem problem = instantiate_game(spec, rr, cournot);

  std::function<double(const Matrix&)> residual_fn;
  if (cournot)
    residual_fn = [&cournot](const Matrix& x) {
      return residual_norm(*cournot, x);
    };

  double v0 = std::numeric_limits<double>::quiet_NaN();
  double v_last = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> resid_first, resid_last;
  long first_passage = -1;
  const auto observe = [&](const Ensemble& e, const Matrix& cons) {
    TraceRecord rec = make_trace_record(e, cons, rr.xstar, residual_fn);
    if (e.step == 0) {
      v0 = rec.V;
      resid_first = rec.residual;
    }
    v_last = rec.V;
    resid_last = rec.residual;
    if (first_passage < 0 && rec.V <= v0 / 100.0) first_passage = e.step;
    if (sink) sink(rec);
  };

  try {
    const Ensemble e0 =
        init_ensemble(rr.init, rr.params.particles, rr.init_seed);
    run(problem, rr.params, e0, observe);
    row.final_V = v_last;
    row.final_residual = resid_last;
  } catch (const DivergenceError& err) {
    row.diverged = true;
    row.divergence_step = err.step();
    row.final_V = std::numeric_limits<double>::infinity();
    if (cournot)
      row.final_residual = std::numeric_limits<double>::infinity();
  }
  row.initial_V = v0;
  row.initial_residual = resid_first;
  row.first_passage = first_passage;
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return row;
}

// Runs the whole grid x seed matrix.  Work items are independent; the thread
// count splits them without touching any recorded number.  Divergence of a
// run is recorded in its row and never aborts the sweep.
inline SweepResult run_sweep(
    const SweepSpec& spec, int threads = 1,
    const std::function<TraceSink(long cell, std::uint64_t seed)>&
        make_sink = {}) {
  if (spec.seeds.empty())
    throw std::invalid_argument("run_sweep: empty seed list");
  for (const auto& ax : spec.axes)
    if (ax.values.empty())
      throw std::invalid_argument("run_sweep: axis '" + ax.name +
                                  "' has no values");
  SweepResult result;
  result.spec = spec;
  const long cells = spec.cells();
  const long seeds = static_cast<long>(spec.seeds.size());
  result.runs.resize(cells * seeds);
  parallel_for(0, cells * seeds, threads, [&](long idx) {
    const long cell = idx / seeds;
    const std::uint64_t seed = spec.seeds[idx % seeds];
    TraceSink sink;
    if (make_sink) sink = make_sink(cell, seed);
    result.runs[idx] = execute_run(spec, cell, seed, sink);
  });
  return result;
}

}  // namespace nashcbo
