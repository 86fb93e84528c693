// Command-line front end: solve (one run), sweep (experiment grids), check
// (verification suites).  Exit codes: 0 success, 1 usage or config error,
// 2 divergence, 3 verification failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nashcbo/checks.hpp"
#include "nashcbo/cournot.hpp"
#include "nashcbo/diagnostics.hpp"
#include "nashcbo/dynamics.hpp"
#include "nashcbo/experiments.hpp"
#include "nashcbo/game.hpp"
#include "nashcbo/io.hpp"
#include "nashcbo/version.hpp"

namespace fs = std::filesystem;
using namespace nashcbo;

namespace {

// Canonical quadratic instance for M players: a_m = M + 1 + m > M and
// b_m = m + 1, matching the documented 4-player benchmark at M = 4.
Vector canonical_quad_a(int players) {
  Vector a(players);
  for (int m = 0; m < players; ++m) a[m] = players + 1 + m;
  return a;
}
Vector canonical_quad_b(int players) {
  Vector b(players);
  for (int m = 0; m < players; ++m) b[m] = m + 1;
  return b;
}

bool looks_like_json(const fs::path& path) {
  std::ifstream in(path);
  char c = 0;
  while (in.get(c)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == '{';
  }
  return false;
}

struct SolveFlags {
  std::optional<std::string> game;
  std::optional<int> m, d, n;
  std::optional<double> lambda, sigma, alpha, dt;
  std::optional<long> steps, trace_every;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::string config;
};

int run_solve(const SolveFlags& flags) {
  SolveConfig cfg;
  if (!flags.config.empty()) {
    const fs::path path(flags.config);
    if (looks_like_json(path)) {
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot read config " + flags.config);
      nlohmann::json j;
      in >> j;
      cfg = solve_config_from_manifest(j);
    } else {
      apply_ini(cfg, parse_ini_file(path));
    }
  } else if (!flags.game) {
    throw ConfigError("missing required --game (or --config)");
  }

  if (flags.game) cfg.game = parse_game_kind(*flags.game);
  if (flags.m) {
    cfg.players = *flags.m;
    if (cfg.quad_a.size() != cfg.players) {
      cfg.quad_a = canonical_quad_a(cfg.players);
      cfg.quad_b = canonical_quad_b(cfg.players);
      if (cfg.players != 4) cfg.init_offset = Vector::Zero(cfg.players);
    }
  }
  if (flags.d) cfg.dim = *flags.d;
  if (flags.n) cfg.params.particles = *flags.n;
  if (flags.lambda) cfg.params.lambda = *flags.lambda;
  if (flags.sigma) cfg.params.sigma = *flags.sigma;
  if (flags.alpha) cfg.params.alpha = *flags.alpha;
  if (flags.dt) cfg.params.dt = *flags.dt;
  if (flags.steps) cfg.params.steps = *flags.steps;
  if (flags.mode) cfg.params.mode = parse_mode(*flags.mode);
  if (flags.seed) cfg.params.seed = *flags.seed;
  if (flags.out_dir) cfg.out_dir = *flags.out_dir;
  if (flags.trace_every) cfg.trace_every = *flags.trace_every;
  if (flags.threads) cfg.params.threads = *flags.threads;
  if (cfg.trace_every < 1)
    throw ConfigError("--trace-every must be at least 1");

  // instantiate the game and the known equilibrium
  GameProblem problem;
  NashPoint xstar;
  std::optional<CournotGameSpec> cournot;
  std::optional<QuadraticGameSpec> quad;
  if (cfg.game == GameKind::kCournot) {
    cournot.emplace(synthesize_cournot(cfg.dim, cfg.players, cfg.synth_seed,
                                       cfg.beta, cfg.price_a, cfg.price_b));
    problem = make_problem(*cournot);
    xstar = cournot->xstar;
  } else {
    if (cfg.quad_a.size() != cfg.quad_b.size())
      throw ConfigError("quadratic instance: a and b sizes differ");
    quad.emplace(cfg.quad_a, cfg.quad_b);
    cfg.players = quad->players();
    cfg.dim = 1;
    xstar = quadratic_nash(*quad);
    problem = cfg.game == GameKind::kQuadratic
                  ? make_problem(*quad)
                  : make_problem(PerturbedQuadraticGameSpec(*quad));
  }

  // resolve the init center: absolute override, else x* plus the offsets
  Matrix center;
  if (cfg.init_center_flat) {
    const auto& flat = *cfg.init_center_flat;
    if (static_cast<Eigen::Index>(flat.size()) !=
        static_cast<Eigen::Index>(cfg.dim) * cfg.players)
      throw ConfigError("init.center needs d*M values (" +
                        std::to_string(cfg.dim * cfg.players) + "), got " +
                        std::to_string(flat.size()));
    center = Eigen::Map<const Matrix>(flat.data(), cfg.dim, cfg.players);
  } else if (cfg.game == GameKind::kCournot) {
    center = xstar;
    if (cfg.init_uniform_center) {
      for (int m = 0; m < cfg.players; ++m) {
        CounterStream stream(cfg.params.seed, kRngDomainCenter, 0,
                             static_cast<std::uint64_t>(m), 0);
        for (int h = 0; h < cfg.dim; ++h)
          center(h, m) += 2.0 * stream.next_uniform() - 1.0;
      }
    }
  } else {
    center = xstar;
    if (cfg.init_offset.size() > 0) {
      if (cfg.init_offset.size() != cfg.players)
        throw ConfigError("init.offset needs one entry per player");
      for (int m = 0; m < cfg.players; ++m)
        center(0, m) += cfg.init_offset[m];
    }
  }

  const auto warnings = validate_params(cfg.params);
  const int threads = resolve_threads(cfg.params.threads);

  fs::create_directories(cfg.out_dir);
  const fs::path trace_path = fs::path(cfg.out_dir) / "trace.csv";
  const fs::path manifest_path = fs::path(cfg.out_dir) / "manifest.json";

  nlohmann::json manifest = solve_manifest(cfg, center, warnings);

  TraceCsvWriter writer(trace_path, cfg.dim, cfg.players,
                        cfg.game == GameKind::kCournot, cfg.trace_every,
                        cfg.params.steps);
  std::function<double(const Matrix&)> residual_fn;
  if (cournot)
    residual_fn = [&](const Matrix& x) { return residual_norm(*cournot, x); };

  InitSpec init{center, cfg.init_variance};
  SolverParams params = cfg.params;
  params.threads = threads;

  const auto start = std::chrono::steady_clock::now();
  double final_v = std::numeric_limits<double>::infinity();
  std::optional<double> final_residual;
  bool diverged = false;
  long divergence_step = -1;
  try {
    run(problem, params, init, [&](const Ensemble& e, const Matrix& cons) {
      const TraceRecord rec = make_trace_record(e, cons, xstar, residual_fn);
      writer.record(rec);
      final_v = rec.V;
      final_residual = rec.residual;
    });
  } catch (const DivergenceError& err) {
    diverged = true;
    divergence_step = err.step();
    writer.sentinel(err.step(), static_cast<double>(err.step()) * params.dt);
    final_v = std::numeric_limits<double>::infinity();
    if (cournot) final_residual = std::numeric_limits<double>::infinity();
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  manifest["timestamps"]["finished"] = iso_timestamp();
  manifest["result"] = {{"final_V", final_v},
                        {"diverged", diverged},
                        {"divergence_step", divergence_step},
                        {"wall_seconds", wall}};
  if (final_residual) manifest["result"]["final_residual"] = *final_residual;
  std::ofstream mout(manifest_path);
  mout << manifest.dump(2) << "\n";

  std::cout << "final_V=" << format_g17(final_v);
  if (final_residual)
    std::cout << " final_residual=" << format_g17(*final_residual);
  std::cout << " wall_seconds=" << wall << "\n";
  return diverged ? 2 : 0;
}

struct SweepFlags {
  std::string case_id;
  std::string preset = "desk";
  std::optional<int> seeds;
  std::optional<int> n;
  std::optional<int> threads;
  std::optional<long> trace_every;
  std::string out_dir = "nashcbo_sweep";
  std::string config;
};

int run_sweep_cmd(SweepFlags flags) {
  std::optional<SweepSpec> from_manifest;
  if (!flags.config.empty()) {
    const fs::path path(flags.config);
    if (looks_like_json(path)) {
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot read config " + flags.config);
      nlohmann::json j;
      in >> j;
      from_manifest = sweep_spec_from_json(
          j.contains("spec") ? j.at("spec") : j);
    } else {
      const ConfigMap ini = parse_ini_file(path);
      const auto it = ini.find("sweep");
      if (it == ini.end())
        throw ConfigError("sweep config file needs a [sweep] section");
      for (const auto& [key, value] : it->second) {
        if (key == "case") {
          if (flags.case_id.empty()) flags.case_id = value;
        } else if (key == "preset") flags.preset = value;
        else if (key == "seeds" && !flags.seeds)
          flags.seeds = static_cast<int>(parse_long(value, "sweep.seeds"));
        else if (key == "n" && !flags.n)
          flags.n = static_cast<int>(parse_long(value, "sweep.n"));
        else if (key == "threads" && !flags.threads)
          flags.threads = static_cast<int>(parse_long(value, "sweep.threads"));
        else if (key == "out_dir") flags.out_dir = value;
        else if (key == "trace_every" && !flags.trace_every)
          flags.trace_every = parse_long(value, "sweep.trace_every");
      }
    }
  }

  SweepSpec spec;
  if (from_manifest) {
    spec = *from_manifest;
  } else {
    if (flags.case_id.empty())
      throw ConfigError("missing required --case");
    spec = build_case(flags.case_id, flags.preset);
  }
  if (flags.seeds) {
    if (*flags.seeds < 1) throw ConfigError("--seeds must be at least 1");
    spec.seeds = seed_list(*flags.seeds);
  }
  if (flags.n) {
    for (const auto& ax : spec.axes)
      if (ax.name == "n")
        throw ConfigError("case " + spec.id +
                          " sweeps N; --n cannot override an axis");
    spec.base.particles = *flags.n;
  }
  if (flags.trace_every) spec.trace_every = *flags.trace_every;

  const int threads = resolve_threads(flags.threads.value_or(0));
  fs::create_directories(flags.out_dir);

  std::cout << "sweep " << spec.id << " (" << spec.preset << "): "
            << spec.cells() << " cells x " << spec.seeds.size()
            << " seeds\n";

  std::function<TraceSink(long, std::uint64_t)> make_sink;
  if (spec.trace_every > 0) {
    const fs::path dir(flags.out_dir);
    const bool residual = spec.game == GameKind::kCournot;
    make_sink = [&spec, dir, residual](long cell,
                                       std::uint64_t seed) -> TraceSink {
      const ResolvedRun rr = resolve_run(spec, cell, seed);
      char name[64];
      std::snprintf(name, sizeof(name), "trace_cell%ld_seed%llu.csv", cell,
                    static_cast<unsigned long long>(seed));
      auto writer = std::make_shared<TraceCsvWriter>(
          dir / name, rr.dim, rr.players, residual, spec.trace_every,
          rr.params.steps);
      return [writer](const TraceRecord& rec) { writer->record(rec); };
    };
  }

  const auto start = std::chrono::steady_clock::now();
  const SweepResult result = run_sweep(spec, threads, make_sink);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  write_sweep_summary(fs::path(flags.out_dir) / "sweep_summary.csv", result);
  nlohmann::json manifest = sweep_manifest(spec, threads);
  manifest["timestamps"]["finished"] = iso_timestamp();
  manifest["wall_seconds"] = wall;
  std::ofstream mout(fs::path(flags.out_dir) / "manifest.json");
  mout << manifest.dump(2) << "\n";

  long diverged = 0;
  for (const auto& run : result.runs) diverged += run.diverged ? 1 : 0;
  std::cout << "completed " << result.runs.size() << " runs (" << diverged
            << " diverged) in " << wall << " s\n";
  return 0;
}

int run_check_cmd(const std::string& only) {
  static const std::vector<std::string> known = {
      "laplace", "quantlaplace", "gradient", "consensus", "lemma"};
  if (!only.empty() &&
      std::find(known.begin(), known.end(), only) == known.end())
    throw ConfigError("unknown check '" + only + "'");
  const auto results = run_checks(only);
  bool all_pass = true;
  std::string first_fail;
  for (const auto& r : results) {
    std::printf("%-14s %s  %s\n", r.name.c_str(),
                r.pass ? "PASS" : "FAIL", r.detail.c_str());
    if (!r.pass && all_pass) {
      all_pass = false;
      first_fail = r.name;
    }
  }
  if (!all_pass) {
    std::cout << "check failed: " << first_fail << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"consensus-based Nash equilibrium solver"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  auto* solve = app.add_subcommand("solve", "run one particle solve");
  SolveFlags sf;
  std::string game_str, mode_str, out_dir_str;
  int m_val = 0, d_val = 0, n_val = 0, threads_val = 0;
  double lambda_val = 0, sigma_val = 0, alpha_val = 0, dt_val = 0;
  long steps_val = 0, trace_every_val = 0;
  std::uint64_t seed_val = 0;
  solve->add_option("--game", game_str,
                    "game family: quadratic, quadratic_perturbed, cournot");
  solve->add_option("--m", m_val, "number of players");
  solve->add_option("--d", d_val, "strategy dimension (cournot)");
  solve->add_option("--n", n_val, "particles per player");
  solve->add_option("--lambda", lambda_val, "drift rate");
  solve->add_option("--sigma", sigma_val, "noise strength");
  solve->add_option("--alpha", alpha_val, "consensus sharpness");
  solve->add_option("--dt", dt_val, "time step");
  solve->add_option("--steps", steps_val, "number of iterations");
  solve->add_option("--mode", mode_str, "noise mode: aniso or iso");
  solve->add_option("--seed", seed_val, "random seed");
  solve->add_option("--out-dir", out_dir_str, "output directory");
  solve->add_option("--trace-every", trace_every_val,
                    "record every k-th step");
  solve->add_option("--config", sf.config, "config file (ini or manifest)");
  solve->add_option("--threads", threads_val, "worker threads");

  auto* sweep = app.add_subcommand("sweep", "run an experiment grid");
  SweepFlags wf;
  int sweep_seeds = 0, sweep_n = 0, sweep_threads = 0;
  long sweep_trace_every = 0;
  sweep->add_option("--case", wf.case_id, "a1 a2 a3 a4 b1 b2 b3");
  sweep->add_option("--preset", wf.preset, "paper or desk");
  sweep->add_option("--seeds", sweep_seeds, "number of seeds");
  sweep->add_option("--n", sweep_n, "particle-count override");
  sweep->add_option("--threads", sweep_threads, "worker threads");
  sweep->add_option("--trace-every", sweep_trace_every,
                    "write per-run traces every k-th step");
  sweep->add_option("--out-dir", wf.out_dir, "output directory");
  sweep->add_option("--config", wf.config, "config file (ini or manifest)");

  auto* check = app.add_subcommand("check", "run verification suites");
  std::string only;
  check->add_option("--only", only, "run a single suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (solve->parsed()) {
      if (solve->count("--game")) sf.game = game_str;
      if (solve->count("--m")) sf.m = m_val;
      if (solve->count("--d")) sf.d = d_val;
      if (solve->count("--n")) sf.n = n_val;
      if (solve->count("--lambda")) sf.lambda = lambda_val;
      if (solve->count("--sigma")) sf.sigma = sigma_val;
      if (solve->count("--alpha")) sf.alpha = alpha_val;
      if (solve->count("--dt")) sf.dt = dt_val;
      if (solve->count("--steps")) sf.steps = steps_val;
      if (solve->count("--mode")) sf.mode = mode_str;
      if (solve->count("--seed")) sf.seed = seed_val;
      if (solve->count("--out-dir")) sf.out_dir = out_dir_str;
      if (solve->count("--trace-every")) sf.trace_every = trace_every_val;
      if (solve->count("--threads")) sf.threads = threads_val;
      return run_solve(sf);
    }
    if (sweep->parsed()) {
      if (sweep->count("--seeds")) wf.seeds = sweep_seeds;
      if (sweep->count("--n")) wf.n = sweep_n;
      if (sweep->count("--threads")) wf.threads = sweep_threads;
      if (sweep->count("--trace-every")) wf.trace_every = sweep_trace_every;
      return run_sweep_cmd(wf);
    }
    if (check->parsed()) return run_check_cmd(only);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
