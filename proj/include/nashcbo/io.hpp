#pragma once

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashcbo/diagnostics.hpp"
#include "nashcbo/dynamics.hpp"
#include "nashcbo/errors.hpp"
#include "nashcbo/experiments.hpp"
#include "nashcbo/version.hpp"

namespace nashcbo {

// 17 significant digits: enough for exact double round-trips, so CSV files
// are bit-faithful without a binary format.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// trace.csv
// ---------------------------------------------------------------------------

// Streaming trace writer.  Header:
//   step,t,V,V_1,...,V_M,residual,consensus_1_1,...,consensus_d_M
// with the residual column present only when the game defines one, and the
// consensus columns named coordinate-first per player (player-major order).
class TraceCsvWriter {
 public:
  TraceCsvWriter(const std::filesystem::path& path, int d, int players,
                 bool with_residual, long every, long total_steps)
      : out_(path), d_(d), players_(players), with_residual_(with_residual),
        every_(every < 1 ? 1 : every), total_steps_(total_steps) {
    if (!out_)
      throw ConfigError("cannot open trace file " + path.string());
    out_ << "step,t,V";
    for (int m = 1; m <= players_; ++m) out_ << ",V_" << m;
    if (with_residual_) out_ << ",residual";
    for (int m = 1; m <= players_; ++m)
      for (int h = 1; h <= d_; ++h) out_ << ",consensus_" << h << "_" << m;
    out_ << "\n";
  }

  bool wants(long step) const {
    return step % every_ == 0 || step == total_steps_;
  }

  void record(const TraceRecord& rec) {
    if (!wants(rec.step)) return;
    out_ << rec.step << ',' << format_g17(rec.t) << ',' << format_g17(rec.V);
    for (Eigen::Index m = 0; m < rec.V_m.size(); ++m)
      out_ << ',' << format_g17(rec.V_m[m]);
    if (with_residual_)
      out_ << ',' << format_g17(rec.residual ? *rec.residual : 0.0);
    for (Eigen::Index m = 0; m < rec.consensus.cols(); ++m)
      for (Eigen::Index h = 0; h < rec.consensus.rows(); ++h)
        out_ << ',' << format_g17(rec.consensus(h, m));
    out_ << "\n";
  }

  // Divergence marker: every value column carries the +inf sentinel.
  void sentinel(long step, double t) {
    out_ << step << ',' << format_g17(t);
    const int value_cols =
        1 + players_ + (with_residual_ ? 1 : 0) + d_ * players_;
    for (int j = 0; j < value_cols; ++j) out_ << ",inf";
    out_ << "\n";
  }

 private:
  std::ofstream out_;
  int d_;
  int players_;
  bool with_residual_;
  long every_;
  long total_steps_;
};

// ---------------------------------------------------------------------------
// sweep_summary.csv
// ---------------------------------------------------------------------------

// One row per (grid point, seed) with agg=0, then one aggregated row per
// grid point with agg=1 (medians over seeds; the diverged column carries the
// divergence fraction and seed is -1).
inline void write_sweep_summary(const std::filesystem::path& path,
                                const SweepResult& result) {
  std::ofstream out(path);
  if (!out)
    throw ConfigError("cannot open sweep summary " + path.string());
  const SweepSpec& spec = result.spec;
  out << "agg,cell";
  for (const auto& ax : spec.axes) out << ',' << ax.name;
  out << ",seed,initial_V,final_V,final_residual,diverged,first_passage\n";
  const auto write_axes = [&](const std::vector<double>& values) {
    for (double v : values) out << ',' << format_g17(v);
  };
  for (const SweepRun& run : result.runs) {
    out << "0," << run.cell;
    write_axes(run.axis_values);
    out << ',' << run.seed << ',' << format_g17(run.initial_V) << ','
        << format_g17(run.final_V) << ',';
    if (run.final_residual) out << format_g17(*run.final_residual);
    out << ',' << (run.diverged ? 1 : 0) << ',' << run.first_passage << "\n";
  }
  for (const AggregateCell& agg : aggregate(result)) {
    out << "1," << agg.cell;
    write_axes(agg.axis_values);
    out << ",-1," << format_g17(agg.median_initial_V) << ','
        << format_g17(agg.median_final_V) << ',';
    if (agg.median_final_residual)
      out << format_g17(*agg.median_final_residual);
    out << ',' << format_g17(agg.divergence_fraction) << ','
        << format_g17(agg.median_first_passage) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Config files: flat INI, `key = value` under [sections]; unknown keys are
// hard errors so typos cannot silently change an experiment.
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline ConfigMap parse_ini(std::istream& in) {
  ConfigMap config;
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      config.try_emplace(section);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    config[section][key] = value;
  }
  return config;
}

inline ConfigMap parse_ini_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_ini(in);
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value '" + s + "' for " + what);
  }
}

inline long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value '" + s + "' for " + what);
  }
}

inline std::vector<double> parse_double_list(const std::string& s,
                                             const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw ConfigError("empty element in list for " + what);
    out.push_back(parse_double(item, what));
  }
  if (out.empty()) throw ConfigError("empty list for " + what);
  return out;
}

// ---------------------------------------------------------------------------
// Resolved solve configuration (defaults <- config file <- CLI flags).
// ---------------------------------------------------------------------------

struct SolveConfig {
  GameKind game = GameKind::kQuadraticPerturbed;

  Vector quad_a = default_quad_a();
  Vector quad_b = default_quad_b();

  int dim = 5;  // cournot only; the quadratic family is one-dimensional
  int players = 4;
  std::uint64_t synth_seed = 2024;
  double beta = 2.0;
  double price_a = 100.0;
  double price_b = 1e-3;

  SolverParams params;
  double init_variance = 5.0;
  Vector init_offset;                 // quadratic: center = x* + offset
  bool init_uniform_center = true;    // cournot: center = x* + U[-1,1]
  // Absolute center override (column-major d*M values); set by manifest
  // replay or an explicit config, reshaped once the game shape is known.
  std::optional<std::vector<double>> init_center_flat;

  std::string out_dir = "nashcbo_out";
  long trace_every = 1;

  SolveConfig() {
    params.lambda = (1e4 + 0.01) / 2.0;
    params.sigma = 0.1;
    params.alpha = 1e7;
    params.dt = 1e-4;
    params.steps = 100;
    params.particles = 40;
    params.mode = NoiseMode::kAnisotropic;
    params.seed = 1;
    params.threads = 0;  // resolve from environment at run time
    init_offset = default_quad_offset();
  }
};

inline GameKind parse_game_kind(const std::string& s) {
  if (s == "quadratic") return GameKind::kQuadratic;
  if (s == "quadratic_perturbed") return GameKind::kQuadraticPerturbed;
  if (s == "cournot") return GameKind::kCournot;
  throw ConfigError("unknown game kind '" + s +
                    "' (expected quadratic, quadratic_perturbed or cournot)");
}

inline NoiseMode parse_mode(const std::string& s) {
  if (s == "aniso") return NoiseMode::kAnisotropic;
  if (s == "iso") return NoiseMode::kIsotropic;
  throw ConfigError("unknown mode '" + s + "' (expected aniso or iso)");
}

// Applies an INI config to a SolveConfig.  Every key is checked against the
// known vocabulary.
inline void apply_ini(SolveConfig& cfg, const ConfigMap& ini) {
  for (const auto& [section, entries] : ini) {
    if (section == "game") {
      for (const auto& [key, value] : entries) {
        if (key == "kind") cfg.game = parse_game_kind(value);
        else if (key == "a") {
          const auto xs = parse_double_list(value, "game.a");
          cfg.quad_a = Eigen::Map<const Vector>(xs.data(), xs.size());
        } else if (key == "b") {
          const auto xs = parse_double_list(value, "game.b");
          cfg.quad_b = Eigen::Map<const Vector>(xs.data(), xs.size());
        } else if (key == "d") cfg.dim = static_cast<int>(parse_long(value, "game.d"));
        else if (key == "m") cfg.players = static_cast<int>(parse_long(value, "game.m"));
        else if (key == "synth_seed")
          cfg.synth_seed = static_cast<std::uint64_t>(parse_long(value, "game.synth_seed"));
        else if (key == "beta") cfg.beta = parse_double(value, "game.beta");
        else if (key == "price_a") cfg.price_a = parse_double(value, "game.price_a");
        else if (key == "price_b") cfg.price_b = parse_double(value, "game.price_b");
        else throw ConfigError("unknown config key game." + key);
      }
    } else if (section == "solver") {
      for (const auto& [key, value] : entries) {
        if (key == "lambda") cfg.params.lambda = parse_double(value, "solver.lambda");
        else if (key == "sigma") cfg.params.sigma = parse_double(value, "solver.sigma");
        else if (key == "alpha") cfg.params.alpha = parse_double(value, "solver.alpha");
        else if (key == "dt") cfg.params.dt = parse_double(value, "solver.dt");
        else if (key == "steps") cfg.params.steps = parse_long(value, "solver.steps");
        else if (key == "n")
          cfg.params.particles = static_cast<int>(parse_long(value, "solver.n"));
        else if (key == "mode") cfg.params.mode = parse_mode(value);
        else if (key == "seed")
          cfg.params.seed = static_cast<std::uint64_t>(parse_long(value, "solver.seed"));
        else if (key == "threads")
          cfg.params.threads = static_cast<int>(parse_long(value, "solver.threads"));
        else throw ConfigError("unknown config key solver." + key);
      }
    } else if (section == "init") {
      for (const auto& [key, value] : entries) {
        if (key == "variance") cfg.init_variance = parse_double(value, "init.variance");
        else if (key == "offset") {
          const auto xs = parse_double_list(value, "init.offset");
          cfg.init_offset = Eigen::Map<const Vector>(xs.data(), xs.size());
        } else if (key == "uniform_center") {
          if (value == "true" || value == "1") cfg.init_uniform_center = true;
          else if (value == "false" || value == "0") cfg.init_uniform_center = false;
          else throw ConfigError("bad boolean for init.uniform_center");
        } else if (key == "center") {
          cfg.init_center_flat = parse_double_list(value, "init.center");
        } else throw ConfigError("unknown config key init." + key);
      }
    } else if (section == "output") {
      for (const auto& [key, value] : entries) {
        if (key == "out_dir") cfg.out_dir = value;
        else if (key == "trace_every")
          cfg.trace_every = parse_long(value, "output.trace_every");
        else throw ConfigError("unknown config key output." + key);
      }
    } else if (section == "sweep") {
      // parsed by the sweep entry point; tolerated here so one file can
      // configure both commands
      for (const auto& [key, value] : entries) {
        (void)value;
        if (key != "case" && key != "preset" && key != "seeds" &&
            key != "n" && key != "threads" && key != "out_dir" &&
            key != "trace_every")
          throw ConfigError("unknown config key sweep." + key);
      }
    } else {
      throw ConfigError("unknown config section [" + section + "]");
    }
  }
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    nlohmann::json col = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) col.push_back(m(r, c));
    cols.push_back(std::move(col));
  }
  return cols;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto cols = static_cast<Eigen::Index>(j.size());
  if (cols == 0) return Matrix(0, 0);
  const auto rows = static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      m(r, c) = j.at(c).at(r).get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = j.at(i).get<double>();
  return v;
}

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// The solve manifest carries everything needed to reproduce the run
// bit-exactly; in particular the fully resolved absolute init center.
inline nlohmann::json solve_manifest(const SolveConfig& cfg,
                                     const Matrix& resolved_center,
                                     const std::vector<std::string>& warnings) {
  nlohmann::json j;
  j["artifact"] = {{"name", "nashcbo"}, {"version", kVersion}};
  j["kind"] = "solve";
  j["timestamps"] = {{"started", iso_timestamp()}};
  nlohmann::json game;
  game["kind"] = to_string(cfg.game);
  if (cfg.game == GameKind::kCournot) {
    game["d"] = cfg.dim;
    game["m"] = cfg.players;
    game["synth_seed"] = cfg.synth_seed;
    game["beta"] = cfg.beta;
    game["price_a"] = cfg.price_a;
    game["price_b"] = cfg.price_b;
  } else {
    game["a"] = vector_to_json(cfg.quad_a);
    game["b"] = vector_to_json(cfg.quad_b);
  }
  j["game"] = std::move(game);
  j["solver"] = {{"lambda", cfg.params.lambda}, {"sigma", cfg.params.sigma},
                 {"alpha", cfg.params.alpha},   {"dt", cfg.params.dt},
                 {"steps", cfg.params.steps},   {"n", cfg.params.particles},
                 {"mode", to_string(cfg.params.mode)},
                 {"seed", cfg.params.seed},     {"threads", cfg.params.threads}};
  j["init"] = {{"variance", cfg.init_variance},
               {"center", matrix_to_json(resolved_center)},
               {"note", "variance is the isotropic covariance scale "
                        "(covariance = variance * identity)"}};
  j["output"] = {{"out_dir", cfg.out_dir}, {"trace_every", cfg.trace_every}};
  j["warnings"] = warnings;
  return j;
}

// Rebuilds a SolveConfig from a manifest; the stored absolute center is kept
// so the replay does not re-derive anything.
inline SolveConfig solve_config_from_manifest(const nlohmann::json& j) {
  if (j.value("kind", "") != "solve")
    throw ConfigError("manifest is not a solve manifest");
  SolveConfig cfg;
  const auto& game = j.at("game");
  cfg.game = parse_game_kind(game.at("kind").get<std::string>());
  if (cfg.game == GameKind::kCournot) {
    cfg.dim = game.at("d").get<int>();
    cfg.players = game.at("m").get<int>();
    cfg.synth_seed = game.at("synth_seed").get<std::uint64_t>();
    cfg.beta = game.at("beta").get<double>();
    cfg.price_a = game.at("price_a").get<double>();
    cfg.price_b = game.at("price_b").get<double>();
  } else {
    cfg.quad_a = vector_from_json(game.at("a"));
    cfg.quad_b = vector_from_json(game.at("b"));
  }
  const auto& solver = j.at("solver");
  cfg.params.lambda = solver.at("lambda").get<double>();
  cfg.params.sigma = solver.at("sigma").get<double>();
  cfg.params.alpha = solver.at("alpha").get<double>();
  cfg.params.dt = solver.at("dt").get<double>();
  cfg.params.steps = solver.at("steps").get<long>();
  cfg.params.particles = solver.at("n").get<int>();
  cfg.params.mode = parse_mode(solver.at("mode").get<std::string>());
  cfg.params.seed = solver.at("seed").get<std::uint64_t>();
  cfg.params.threads = solver.at("threads").get<int>();
  const auto& init = j.at("init");
  cfg.init_variance = init.at("variance").get<double>();
  const Matrix center = matrix_from_json(init.at("center"));
  std::vector<double> flat;
  flat.reserve(center.size());
  for (Eigen::Index c = 0; c < center.cols(); ++c)
    for (Eigen::Index r = 0; r < center.rows(); ++r)
      flat.push_back(center(r, c));
  cfg.init_center_flat = std::move(flat);
  const auto& output = j.at("output");
  cfg.out_dir = output.at("out_dir").get<std::string>();
  cfg.trace_every = output.at("trace_every").get<long>();
  return cfg;
}

inline nlohmann::json sweep_spec_to_json(const SweepSpec& spec) {
  nlohmann::json j;
  j["id"] = spec.id;
  j["preset"] = spec.preset;
  j["game"] = to_string(spec.game);
  j["quad_a"] = vector_to_json(spec.quad_a);
  j["quad_b"] = vector_to_json(spec.quad_b);
  j["dim"] = spec.dim;
  j["players"] = spec.players;
  j["game_seed"] = spec.game_seed;
  j["beta"] = spec.beta;
  j["price_a"] = spec.price_a;
  j["price_b"] = spec.price_b;
  j["solver"] = {{"lambda", spec.base.lambda}, {"sigma", spec.base.sigma},
                 {"alpha", spec.base.alpha},   {"dt", spec.base.dt},
                 {"steps", spec.base.steps},   {"n", spec.base.particles},
                 {"mode", to_string(spec.base.mode)},
                 {"seed", spec.base.seed},     {"threads", spec.base.threads}};
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& ax : spec.axes)
    axes.push_back({{"name", ax.name}, {"values", ax.values}});
  j["axes"] = std::move(axes);
  j["seeds"] = spec.seeds;
  j["init"] = {{"variance", spec.init_variance},
               {"offset", vector_to_json(spec.init_offset)},
               {"uniform_center", spec.init_uniform_center},
               {"shared_init", spec.shared_init}};
  j["trace_every"] = spec.trace_every;
  return j;
}

inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  SweepSpec spec;
  spec.id = j.at("id").get<std::string>();
  spec.preset = j.at("preset").get<std::string>();
  spec.game = parse_game_kind(j.at("game").get<std::string>());
  spec.quad_a = vector_from_json(j.at("quad_a"));
  spec.quad_b = vector_from_json(j.at("quad_b"));
  spec.dim = j.at("dim").get<int>();
  spec.players = j.at("players").get<int>();
  spec.game_seed = j.at("game_seed").get<std::uint64_t>();
  spec.beta = j.at("beta").get<double>();
  spec.price_a = j.at("price_a").get<double>();
  spec.price_b = j.at("price_b").get<double>();
  const auto& solver = j.at("solver");
  spec.base.lambda = solver.at("lambda").get<double>();
  spec.base.sigma = solver.at("sigma").get<double>();
  spec.base.alpha = solver.at("alpha").get<double>();
  spec.base.dt = solver.at("dt").get<double>();
  spec.base.steps = solver.at("steps").get<long>();
  spec.base.particles = solver.at("n").get<int>();
  spec.base.mode = parse_mode(solver.at("mode").get<std::string>());
  spec.base.seed = solver.at("seed").get<std::uint64_t>();
  spec.base.threads = solver.at("threads").get<int>();
  for (const auto& ax : j.at("axes")) {
    SweepAxis axis;
    axis.name = ax.at("name").get<std::string>();
    axis.values = ax.at("values").get<std::vector<double>>();
    spec.axes.push_back(std::move(axis));
  }
  spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  const auto& init = j.at("init");
  spec.init_variance = init.at("variance").get<double>();
  spec.init_offset = vector_from_json(init.at("offset"));
  spec.init_uniform_center = init.at("uniform_center").get<bool>();
  spec.shared_init = init.at("shared_init").get<bool>();
  spec.trace_every = j.at("trace_every").get<long>();
  return spec;
}

inline nlohmann::json sweep_manifest(const SweepSpec& spec, int threads) {
  nlohmann::json j;
  j["artifact"] = {{"name", "nashcbo"}, {"version", kVersion}};
  j["kind"] = "sweep";
  j["timestamps"] = {{"started", iso_timestamp()}};
  j["spec"] = sweep_spec_to_json(spec);
  j["threads"] = threads;
  j["notes"] = {
      "init variance is the isotropic covariance scale",
      "shared-init cases derive the initial ensemble from the sweep seed "
      "(and particle count) only",
      "wall-clock times are intentionally kept out of the CSV so outputs "
      "are byte-identical across thread counts"};
  return j;
}

}  // namespace nashcbo
