#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nashcbo/parallel.hpp"

namespace fs = std::filesystem;

namespace {

const char* kBin = NASHCBO_BIN;

fs::path work_dir() {
  static const fs::path dir =
      fs::temp_directory_path() /
      ("nashcbo_cli_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(kBin) + " " + args +
                          " >" + (work_dir() / "stdout.txt").string() +
                          " 2>" + (work_dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string last_stdout() {
  std::ifstream in(work_dir() / "stdout.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long count_lines(const fs::path& path) {
  std::ifstream in(path);
  long n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("thread resolution: explicit request, environment, fallback") {
  ::setenv("NASH_CBO_THREADS", "3", 1);
  CHECK(nashcbo::resolve_threads(0) == 3);
  CHECK(nashcbo::resolve_threads(5) == 5);
  ::setenv("NASH_CBO_THREADS", "garbage", 1);
  CHECK(nashcbo::resolve_threads(0) >= 1);
  ::unsetenv("NASH_CBO_THREADS");
  CHECK(nashcbo::resolve_threads(0) >= 1);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_cli("solve") == 1);                       // missing --game
  CHECK(run_cli("solve --game tictactoe") == 1);      // unknown game
  CHECK(run_cli("solve --game quadratic --mode spiral") == 1);
  CHECK(run_cli("sweep") == 1);                       // missing --case
  CHECK(run_cli("sweep --case z9 --preset desk") == 1);
  CHECK(run_cli("sweep --case a1 --preset mega") == 1);
  CHECK(run_cli("check --only nonsense") == 1);
  CHECK(run_cli("solve --config /nonexistent.ini") == 1);
  // overriding a swept particle count is rejected
  CHECK(run_cli("sweep --case a3 --preset desk --n 50") == 1);
}

TEST_CASE("solve writes a full trace and a replayable manifest") {
  const fs::path out = work_dir() / "solve_base";
  const int code = run_cli(
      "solve --game quadratic_perturbed --steps 100 --seed 3 --out-dir " +
      out.string());
  CHECK(code == 0);
  // header + steps+1 records at trace_every = 1
  CHECK(count_lines(out / "trace.csv") == 102);
  CHECK(last_stdout().find("final_V=") != std::string::npos);

  nlohmann::json manifest;
  {
    std::ifstream in(out / "manifest.json");
    REQUIRE(in.good());
    in >> manifest;
  }
  CHECK(manifest.at("kind") == "solve");
  CHECK(manifest.at("solver").at("seed") == 3);
  CHECK(manifest.at("result").at("diverged") == false);

  // replaying the manifest reproduces the trace byte for byte
  const fs::path replay = work_dir() / "solve_replay";
  const int rcode = run_cli("solve --config " +
                            (out / "manifest.json").string() +
                            " --out-dir " + replay.string());
  CHECK(rcode == 0);
  CHECK(read_file(replay / "trace.csv") == read_file(out / "trace.csv"));
}

TEST_CASE("solve accepts ini configs with flag overrides") {
  const fs::path ini = work_dir() / "solve.ini";
  {
    std::ofstream out(ini);
    out << "[game]\nkind = quadratic\n"
        << "[solver]\nsteps = 20\nseed = 5\n"
        << "[output]\ntrace_every = 2\n";
  }
  const fs::path out = work_dir() / "solve_ini";
  const int code =
      run_cli("solve --config " + ini.string() + " --steps 10 --out-dir " +
              out.string());
  CHECK(code == 0);
  // flags override the file: 10 steps, every 2nd plus final = 6 records
  CHECK(count_lines(out / "trace.csv") == 7);
}

TEST_CASE("solve is byte-identical across thread counts") {
  const fs::path one = work_dir() / "threads1";
  const fs::path eight = work_dir() / "threads8";
  CHECK(run_cli("solve --game cournot --d 3 --m 4 --n 50 --steps 30 "
                "--lambda 5.5 --sigma 1 --alpha 1e10 --dt 1e-3 "
                "--threads 1 --out-dir " + one.string()) == 0);
  CHECK(run_cli("solve --game cournot --d 3 --m 4 --n 50 --steps 30 "
                "--lambda 5.5 --sigma 1 --alpha 1e10 --dt 1e-3 "
                "--threads 8 --out-dir " + eight.string()) == 0);
  CHECK(read_file(one / "trace.csv") == read_file(eight / "trace.csv"));
}

TEST_CASE("divergence exits with code 2 and a sentinel row") {
  const fs::path out = work_dir() / "diverge";
  const int code = run_cli(
      "solve --game quadratic --lambda 0.001 --sigma 50 --alpha 1 --dt 1 "
      "--steps 3000 --n 10 --out-dir " + out.string());
  CHECK(code == 2);
  const std::string trace = read_file(out / "trace.csv");
  CHECK(trace.find(",inf,inf") != std::string::npos);
}

TEST_CASE("sweeps write the summary and a replayable manifest") {
  const fs::path out = work_dir() / "sweep_a1";
  const int code = run_cli(
      "sweep --case a1 --preset desk --seeds 2 --threads 2 --out-dir " +
      out.string());
  CHECK(code == 0);
  const auto summary = read_file(out / "sweep_summary.csv");
  CHECK(summary.rfind("agg,cell,alpha,seed,initial_V,final_V,"
                      "final_residual,diverged,first_passage\n", 0) == 0);
  // 12 cells x 2 seeds + 12 aggregate rows + header
  CHECK(count_lines(out / "sweep_summary.csv") == 1 + 24 + 12);

  // replay through the manifest, byte-identical summary
  const fs::path replay = work_dir() / "sweep_replay";
  const int rcode = run_cli("sweep --config " +
                            (out / "manifest.json").string() +
                            " --out-dir " + replay.string());
  CHECK(rcode == 0);
  CHECK(read_file(replay / "sweep_summary.csv") ==
        read_file(out / "sweep_summary.csv"));
}

TEST_CASE("single-suite checks run quickly and pass") {
  CHECK(run_cli("check --only laplace") == 0);
  const std::string out = last_stdout();
  CHECK(out.find("laplace") != std::string::npos);
  CHECK(out.find("PASS") != std::string::npos);
  CHECK(out.find("gradient") == std::string::npos);
}
