#pragma once

#include <stdexcept>
#include <string>

namespace nashcbo {

// Cost evaluation produced a non-finite value or was called with bad shapes.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(std::string msg, int player)
      : std::runtime_error(std::move(msg)), player_(player) {}
  int player() const { return player_; }

 private:
  int player_ = -1;
};

// Particle system blew up: non-finite positions or costs mid-run.
// Carries the step index at which the blow-up was detected.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string msg, long step)
      : std::runtime_error(std::move(msg)), step_(step) {}
  long step() const { return step_; }

 private:
  long step_ = -1;
};

// Bad config file, unknown key, or inconsistent CLI flags.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Game synthesis failed a validity requirement (e.g. nonpositive cost vector).
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nashcbo
