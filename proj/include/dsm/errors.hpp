#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dsm {

enum class ErrorCode {
  input,             // bad arguments, dimension mismatches, insufficient data
  parse,             // malformed files / configs
  spec,              // unknown problem name, invalid problem params
  numeric,           // non-finite values, failed residual checks, non-convergence
  singular,          // matrix singular to working precision
  stiffness,         // integrator step underflow
  budget,            // step / iteration budget exhausted
  divergence,        // fixed-point iteration blowing up
  source_condition,  // y not representable as A psi
  path,              // every point of an eps-path failed
  hypothesis,        // a theorem hypothesis (rho < 1, eta < 1, ball containment) fails
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct InputError : Error {
  explicit InputError(const std::string& msg) : Error(ErrorCode::input, msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(ErrorCode::parse, msg) {}
};

struct SpecError : Error {
  explicit SpecError(const std::string& msg) : Error(ErrorCode::spec, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg, std::vector<double> last = {})
      : Error(ErrorCode::numeric, msg), last_iterate(std::move(last)) {}
  std::vector<double> last_iterate;  // e.g. the power-iteration vector at the cap
};

struct SingularError : Error {
  explicit SingularError(const std::string& msg) : Error(ErrorCode::singular, msg) {}
};

struct StiffnessError : Error {
  explicit StiffnessError(const std::string& msg) : Error(ErrorCode::stiffness, msg) {}
};

struct BudgetError : Error {
  explicit BudgetError(const std::string& msg) : Error(ErrorCode::budget, msg) {}
};

struct DivergenceError : Error {
  DivergenceError(const std::string& msg, std::vector<double> history)
      : Error(ErrorCode::divergence, msg), step_history(std::move(history)) {}
  std::vector<double> step_history;
};

struct SourceConditionError : Error {
  explicit SourceConditionError(const std::string& msg) : Error(ErrorCode::source_condition, msg) {}
};

struct PathError : Error {
  explicit PathError(const std::string& msg) : Error(ErrorCode::path, msg) {}
};

struct HypothesisViolation : Error {
  HypothesisViolation(const std::string& msg, double value) : Error(ErrorCode::hypothesis, msg), value(value) {}
  double value;  // the offending rho or eta
};

// Non-fatal diagnostics (soft ball checks, ||psi|| >= 0.1, fitted k ~ 0). Tests swap the sink.
inline std::function<void(const std::string&)>& warning_handler() {
  static std::function<void(const std::string&)> handler = [](const std::string& msg) {
    std::cerr << "[dsm] warning: " << msg << '\n';
  };
  return handler;
}

inline void warn(const std::string& msg) { warning_handler()(msg); }

}  // namespace dsm
