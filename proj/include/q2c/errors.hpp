#pragma once

#include <stdexcept>
#include <string>

namespace q2c {

// Error taxonomy shared by the library and the CLI. Each class carries a
// short machine-parsable tag; the CLI maps tags to exit codes.
class Error : public std::runtime_error {
public:
  Error(std::string tag, const std::string& what)
      : std::runtime_error(what), tag_(std::move(tag)) {}
  const std::string& tag() const { return tag_; }

private:
  std::string tag_;
};

// Malformed input data (bad line, bad value, bad JSON).
class ParseError : public Error {
public:
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

// Structurally invalid data (dangling references, duplicates, empty sets).
class IntegrityError : public Error {
public:
  explicit IntegrityError(const std::string& what) : Error("integrity", what) {}
};

// Upstream LLM failure: transport error after retries or unparsable output.
class LlmError : public Error {
public:
  explicit LlmError(const std::string& what) : Error("llm", what) {}
};

// A calibration target no swept operating point can satisfy. Carries the
// nearest achievable point so callers can report it.
class InfeasibleTargetError : public Error {
public:
  InfeasibleTargetError(const std::string& what, double nearest_lambda,
                        double nearest_accuracy, double nearest_cost)
      : Error("infeasible", what),
        nearest_lambda(nearest_lambda),
        nearest_accuracy(nearest_accuracy),
        nearest_cost(nearest_cost) {}

  double nearest_lambda;
  double nearest_accuracy;
  double nearest_cost;
};

}  // namespace q2c
