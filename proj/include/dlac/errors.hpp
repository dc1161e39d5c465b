#pragma once

#include <stdexcept>
#include <string>

namespace dlac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model right-hand side could not be evaluated (e.g. degenerate separator composition).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Integration produced a non-finite state.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, int stage)
      : Error(what + " (RK stage " + std::to_string(stage) + ")"), stage_(stage) {}
  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

/// Steady-state solve did not converge.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double best_residual)
      : Error(what + " (best residual " + std::to_string(best_residual) + ")"),
        best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Message exchange between controllers was incomplete.
class SyncError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A statistical diagnostic was asked for on degenerate data.
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlac
