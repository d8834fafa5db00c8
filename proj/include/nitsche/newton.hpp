#pragma once

#include "nitsche/assembly.hpp"

#include <string>

namespace nitsche {

enum class StoppingMode { Global, Local, ResidualOnly };

StoppingMode parse_stopping_mode(const std::string& s);
std::string to_string(StoppingMode m);

struct NewtonOptions {
  StoppingMode mode = StoppingMode::Global;
  double gamma_lin = 0.01;
  int max_iterations = 30;
  double residual_tol = 1e-10; // relative, residual-only mode
};

// Global estimator components of one Newton iterate, plus the per-element
// linearisation and remaining parts for the local criterion.
struct IterationEstimate {
  double osc = 0.0, str = 0.0, lin = 0.0, neu = 0.0, cnt = 0.0, frc = 0.0;
  std::vector<double> lin_local, rest_local;
};

using EstimateHook =
    std::function<IterationEstimate(const FeFunction& u_k, const FeFunction& u_prev)>;

struct NewtonTraceRow {
  int level = 0;
  int k = 0;
  IterationEstimate eta;
  double residual = 0.0; // relative Euclidean norm of the reduced residual
  bool stop = false;
};

struct NewtonResult {
  FeFunction u;
  int iterations = 0;
  bool converged = false;
  std::vector<NewtonTraceRow> trace;
};

// Stopping test of the adaptive algorithm: eta_lin <= gamma_lin * (sum of the others).
bool linearization_small(const IterationEstimate& e, StoppingMode mode, double gamma_lin);

NewtonResult newton_solve(const FeFunction& u0, const ProblemData& data,
                          const NewtonOptions& opts, const EstimateHook& hook = {},
                          int level = 0);

} // namespace nitsche
