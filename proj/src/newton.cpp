#include "nitsche/newton.hpp"

namespace nitsche {

StoppingMode parse_stopping_mode(const std::string& s) {
  if (s == "global")
    return StoppingMode::Global;
  if (s == "local")
    return StoppingMode::Local;
  if (s == "residual")
    return StoppingMode::ResidualOnly;
  throw Error("unknown stopping mode '" + s + "'");
}

std::string to_string(StoppingMode m) {
  switch (m) {
  case StoppingMode::Global:
    return "global";
  case StoppingMode::Local:
    return "local";
  case StoppingMode::ResidualOnly:
    return "residual";
  }
  return "?";
}

bool linearization_small(const IterationEstimate& e, StoppingMode mode, double gamma_lin) {
  if (mode == StoppingMode::Global)
    return e.lin <= gamma_lin * (e.osc + e.str + e.neu + e.cnt + e.frc);
  if (mode == StoppingMode::Local) {
    if (e.lin_local.size() != e.rest_local.size())
      throw Error("local stopping criterion: per-element estimators missing");
    for (std::size_t t = 0; t < e.lin_local.size(); ++t)
      if (e.lin_local[t] > gamma_lin * e.rest_local[t])
        return false;
    return true;
  }
  throw Error("linearization_small: residual-only mode has no estimator test");
}

NewtonResult newton_solve(const FeFunction& u0, const ProblemData& data,
                          const NewtonOptions& opts, const EstimateHook& hook, int level) {
  if (opts.mode != StoppingMode::ResidualOnly && !hook)
    throw Error("newton_solve: estimator-based stopping needs an estimator hook");
  NewtonResult res;
  FeFunction u_prev = u0;
  const double lnorm =
      std::max(reduce(u0.space(), assemble_load(u0.space(), data)).norm(), 1e-300);
  for (int k = 1; k <= opts.max_iterations; ++k) {
    FeFunction u = solve(assemble_newton_system(u_prev, data));
    NewtonTraceRow row;
    row.level = level;
    row.k = k;
    row.residual = reduce(u.space(), nitsche_residual(u, data)).norm() / lnorm;
    if (opts.mode == StoppingMode::ResidualOnly) {
      const double step = (u.coeffs() - u_prev.coeffs()).norm();
      row.stop = row.residual <= opts.residual_tol ||
                 (k > 1 && step <= 1e-13 * std::max(u.coeffs().norm(), 1e-300));
    } else {
      row.eta = hook(u, u_prev);
      row.stop = linearization_small(row.eta, opts.mode, opts.gamma_lin);
    }
    res.trace.push_back(row);
    res.iterations = k;
    u_prev = std::move(u);
    if (row.stop) {
      res.converged = true;
      break;
    }
  }
  res.u = std::move(u_prev);
  return res;
}

} // namespace nitsche
