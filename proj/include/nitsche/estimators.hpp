#pragma once

#include "nitsche/equilibration.hpp"
#include "nitsche/newton.hpp"

namespace nitsche {

// Largest c with ||v - mean_F v||_F <= c h_F^{1/2} ||grad v||_T over polynomials of the
// given degree on element t; local_face as in Mesh.
double trace_constant(const Mesh& mesh, int t, int local_face, int degree = 3);

struct EstimatorOptions {
  int trace_degree = 3;        // polynomial degree of the eigenvalue problem (p + 2)
  double trace_safety = 1.0;
  EquilibrationOptions equilibration;
};

struct ElementEstimators {
  double osc = 0, str = 0, lin1 = 0, lin2n = 0, lin2t = 0, neu = 0, cnt = 0, frc = 0;
  double lin = 0, tot = 0;
  // Same quantities from the alternative expressions.
  double osc_rw = 0, neu_rw = 0, cnt_rw = 0, frc_rw = 0;
};

struct EstimatorTable {
  std::vector<ElementEstimators> local;
  ElementEstimators global; // root-sum-square of each column
  double bound = 0.0;       // two-step aggregated global bound
  double rewrite_defect = 0.0;

  std::vector<double> total() const;
  IterationEstimate iteration_estimate() const;
};

EstimatorTable compute_estimators(const FeFunction& u_k, const FeFunction& u_prev,
                                  const StressReconstruction& rec, const ProblemData& data,
                                  const EstimatorOptions& opts = {});

// Reconstruction plus estimators for one Newton iterate.
struct IterateEstimate {
  StressReconstruction reconstruction;
  EstimatorTable table;
};
IterateEstimate estimate_iterate(const FeFunction& u_k, const FeFunction& u_prev,
                                 const ProblemData& data, const EstimatorOptions& opts = {});

// Residual based estimator on the vertex neighbourhood of every element (degree 1).
std::vector<double> eta_sharp(const FeFunction& u, const ProblemData& data);

struct ErrorNorms {
  double l2 = 0, h1_semi = 0, h1 = 0, energy = 0;
};

// Norms of uref - u integrated on the mesh of uref.
ErrorNorms error_norms(const FeFunction& u, const FeFunction& uref, const Material& m);

struct SurrogateBounds {
  double lower = 0, upper = 0;
  double contact_term = 0, friction_term = 0;
  double eff_low = 0, eff_up = 0;
  bool defined = false; // false when the error vanishes
};

SurrogateBounds surrogate_bounds(const FeFunction& u, const FeFunction& uref,
                                 const ProblemData& data, double eta_tot);

struct ContactInterval {
  bool empty = true;
  double left = 0.0, right = 0.0;
};

// Extent along the contact boundary, parametrised by its dominant axis, of the points in
// contact: u^n >= -tol with tol = rel_tol * h_max, or P^n < 0 (Nitsche penetration of order h).
ContactInterval contact_interval(const FeFunction& u, const ProblemData& data,
                                 double rel_tol = 1e-6);

} // namespace nitsche
