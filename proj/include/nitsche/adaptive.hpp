#pragma once

#include "nitsche/estimators.hpp"

namespace nitsche {

enum class RefinementMode { Adaptive, Uniform };
std::string to_string(RefinementMode m);
RefinementMode parse_refinement_mode(const std::string& s);

struct AdaptiveConfig {
  RefinementMode mode = RefinementMode::Adaptive;
  double theta = 0.062;   // fraction of elements marked
  int max_levels = 11;
  Index max_dofs = 2000000;
  double evenness = 3.0;  // stop once max eta_tot,T <= evenness * mean
  bool stop_when_even = true;
  int bisections = 2;     // newest-vertex bisections applied to each marked element
  bool warm_start = false; // start Newton from the previous level's solution
  int threads = 1;

  void validate() const;
};

// The ceil(theta * n) largest values, ties by lower id; returned ascending.
std::vector<int> mark_elements(const std::vector<double>& eta, double theta);

// Bisects the marked elements `times` times (their descendants after the first pass), with closure.
Mesh refine_marked(const Mesh& mesh, const std::vector<int>& marked, int times);

struct Distribution {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};
Distribution distribution(std::vector<double> v);

struct LevelReport {
  int level = 0;
  Index dofs = 0;
  int elements = 0;
  int newton = 0;
  bool converged = false;
  bool stop_inequality = false; // stopping test re-evaluated on the final iterate
  double residual = 0.0;
  ElementEstimators eta;        // global values
  double bound = 0.0;
  double rewrite_defect = 0.0;
  EquilibrationCheck check;
  bool has_reference = false;
  ErrorNorms error;
  SurrogateBounds bounds;
  ContactInterval contact;
  Distribution eta_tot;
  double efficiency_ratio = 0.0; // max_T eta_str,T / (eta_sharp + osc and Neumann terms)
  int marked = 0;
  double marked_near_singular = 0.0; // share of marked elements near Gamma_C or the ends of Gamma_D
};

struct AdaptiveReport {
  RefinementMode mode = RefinementMode::Adaptive;
  std::vector<LevelReport> levels;
  std::vector<NewtonTraceRow> newton;
  std::vector<std::shared_ptr<const Mesh>> meshes;
  std::vector<std::vector<ElementEstimators>> tables; // per level
  FeFunction solution;
  StressReconstruction reconstruction; // final level
};

struct ReferenceConfig {
  bool enabled = true;
  int uniform_levels = 4; // refine_uniform applications of the initial mesh
  int degree = 2;
};

FeFunction reference_solution(const Mesh& initial, const ProblemData& data,
                              const ReferenceConfig& cfg, const NewtonOptions& newton = {});

AdaptiveReport adaptive_solve(const Mesh& initial, const ProblemData& data,
                              const AdaptiveConfig& cfg, const NewtonOptions& newton,
                              const EstimatorOptions& est = {},
                              const FeFunction* reference = nullptr);

// Least-squares slope of -log(err) against log(dofs) over the last `last` entries.
double fit_rate(const std::vector<double>& dofs, const std::vector<double>& err, int last = 4);

} // namespace nitsche
