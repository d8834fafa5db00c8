#include "nitsche/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nitsche {

std::string to_string(RefinementMode m) {
  return m == RefinementMode::Adaptive ? "adaptive" : "uniform";
}

RefinementMode parse_refinement_mode(const std::string& s) {
  if (s == "adaptive")
    return RefinementMode::Adaptive;
  if (s == "uniform")
    return RefinementMode::Uniform;
  throw Error("unknown refinement mode '" + s + "'");
}

void AdaptiveConfig::validate() const {
  if (!(theta > 0.0 && theta <= 1.0))
    throw Error("adaptive: theta must lie in (0, 1]");
  if (!(evenness > 1.0))
    throw Error("adaptive: evenness ratio must exceed 1");
  if (bisections < 1)
    throw Error("adaptive: at least one bisection per marked element is required");
  if (max_levels < 1)
    throw Error("adaptive: at least one level is required");
}

std::vector<int> mark_elements(const std::vector<double>& eta, double theta) {
  const int n = static_cast<int>(eta.size());
  const int count = std::min(n, static_cast<int>(std::ceil(theta * n - 1e-12)));
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return eta[a] > eta[b]; });
  ids.resize(std::max(count, 0));
  std::sort(ids.begin(), ids.end());
  return ids;
}

Mesh refine_marked(const Mesh& mesh, const std::vector<int>& marked, int times) {
  Mesh out = refine(mesh, marked);
  std::vector<char> origin(mesh.num_elements(), 0);
  for (int t : marked)
    origin[t] = 1;
  for (int pass = 1; pass < times; ++pass) {
    std::vector<char> next(out.num_elements(), 0);
    std::vector<int> again;
    for (int t = 0; t < out.num_elements(); ++t)
      if (origin[out.parent(t)]) {
        next[t] = 1;
        again.push_back(t);
      }
    out = refine(out, again);
    origin = std::move(next);
  }
  return out;
}

Distribution distribution(std::vector<double> v) {
  Distribution d;
  if (v.empty())
    return d;
  std::sort(v.begin(), v.end());
  auto quantile = [&](double p) {
    const double pos = p * (v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - i;
    return i + 1 < v.size() ? (1.0 - frac) * v[i] + frac * v[i + 1] : v[i];
  };
  d.min = v.front();
  d.max = v.back();
  d.q1 = quantile(0.25);
  d.median = quantile(0.5);
  d.q3 = quantile(0.75);
  d.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  return d;
}

double fit_rate(const std::vector<double>& dofs, const std::vector<double>& err, int last) {
  const int n = static_cast<int>(std::min(dofs.size(), err.size()));
  const int first = std::max(0, n - last);
  const int m = n - first;
  if (m < 2)
    throw Error("fit_rate: at least two levels are needed");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = first; i < n; ++i) {
    const double x = std::log(dofs[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return -slope;
}

FeFunction reference_solution(const Mesh& initial, const ProblemData& data,
                              const ReferenceConfig& cfg, const NewtonOptions& newton) {
  Mesh m = initial;
  for (int i = 0; i < cfg.uniform_levels; ++i)
    m = refine_uniform(m);
  auto space = std::make_shared<const LagrangeSpace>(std::make_shared<const Mesh>(std::move(m)),
                                                     cfg.degree);
  NewtonOptions opts = newton;
  opts.mode = StoppingMode::ResidualOnly;
  opts.residual_tol = std::min(opts.residual_tol, 1e-12);
  opts.max_iterations = std::max(opts.max_iterations, 60);
  const NewtonResult r = newton_solve(FeFunction(space), data, opts);
  if (!r.converged)
    throw Error("reference solution: Newton did not converge");
  return r.u;
}

namespace {

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double s = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - a - s * d).norm();
}

// Share of the marked elements with a vertex within r of Gamma_C or of an end of Gamma_D.
double near_singular_share(const Mesh& mesh, const std::vector<int>& marked, double r) {
  std::vector<std::pair<Vec2, Vec2>> contact;
  std::vector<Vec2> ends;
  std::vector<char> other(mesh.num_vertices(), 0);
  for (const Face& f : mesh.faces()) {
    if (!f.label)
      continue;
    if (f.label->kind == BoundaryKind::Contact)
      contact.emplace_back(mesh.vertex(f.v[0]), mesh.vertex(f.v[1]));
    if (f.label->kind != BoundaryKind::Dirichlet)
      other[f.v[0]] = other[f.v[1]] = 1;
  }
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (mesh.is_dirichlet_vertex(v) && other[v])
      ends.push_back(mesh.vertex(v));
  if (marked.empty())
    return 0.0;
  int near = 0;
  for (int t : marked) {
    bool hit = false;
    for (int v : mesh.triangle(t)) {
      const Vec2& x = mesh.vertex(v);
      for (const auto& [a, b] : contact)
        hit = hit || segment_distance(x, a, b) <= r;
      for (const Vec2& e : ends)
        hit = hit || (x - e).norm() <= r;
    }
    near += hit;
  }
  return static_cast<double>(near) / marked.size();
}

double efficiency_ratio(const FeFunction& u, const ProblemData& data,
                        const std::vector<ElementEstimators>& tab) {
  const Mesh& mesh = u.space().mesh();
  const std::vector<double> sharp = eta_sharp(u, data);
  double worst = 0.0;
  for (int t = 0; t < mesh.num_elements(); ++t) {
    double osc = 0.0, neu = 0.0;
    for (int s : mesh.element_neighbourhood(t)) {
      osc += tab[s].osc * tab[s].osc;
      neu += tab[s].neu * tab[s].neu;
    }
    const double den = sharp[t] + std::sqrt(osc) + std::sqrt(neu);
    if (den > 0.0)
      worst = std::max(worst, tab[t].str / den);
  }
  return worst;
}

} // namespace

AdaptiveReport adaptive_solve(const Mesh& initial, const ProblemData& data,
                              const AdaptiveConfig& cfg, const NewtonOptions& newton,
                              const EstimatorOptions& est_opts, const FeFunction* reference) {
  cfg.validate();
  data.validate();
  AdaptiveReport rep;
  rep.mode = cfg.mode;
  EstimatorOptions eo = est_opts;
  eo.equilibration.threads = cfg.threads;
  auto mesh = std::make_shared<const Mesh>(initial);
  FeFunction previous;
  for (int level = 0; level < cfg.max_levels; ++level) {
    auto space = std::make_shared<const LagrangeSpace>(mesh, 1);
    const FeFunction u0 =
        cfg.warm_start && level > 0 ? prolongate(previous, space) : FeFunction(space);
    IterateEstimate last;
    FeFunction last_prev;
    auto hook = [&](const FeFunction& uk, const FeFunction& up) {
      last = estimate_iterate(uk, up, data, eo);
      last_prev = up;
      return last.table.iteration_estimate();
    };
    NewtonResult nr;
    try {
      nr = newton_solve(u0, data, newton, hook, level);
    } catch (const Error& e) {
      throw Error("level " + std::to_string(level) + ": " + e.what());
    }
    if (!nr.converged)
      throw Error("level " + std::to_string(level) + ": Newton did not meet the stopping criterion");

    LevelReport lr;
    lr.level = level;
    lr.dofs = space->num_free_dofs();
    lr.elements = mesh->num_elements();
    lr.newton = nr.iterations;
    lr.converged = nr.converged;
    lr.residual = nr.trace.back().residual;
    lr.stop_inequality =
        newton.mode == StoppingMode::ResidualOnly ||
        linearization_small(last.table.iteration_estimate(), newton.mode, newton.gamma_lin);
    lr.eta = last.table.global;
    lr.bound = last.table.bound;
    lr.rewrite_defect = last.table.rewrite_defect;
    lr.check = verify_equilibration(last.reconstruction, nr.u, last_prev, data);
    lr.eta_tot = distribution(last.table.total());
    lr.contact = contact_interval(nr.u, data);
    lr.efficiency_ratio = efficiency_ratio(nr.u, data, last.table.local);
    if (reference) {
      lr.has_reference = true;
      lr.error = error_norms(nr.u, *reference, data.material);
      lr.bounds = surrogate_bounds(nr.u, *reference, data, last.table.global.tot);
    }
    rep.newton.insert(rep.newton.end(), nr.trace.begin(), nr.trace.end());
    rep.meshes.push_back(mesh);
    rep.tables.push_back(last.table.local);

    const bool even = lr.eta_tot.max <= cfg.evenness * lr.eta_tot.mean;
    std::vector<int> marked;
    if (cfg.mode == RefinementMode::Adaptive) {
      marked = mark_elements(last.table.total(), cfg.theta);
      lr.marked = static_cast<int>(marked.size());
      lr.marked_near_singular = near_singular_share(*mesh, marked, 0.1);
    }
    const bool last_level = level + 1 == cfg.max_levels ||
                            (cfg.mode == RefinementMode::Adaptive && cfg.stop_when_even && even) ||
                            lr.dofs >= cfg.max_dofs;
    if (!last_level) {
      if (cfg.mode == RefinementMode::Uniform) {
        mesh = std::make_shared<const Mesh>(refine_uniform(*mesh));
        lr.marked = lr.elements;
      } else {
        mesh = std::make_shared<const Mesh>(refine_marked(*mesh, marked, cfg.bisections));
      }
    } else {
      rep.solution = nr.u;
      rep.reconstruction = last.reconstruction;
    }
    previous = nr.u;
    rep.levels.push_back(lr);
    if (last_level)
      break;
  }
  return rep;
}

} // namespace nitsche
