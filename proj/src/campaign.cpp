#include "nitsche/campaign.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace nitsche {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Typed access to one JSON object that remembers its path and the keys it consumed.
class Reader {
public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError(where(), "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double def) {
    if (!take(key))
      return def;
    const json& v = j_.at(key);
    if (!v.is_number())
      throw ConfigError(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x))
      throw ConfigError(at(key), "must be finite");
    return x;
  }

  double positive(const std::string& key, double def) {
    const double x = number(key, def);
    if (!(x > 0.0))
      throw ConfigError(at(key), "must be positive");
    return x;
  }

  long long integer(const std::string& key, long long def, long long lo) {
    if (!take(key))
      return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer())
      throw ConfigError(at(key), "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo)
      throw ConfigError(at(key), "must be at least " + std::to_string(lo));
    return x;
  }

  bool boolean(const std::string& key, bool def) {
    if (!take(key))
      return def;
    const json& v = j_.at(key);
    if (!v.is_boolean())
      throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!take(key))
      return def;
    const json& v = j_.at(key);
    if (!v.is_string())
      throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  Vec2 vec2(const std::string& key, const Vec2& def) {
    if (!take(key))
      return def;
    return as_vec2(j_.at(key), at(key));
  }

  std::optional<Reader> child(const std::string& key) {
    if (!take(key))
      return std::nullopt;
    return Reader(j_.at(key), at(key));
  }

  const json& raw(const std::string& key) {
    take(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, v] : j_.items())
      if (!used_.count(key))
        throw ConfigError(at(key), "unknown field");
  }

  static Vec2 as_vec2(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ConfigError(path, "expected a pair of numbers");
    const Vec2 x(v[0].get<double>(), v[1].get<double>());
    if (!x.allFinite())
      throw ConfigError(path, "must be finite");
    return x;
  }

private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  bool take(const std::string& key) {
    if (!j_.contains(key))
      return false;
    used_.insert(key);
    return true;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void reject_gap(const json& j, const std::string& path) {
  if (j.is_object()) {
    for (const auto& [key, v] : j.items()) {
      const std::string p = path.empty() ? key : path + "." + key;
      if (key == "gap")
        throw ConfigError(p, "an initial gap is not supported; the body must touch the contact "
                             "boundary in the reference configuration");
      reject_gap(v, p);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i)
      reject_gap(j[i], path + "[" + std::to_string(i) + "]");
  }
}

DiagonalPattern parse_pattern(const std::string& s, const std::string& path) {
  if (s == "centred")
    return DiagonalPattern::Centred;
  if (s == "uniform")
    return DiagonalPattern::Uniform;
  if (s == "alternating")
    return DiagonalPattern::Alternating;
  throw ConfigError(path, "unknown pattern '" + s + "' (centred, uniform, alternating)");
}

std::string to_string(DiagonalPattern p) {
  switch (p) {
  case DiagonalPattern::Centred:
    return "centred";
  case DiagonalPattern::Uniform:
    return "uniform";
  case DiagonalPattern::Alternating:
    return "alternating";
  }
  return "centred";
}

BoundaryLabel label_at(Reader& r, const std::string& key, const BoundaryLabel& def) {
  const std::string s = r.string(key, to_string(def));
  try {
    return parse_boundary_label(s);
  } catch (const Error& e) {
    throw ConfigError(r.at(key), e.what());
  }
}

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

} // namespace

ProblemData CampaignConfig::problem_data() const {
  ProblemData d;
  d.material = {E, nu};
  d.f = constant_field(f);
  for (const auto& [tag, g] : neumann)
    d.g_neumann[tag] = constant_field(g);
  d.friction.law = law;
  d.friction.s = s;
  d.friction.mu = mu;
  d.friction.linearize_threshold = linearize_threshold;
  d.gamma0 = gamma_rule == GammaRule::TimesE ? gamma0 * E : gamma0;
  d.validate();
  return d;
}

Mesh CampaignConfig::initial_mesh() const {
  if (geometry.kind == "file")
    return load_mesh(geometry.path);
  return build_rectangle_mesh(geometry.x0, geometry.x1, geometry.y0, geometry.y1, geometry.nx,
                              geometry.ny, geometry.labels, geometry.pattern);
}

CampaignConfig parse_config(const json& j) {
  reject_gap(j, "");
  CampaignConfig c;
  Reader root(j, "");
  c.name = root.string("name", c.name);

  if (auto g = root.child("geometry")) {
    c.geometry.kind = g->string("kind", c.geometry.kind);
    if (c.geometry.kind == "rectangle") {
      const Vec2 xr = g->vec2("x", {c.geometry.x0, c.geometry.x1});
      const Vec2 yr = g->vec2("y", {c.geometry.y0, c.geometry.y1});
      if (!(xr[0] < xr[1]))
        throw ConfigError(g->at("x"), "empty interval");
      if (!(yr[0] < yr[1]))
        throw ConfigError(g->at("y"), "empty interval");
      c.geometry.x0 = xr[0];
      c.geometry.x1 = xr[1];
      c.geometry.y0 = yr[0];
      c.geometry.y1 = yr[1];
      c.geometry.nx = static_cast<int>(g->integer("nx", c.geometry.nx, 1));
      c.geometry.ny = static_cast<int>(g->integer("ny", c.geometry.ny, 1));
      c.geometry.pattern = parse_pattern(g->string("pattern", to_string(c.geometry.pattern)),
                                         g->at("pattern"));
      if (auto l = g->child("labels")) {
        SideLabels& s = c.geometry.labels;
        s.bottom = label_at(*l, "bottom", s.bottom);
        s.right = label_at(*l, "right", s.right);
        s.top = label_at(*l, "top", s.top);
        s.left = label_at(*l, "left", s.left);
        l->finish();
      }
    } else if (c.geometry.kind == "file") {
      c.geometry.path = g->string("path", "");
      if (c.geometry.path.empty())
        throw ConfigError(g->at("path"), "a mesh file is required");
    } else {
      throw ConfigError(g->at("kind"), "expected \"rectangle\" or \"file\"");
    }
    g->finish();
  }

  if (auto m = root.child("material")) {
    c.E = m->positive("E", c.E);
    c.nu = m->number("nu", c.nu);
    if (!(c.nu > -1.0 && c.nu < 0.5))
      throw ConfigError(m->at("nu"), "must lie in (-1, 0.5)");
    m->finish();
  }

  if (auto l = root.child("loads")) {
    c.f = l->vec2("f", c.f);
    if (l->has("neumann")) {
      const std::string path = l->at("neumann");
      const json& n = l->raw("neumann");
      if (!n.is_object())
        throw ConfigError(path, "expected an object of tag -> traction");
      for (const auto& [key, v] : n.items()) {
        BoundaryLabel lab;
        try {
          lab = parse_boundary_label(key);
        } catch (const Error&) {
          throw ConfigError(path + "." + key, "expected a Neumann label such as N1");
        }
        if (lab.kind != BoundaryKind::Neumann)
          throw ConfigError(path + "." + key, "tractions apply to Neumann labels only");
        c.neumann[lab.tag] = Reader::as_vec2(v, path + "." + key);
      }
    }
    l->finish();
  }

  if (auto fr = root.child("friction")) {
    const std::string law = fr->string("law", "tresca");
    if (law == "tresca") {
      c.law = FrictionLaw::Tresca;
      c.s = fr->number("s", c.s);
      if (c.s < 0.0)
        throw ConfigError(fr->at("s"), "must be non-negative");
    } else if (law == "coulomb") {
      c.law = FrictionLaw::Coulomb;
      c.mu = fr->number("mu", c.mu);
      if (c.mu < 0.0)
        throw ConfigError(fr->at("mu"), "must be non-negative");
      c.linearize_threshold = fr->boolean("linearize_threshold", c.linearize_threshold);
    } else {
      throw ConfigError(fr->at("law"), "expected \"tresca\" or \"coulomb\"");
    }
    fr->finish();
  }

  if (auto n = root.child("nitsche")) {
    c.gamma0 = n->positive("gamma0", c.gamma0);
    const std::string rule = n->string("rule", "times_E");
    if (rule == "times_E")
      c.gamma_rule = GammaRule::TimesE;
    else if (rule == "absolute")
      c.gamma_rule = GammaRule::Absolute;
    else
      throw ConfigError(n->at("rule"), "expected \"times_E\" or \"absolute\"");
    n->finish();
  }

  c.degree = static_cast<int>(root.integer("degree", c.degree, 1));
  if (c.degree != 1)
    throw ConfigError("degree", "the stress reconstruction is implemented for degree 1 only");

  if (auto n = root.child("newton")) {
    try {
      c.newton.mode = parse_stopping_mode(n->string("stopping", to_string(c.newton.mode)));
    } catch (const Error& e) {
      throw ConfigError(n->at("stopping"), e.what());
    }
    c.newton.gamma_lin = n->number("gamma_lin", c.newton.gamma_lin);
    if (!(c.newton.gamma_lin > 0.0 && c.newton.gamma_lin < 1.0))
      throw ConfigError(n->at("gamma_lin"), "must lie in (0, 1)");
    c.newton.max_iterations = static_cast<int>(n->integer("max_iterations", c.newton.max_iterations, 1));
    c.newton.residual_tol = n->positive("residual_tol", c.newton.residual_tol);
    n->finish();
  }

  if (auto a = root.child("adaptive")) {
    AdaptiveConfig& ad = c.adaptive;
    ad.theta = a->number("theta", ad.theta);
    if (!(ad.theta > 0.0 && ad.theta <= 1.0))
      throw ConfigError(a->at("theta"), "must lie in (0, 1]");
    ad.max_levels = static_cast<int>(a->integer("max_levels", ad.max_levels, 1));
    ad.max_dofs = a->integer("max_dofs", ad.max_dofs, 1);
    ad.evenness = a->number("evenness", ad.evenness);
    if (!(ad.evenness > 1.0))
      throw ConfigError(a->at("evenness"), "must exceed 1");
    ad.stop_when_even = a->boolean("stop_when_even", ad.stop_when_even);
    ad.bisections = static_cast<int>(a->integer("bisections", ad.bisections, 1));
    ad.warm_start = a->boolean("warm_start", ad.warm_start);
    a->finish();
  }

  if (auto u = root.child("uniform")) {
    c.uniform_levels = static_cast<int>(u->integer("levels", c.uniform_levels, 1));
    u->finish();
  }

  if (root.has("campaigns")) {
    const json& list = root.raw("campaigns");
    if (!list.is_array() || list.empty())
      throw ConfigError("campaigns", "expected a non-empty list");
    c.run_uniform = c.run_adaptive = false;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string p = "campaigns[" + std::to_string(i) + "]";
      if (!list[i].is_string())
        throw ConfigError(p, "expected \"uniform\" or \"adaptive\"");
      const std::string m = list[i].get<std::string>();
      if (m == "uniform")
        c.run_uniform = true;
      else if (m == "adaptive")
        c.run_adaptive = true;
      else
        throw ConfigError(p, "expected \"uniform\" or \"adaptive\"");
    }
  }

  if (auto r = root.child("reference")) {
    c.reference.enabled = r->boolean("enabled", c.reference.enabled);
    c.reference.uniform_levels = static_cast<int>(r->integer("uniform_levels", c.reference.uniform_levels, 0));
    c.reference.degree = static_cast<int>(r->integer("degree", c.reference.degree, 1));
    if (c.reference.degree > 2)
      throw ConfigError(r->at("degree"), "must be 1 or 2");
    r->finish();
  }

  if (auto e = root.child("estimators")) {
    c.estimators.trace_degree = static_cast<int>(e->integer("trace_degree", c.estimators.trace_degree, 1));
    c.estimators.trace_safety = e->positive("trace_safety", c.estimators.trace_safety);
    e->finish();
  }

  c.output_dir = root.string("output_dir", c.output_dir);
  c.threads = static_cast<int>(root.integer("threads", c.threads, 1));
  c.seed = static_cast<std::uint64_t>(root.integer("seed", static_cast<long long>(c.seed), 0));
  root.finish();

  c.adaptive.threads = c.threads;
  c.estimators.equilibration.threads = c.threads;
  try {
    c.problem_data();
  } catch (const Error& e) {
    throw ConfigError("friction", e.what());
  }
  return c;
}

CampaignConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const CampaignConfig& c) {
  json j;
  j["name"] = c.name;
  json g;
  g["kind"] = c.geometry.kind;
  if (c.geometry.kind == "file") {
    g["path"] = c.geometry.path;
  } else {
    g["x"] = json::array({c.geometry.x0, c.geometry.x1});
    g["y"] = json::array({c.geometry.y0, c.geometry.y1});
    g["nx"] = c.geometry.nx;
    g["ny"] = c.geometry.ny;
    g["pattern"] = to_string(c.geometry.pattern);
    g["labels"] = {{"bottom", to_string(c.geometry.labels.bottom)},
                   {"right", to_string(c.geometry.labels.right)},
                   {"top", to_string(c.geometry.labels.top)},
                   {"left", to_string(c.geometry.labels.left)}};
  }
  j["geometry"] = g;
  j["material"] = {{"E", c.E}, {"nu", c.nu}};
  json loads;
  loads["f"] = vec_json(c.f);
  loads["neumann"] = json::object();
  for (const auto& [tag, v] : c.neumann)
    loads["neumann"]["N" + std::to_string(tag)] = vec_json(v);
  j["loads"] = loads;
  if (c.law == FrictionLaw::Tresca)
    j["friction"] = {{"law", "tresca"}, {"s", c.s}};
  else
    j["friction"] = {{"law", "coulomb"}, {"mu", c.mu}, {"linearize_threshold", c.linearize_threshold}};
  j["nitsche"] = {{"gamma0", c.gamma0},
                  {"rule", c.gamma_rule == GammaRule::TimesE ? "times_E" : "absolute"}};
  j["degree"] = c.degree;
  j["newton"] = {{"stopping", to_string(c.newton.mode)},
                 {"gamma_lin", c.newton.gamma_lin},
                 {"max_iterations", c.newton.max_iterations},
                 {"residual_tol", c.newton.residual_tol}};
  j["adaptive"] = {{"theta", c.adaptive.theta},
                   {"max_levels", c.adaptive.max_levels},
                   {"max_dofs", c.adaptive.max_dofs},
                   {"evenness", c.adaptive.evenness},
                   {"stop_when_even", c.adaptive.stop_when_even},
                   {"bisections", c.adaptive.bisections},
                   {"warm_start", c.adaptive.warm_start}};
  j["uniform"] = {{"levels", c.uniform_levels}};
  json list = json::array();
  if (c.run_uniform)
    list.push_back("uniform");
  if (c.run_adaptive)
    list.push_back("adaptive");
  j["campaigns"] = list;
  j["reference"] = {{"enabled", c.reference.enabled},
                    {"uniform_levels", c.reference.uniform_levels},
                    {"degree", c.reference.degree}};
  j["estimators"] = {{"trace_degree", c.estimators.trace_degree},
                     {"trace_safety", c.estimators.trace_safety}};
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  return j;
}

std::string config_hash(const CampaignConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<std::string> builtin_names() { return {"tresca-rect", "coulomb-rect", "square-lit"}; }

CampaignConfig builtin_config(const std::string& name) {
  const BoundaryLabel D{BoundaryKind::Dirichlet, 0}, C{BoundaryKind::Contact, 0};
  const BoundaryLabel N0{BoundaryKind::Neumann, 0}, N1{BoundaryKind::Neumann, 1};
  CampaignConfig c;
  c.name = name;
  c.adaptive.theta = 0.062;
  c.adaptive.max_levels = 11;
  c.adaptive.stop_when_even = false;
  c.uniform_levels = 4;
  c.reference = {true, 4, 2};
  c.output_dir = "out/" + name;
  if (name == "tresca-rect" || name == "coulomb-rect") {
    c.geometry.x0 = -1;
    c.geometry.x1 = 1;
    c.geometry.y0 = 0;
    c.geometry.y1 = 1;
    c.geometry.nx = 8;
    c.geometry.ny = 4;
    c.geometry.labels = {C, N0, D, N1};
    c.E = 1.0;
    c.nu = 0.3;
    c.f = Vec2(0.0, -0.02);
    c.neumann[1] = Vec2(-0.028, 0.0);
    c.gamma0 = 10.0;
    c.gamma_rule = GammaRule::TimesE;
    if (name == "tresca-rect") {
      c.law = FrictionLaw::Tresca;
      c.s = 5e-3;
    } else {
      c.law = FrictionLaw::Coulomb;
      c.mu = 0.5;
    }
  } else if (name == "square-lit") {
    c.geometry.x0 = 0;
    c.geometry.x1 = 1;
    c.geometry.y0 = 0;
    c.geometry.y1 = 1;
    c.geometry.nx = 4;
    c.geometry.ny = 4;
    c.geometry.labels = {N0, C, N0, D};
    c.E = 1e6;
    c.nu = 0.3;
    c.f = Vec2(0.0, -76518.0);
    c.law = FrictionLaw::Coulomb;
    c.mu = 0.2;
    c.gamma0 = 1.0;
    c.gamma_rule = GammaRule::TimesE;
  } else {
    std::string known;
    for (const std::string& n : builtin_names())
      known += (known.empty() ? "" : ", ") + n;
    throw Error("unknown builtin '" + name + "' (" + known + ")");
  }
  return c;
}

std::string resolve_output_dir(const CampaignConfig& c) {
  if (const char* env = std::getenv("NITSCHE_OUT_DIR"); env && *env)
    return env;
  return c.output_dir;
}

// ---------------------------------------------------------------------------
// Output

namespace {

class CsvFile {
public:
  CsvFile(const fs::path& path, const std::string& hash, const std::string& header)
      : os_(path) {
    if (!os_)
      throw Error("cannot write '" + path.string() + "'");
    os_ << std::setprecision(12);
    os_ << "# config_hash=" << hash << "\n" << header << "\n";
  }
  template <class... T> void row(const T&... v) {
    int i = 0;
    ((os_ << (i++ ? "," : "") << v), ...);
    os_ << "\n";
  }
  std::ostream& stream() { return os_; }

private:
  std::ofstream os_;
};

struct Writer {
  fs::path dir;
  std::string hash;
  std::vector<std::string>* files;

  fs::path path(const std::string& name) const {
    files->push_back(name);
    return dir / name;
  }
};

void write_levels(const Writer& w, const std::string& mode, const AdaptiveReport& r) {
  CsvFile f(w.path(mode + "_levels.csv"), w.hash,
            "level,dofs,elements,newton,stop_inequality,residual,eta_osc,eta_str,eta_lin,eta_Neu,"
            "eta_cnt,eta_frc,eta_tot,bound,rewrite_defect,equilibration_worst,err_l2,err_h1,"
            "err_energy,lower,upper,I_eff_low,I_eff_up,contact_left,contact_right,eta_tot_max,"
            "eta_tot_mean,efficiency_ratio,marked,marked_near_singular");
  for (const LevelReport& l : r.levels)
    f.row(l.level, l.dofs, l.elements, l.newton, l.stop_inequality ? 1 : 0, l.residual, l.eta.osc,
          l.eta.str, l.eta.lin, l.eta.neu, l.eta.cnt, l.eta.frc, l.eta.tot, l.bound,
          l.rewrite_defect, l.check.worst(), l.error.l2, l.error.h1, l.error.energy,
          l.bounds.lower, l.bounds.upper, l.bounds.eff_low, l.bounds.eff_up,
          l.contact.empty ? NAN : l.contact.left, l.contact.empty ? NAN : l.contact.right,
          l.eta_tot.max, l.eta_tot.mean, l.efficiency_ratio, l.marked, l.marked_near_singular);
}

void write_newton(const Writer& w, const std::string& mode, const AdaptiveReport& r) {
  CsvFile f(w.path(mode + "_newton.csv"), w.hash,
            "level,k,eta_osc,eta_str,eta_lin,eta_Neu,eta_cnt,eta_frc,stop");
  for (const NewtonTraceRow& t : r.newton)
    f.row(t.level, t.k, t.eta.osc, t.eta.str, t.eta.lin, t.eta.neu, t.eta.cnt, t.eta.frc,
          t.stop ? 1 : 0);
}

void write_distribution(const Writer& w, const std::string& mode, const AdaptiveReport& r) {
  CsvFile f(w.path(mode + "_distribution.csv"), w.hash, "level,dofs,min,q1,median,q3,max,mean");
  for (const LevelReport& l : r.levels)
    f.row(l.level, l.dofs, l.eta_tot.min, l.eta_tot.q1, l.eta_tot.median, l.eta_tot.q3,
          l.eta_tot.max, l.eta_tot.mean);
}

const char* kEstimatorHeader = "eta_osc,eta_str,eta_lin1,eta_lin2n,eta_lin2t,eta_Neu,eta_cnt,"
                               "eta_frc,eta_lin,eta_tot,eta_osc_rw,eta_Neu_rw,eta_cnt_rw,eta_frc_rw";

template <class F> void estimator_row(F& f, const std::string& key, const ElementEstimators& e) {
  f.row(key, e.osc, e.str, e.lin1, e.lin2n, e.lin2t, e.neu, e.cnt, e.frc, e.lin, e.tot, e.osc_rw,
        e.neu_rw, e.cnt_rw, e.frc_rw);
}

void write_estimators(const Writer& w, const std::string& mode, const AdaptiveReport& r) {
  CsvFile g(w.path(mode + "_estimators_global.csv"), w.hash,
            std::string("level,") + kEstimatorHeader + ",bound");
  for (std::size_t l = 0; l < r.levels.size(); ++l) {
    const ElementEstimators& e = r.levels[l].eta;
    g.row(l, e.osc, e.str, e.lin1, e.lin2n, e.lin2t, e.neu, e.cnt, e.frc, e.lin, e.tot, e.osc_rw,
          e.neu_rw, e.cnt_rw, e.frc_rw, r.levels[l].bound);
    CsvFile f(w.path(mode + "_estimators_L" + std::to_string(l) + ".csv"), w.hash,
              std::string("element,") + kEstimatorHeader);
    for (std::size_t t = 0; t < r.tables[l].size(); ++t)
      estimator_row(f, std::to_string(t), r.tables[l][t]);
  }
}

void write_reconstruction(const Writer& w, const std::string& mode, const StressReconstruction& rec) {
  CsvFile f(w.path(mode + "_reconstruction.csv"), w.hash,
            "element,part,vertex,s00,s01,s10,s11");
  auto dump = [&](const StressField& s, const char* part) {
    for (std::size_t t = 0; t < s.nodal.size(); ++t)
      for (int i = 0; i < 3; ++i) {
        const Mat2& m = s.nodal[t][i];
        f.row(t, part, i, m(0, 0), m(0, 1), m(1, 0), m(1, 1));
      }
  };
  dump(rec.dis, "dis");
  dump(rec.lin, "lin");
}

void write_check(const Writer& w, const std::string& mode, const AdaptiveReport& r) {
  std::ofstream os(w.path(mode + "_verification.txt"));
  os << std::setprecision(6) << "# config_hash=" << w.hash << "\n";
  for (const LevelReport& l : r.levels) {
    const EquilibrationCheck& c = l.check;
    os << "level " << l.level << "\n"
       << "  continuity " << c.continuity << "\n"
       << "  equilibrium " << c.equilibrium << "\n"
       << "  neumann " << c.neumann << "\n"
       << "  contact_dis_n " << c.contact_dis_n << "\n"
       << "  contact_dis_t " << c.contact_dis_t << "\n"
       << "  contact_lin_n " << c.contact_lin_n << "\n"
       << "  contact_lin_t " << c.contact_lin_t << "\n"
       << "  weak_symmetry " << c.weak_symmetry << "\n"
       << "  rewrite_defect " << l.rewrite_defect << "\n";
  }
}

void write_report(const Writer& w, const std::string& mode, const AdaptiveReport& r) {
  write_levels(w, mode, r);
  write_newton(w, mode, r);
  write_distribution(w, mode, r);
  write_estimators(w, mode, r);
  write_check(w, mode, r);
  for (std::size_t l = 0; l < r.meshes.size(); ++l)
    save_mesh(w.path(mode + "_mesh_L" + std::to_string(l) + ".mesh").string(), *r.meshes[l]);
  const std::string final_mesh = mode + "_mesh_L" + std::to_string(r.meshes.size() - 1) + ".mesh";
  const fs::path csv = w.path(mode + "_solution.csv");
  const fs::path side = w.path(mode + "_solution.json");
  write_function(csv.string(), side.string(), final_mesh, r.solution, w.hash);
  write_reconstruction(w, mode, r.reconstruction);
}

double rate(const AdaptiveReport& r, bool energy) {
  std::vector<double> n, e;
  for (const LevelReport& l : r.levels)
    if (l.has_reference) {
      n.push_back(static_cast<double>(l.dofs));
      e.push_back(energy ? l.error.energy : l.error.h1);
    }
  return n.size() >= 2 ? fit_rate(n, e) : NAN;
}

} // namespace

void write_function(const std::string& csv_path, const std::string& sidecar_path,
                    const std::string& mesh_file, const FeFunction& u, const std::string& hash) {
  {
    CsvFile f(csv_path, hash, "dof_id,value");
    for (Index i = 0; i < u.coeffs().size(); ++i)
      f.row(i, u.coeffs()[i]);
  }
  std::ofstream os(sidecar_path);
  if (!os)
    throw Error("cannot write '" + sidecar_path + "'");
  const json side = {{"mesh", mesh_file},
                     {"degree", u.space().degree()},
                     {"components", 2},
                     {"layout", "dof 2*node+component"},
                     {"values", fs::path(csv_path).filename().string()},
                     {"config_hash", hash}};
  os << side.dump(2) << "\n";
}

CampaignResult run_campaign(const CampaignConfig& c, const std::string& out_dir) {
  CampaignResult res;
  res.hash = config_hash(c);
  const ProblemData data = c.problem_data();
  const Mesh m0 = c.initial_mesh();
  if (const std::string bad = check_conformity(m0); !bad.empty())
    throw Error("initial mesh: " + bad);

  std::optional<FeFunction> ref;
  if (c.reference.enabled) {
    try {
      ref = reference_solution(m0, data, c.reference, c.newton);
    } catch (const Error& e) {
      throw Error(std::string("reference solution: ") + e.what());
    }
    res.reference_dofs = ref->space().num_free_dofs();
  }
  const FeFunction* refp = ref ? &*ref : nullptr;

  if (c.run_uniform) {
    AdaptiveConfig a = c.adaptive;
    a.mode = RefinementMode::Uniform;
    a.max_levels = c.uniform_levels;
    a.threads = c.threads;
    res.uniform = adaptive_solve(m0, data, a, c.newton, c.estimators, refp);
    res.rate_h1_uniform = rate(*res.uniform, false);
    res.rate_energy_uniform = rate(*res.uniform, true);
  }
  if (c.run_adaptive) {
    AdaptiveConfig a = c.adaptive;
    a.mode = RefinementMode::Adaptive;
    a.threads = c.threads;
    res.adaptive = adaptive_solve(m0, data, a, c.newton, c.estimators, refp);
    res.rate_h1_adaptive = rate(*res.adaptive, false);
    res.rate_energy_adaptive = rate(*res.adaptive, true);
  }

  if (out_dir.empty())
    return res;
  fs::create_directories(out_dir);
  Writer w{out_dir, res.hash, &res.files};
  {
    std::ofstream os(w.path("config.json"));
    os << to_json(c).dump(2) << "\n";
  }
  if (res.uniform)
    write_report(w, "uniform", *res.uniform);
  if (res.adaptive)
    write_report(w, "adaptive", *res.adaptive);
  {
    CsvFile f(w.path("summary.csv"), res.hash,
              "campaign,levels,final_dofs,rate_h1,rate_energy,final_eta_tot_max,reference_dofs");
    auto line = [&](const char* name, const AdaptiveReport& r, double h1, double en) {
      f.row(name, r.levels.size(), r.levels.back().dofs, h1, en, r.levels.back().eta_tot.max,
            res.reference_dofs);
    };
    if (res.uniform)
      line("uniform", *res.uniform, res.rate_h1_uniform, res.rate_energy_uniform);
    if (res.adaptive)
      line("adaptive", *res.adaptive, res.rate_h1_adaptive, res.rate_energy_adaptive);
  }
  json manifest = {{"config_hash", res.hash}, {"name", c.name}, {"files", res.files}};
  std::ofstream(fs::path(out_dir) / "manifest.json") << manifest.dump(2) << "\n";
  res.files.push_back("manifest.json");
  return res;
}

// ---------------------------------------------------------------------------
// Property suite

Fault parse_fault(const std::string& s) {
  if (s == "none")
    return Fault::None;
  if (s == "continuity")
    return Fault::Continuity;
  if (s == "equilibrium")
    return Fault::Equilibrium;
  if (s == "tangent")
    return Fault::Tangent;
  throw Error("unknown fault '" + s + "' (none, continuity, equilibrium, tangent)");
}

namespace {

double field_scale(const StressField& s) {
  double m = 0.0;
  for (const auto& e : s.nodal)
    for (const Mat2& v : e)
      m = std::max(m, v.cwiseAbs().maxCoeff());
  return m;
}

// Count of contact quadrature points whose branch differs between a and b.
int branch_changes(const FeFunction& a, const FeFunction& b, const ProblemData& d) {
  const Mesh& mesh = a.space().mesh();
  int n = 0;
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    if (!f.label || f.label->kind != BoundaryKind::Contact)
      continue;
    for (const FacePoint& p : face_points(mesh, fi, kContactQuadPoints)) {
      const ContactState x = contact_state(trace_at(a, p, d), d.material, d.friction);
      const ContactState y = contact_state(trace_at(b, p, d), d.material, d.friction);
      n += x.normal_active != y.normal_active || x.stick != y.stick;
    }
  }
  return n;
}

} // namespace

std::vector<PropertyResult> verify(const CampaignConfig& c, int levels, Fault fault) {
  const ProblemData data = c.problem_data();
  std::vector<PropertyResult> out;
  auto add = [&](const std::string& name, int level, double v, double tol) {
    out.push_back({name, level, v, tol, std::isfinite(v) && v <= tol});
  };
  const double tol = 1e-9;
  Mesh mesh = c.initial_mesh();
  std::mt19937_64 rng(c.seed);
  for (int level = 0; level < levels; ++level) {
    auto space = std::make_shared<const LagrangeSpace>(std::make_shared<const Mesh>(mesh), 1);
    std::vector<std::pair<FeFunction, FeFunction>> iterates;
    auto hook = [&](const FeFunction& uk, const FeFunction& up) {
      iterates.emplace_back(uk, up);
      return estimate_iterate(uk, up, data, c.estimators).table.iteration_estimate();
    };
    const NewtonResult nr = newton_solve(FeFunction(space), data, c.newton, hook, level);
    add("newton_converged", level, nr.converged ? 0.0 : 1.0, 0.0);
    // First and last iterate: the linearisation part is non-trivial on the first.
    for (const auto* it : {&iterates.front(), &iterates.back()}) {
      const auto& [uk, up] = *it;
      StressReconstruction rec = reconstruct(uk, up, data, c.estimators.equilibration);
      ProblemData check_data = data;
      if (fault == Fault::Continuity) {
        const Mesh& m = uk.space().mesh();
        int t = 0;
        while (t + 1 < m.num_elements() && (m.face(m.element_face(t, 0)).is_boundary() ||
                                            m.face(m.element_face(t, 1)).is_boundary() ||
                                            m.face(m.element_face(t, 2)).is_boundary()))
          ++t;
        // Divergence free and symmetric: only the normal traces across faces change.
        const double a = 1e-3 * field_scale(rec.dis);
        for (Mat2& v : rec.dis.nodal[t])
          v(0, 0) += a;
      } else if (fault == Fault::Equilibrium) {
        const Vec2 shift(0.0, 1e-2 * (data.f(Vec2::Zero()).norm() + 1e-3 * data.material.E));
        check_data.f = [f = data.f, shift](const Vec2& x) { return Vec2(f(x) + shift); };
      }
      const EquilibrationCheck ck = verify_equilibration(rec, uk, up, check_data);
      const std::string tag = it == &iterates.front() ? "first" : "last";
      add("continuity/" + tag, level, ck.continuity, tol);
      add("equilibrium/" + tag, level, ck.equilibrium, tol);
      add("neumann/" + tag, level, ck.neumann, tol);
      add("contact_dis_n/" + tag, level, ck.contact_dis_n, tol);
      add("contact_dis_t/" + tag, level, ck.contact_dis_t, tol);
      add("contact_lin_n/" + tag, level, ck.contact_lin_n, tol);
      add("contact_lin_t/" + tag, level, ck.contact_lin_t, tol);
      add("weak_symmetry/" + tag, level, ck.weak_symmetry, tol);
      const EstimatorTable tab = compute_estimators(uk, up, rec, data, c.estimators);
      add("rewrite_identities/" + tag, level, tab.rewrite_defect, tol);
    }
    // Tangent against central differences in a direction that crosses no branch kink.
    const FeFunction& u = nr.u;
    const LinearSystem sys = assemble_newton_system(u, data);
    SparseMatrix jac = sys.matrix;
    if (fault == Fault::Tangent && jac.nonZeros() > 0)
      jac.coeffRef(0, 0) *= 1.01;
    std::normal_distribution<double> gauss;
    double fd_err = NAN;
    const double scale = std::max(u.coeffs().cwiseAbs().maxCoeff(), 1e-12);
    for (int attempt = 0; attempt < 8 && !std::isfinite(fd_err); ++attempt) {
      Eigen::VectorXd dir(u.coeffs().size());
      for (Index i = 0; i < dir.size(); ++i)
        dir[i] = space->is_constrained_dof(i) ? 0.0 : gauss(rng);
      const double eps = 1e-7 * scale / std::max(dir.cwiseAbs().maxCoeff(), 1e-300);
      const FeFunction up(space, u.coeffs() + eps * dir), um(space, u.coeffs() - eps * dir);
      if (branch_changes(um, up, data) > 0 || branch_changes(u, up, data) > 0)
        continue;
      const Eigen::VectorXd jd = jac * reduce(*space, dir);
      const Eigen::VectorXd fd =
          reduce(*space, (nitsche_residual(um, data) - nitsche_residual(up, data)) / (2.0 * eps));
      fd_err = (fd - jd).norm() / std::max(jd.norm(), 1e-300);
    }
    add("tangent_fd", level, fd_err, 1e-5);
    mesh = refine_uniform(mesh);
  }
  return out;
}

} // namespace nitsche
