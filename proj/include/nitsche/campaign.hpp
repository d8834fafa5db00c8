#pragma once

#include "nitsche/adaptive.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nitsche {

// Raised for invalid configurations; the message starts with the field path.
class ConfigError : public Error {
public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

struct GeometryConfig {
  std::string kind = "rectangle"; // "rectangle" or "file"
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  int nx = 4, ny = 4;
  DiagonalPattern pattern = DiagonalPattern::Centred;
  SideLabels labels{{BoundaryKind::Contact, 0}, {BoundaryKind::Neumann, 0},
                    {BoundaryKind::Dirichlet, 0}, {BoundaryKind::Neumann, 0}};
  std::string path; // mesh file for kind "file"
};

enum class GammaRule { Absolute, TimesE };

struct CampaignConfig {
  std::string name = "custom";
  GeometryConfig geometry;
  double E = 1.0, nu = 0.3;
  Vec2 f = Vec2::Zero();
  std::map<int, Vec2> neumann; // constant tractions by Neumann tag
  FrictionLaw law = FrictionLaw::Tresca;
  double s = 0.0, mu = 0.0;
  bool linearize_threshold = true;
  double gamma0 = 1.0;
  GammaRule gamma_rule = GammaRule::TimesE;
  int degree = 1;
  NewtonOptions newton;
  AdaptiveConfig adaptive;
  int uniform_levels = 4;
  bool run_uniform = true, run_adaptive = true;
  ReferenceConfig reference;
  EstimatorOptions estimators;
  std::string output_dir = "out";
  int threads = 1;
  std::uint64_t seed = 0; // reserved

  ProblemData problem_data() const;
  Mesh initial_mesh() const;
};

CampaignConfig parse_config(const nlohmann::json& j);
CampaignConfig load_config(const std::string& path);
nlohmann::json to_json(const CampaignConfig& c);
// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const CampaignConfig& c);

std::vector<std::string> builtin_names();
CampaignConfig builtin_config(const std::string& name);

struct CampaignResult {
  std::string hash;
  std::optional<AdaptiveReport> uniform, adaptive;
  Index reference_dofs = 0;
  double rate_h1_uniform = 0, rate_energy_uniform = 0;
  double rate_h1_adaptive = 0, rate_energy_adaptive = 0;
  std::vector<std::string> files; // written, relative to the output directory
};

// Runs the configured campaigns and, when out_dir is non-empty, writes every output there.
CampaignResult run_campaign(const CampaignConfig& c, const std::string& out_dir);

// Output directory after the NITSCHE_OUT_DIR override.
std::string resolve_output_dir(const CampaignConfig& c);

enum class Fault { None, Continuity, Equilibrium, Tangent };
Fault parse_fault(const std::string& s);

struct PropertyResult {
  std::string name;
  int level = 0;
  double value = 0.0, tolerance = 0.0;
  bool pass = false;
};

// Reconstruction properties, rewrite identities and tangent finite differences on the
// first `levels` uniform levels of the configured problem.
std::vector<PropertyResult> verify(const CampaignConfig& c, int levels = 2,
                                   Fault fault = Fault::None);

void write_function(const std::string& csv_path, const std::string& sidecar_path,
                    const std::string& mesh_file, const FeFunction& u, const std::string& hash);

} // namespace nitsche
