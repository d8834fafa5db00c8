#include <doctest.h>

#include "nitsche/campaign.hpp"

#include <filesystem>
#include <fstream>

using namespace nitsche;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "name": "small",
    "geometry": {"kind": "rectangle", "x": [-1, 1], "y": [0, 1], "nx": 4, "ny": 2,
                 "labels": {"bottom": "C", "right": "N0", "top": "D", "left": "N1"}},
    "material": {"E": 1.0, "nu": 0.3},
    "loads": {"f": [0, -0.02], "neumann": {"N1": [-0.028, 0]}},
    "friction": {"law": "tresca", "s": 0.005},
    "nitsche": {"gamma0": 10, "rule": "times_E"},
    "adaptive": {"theta": 0.2, "max_levels": 2, "stop_when_even": false},
    "uniform": {"levels": 2},
    "reference": {"enabled": true, "uniform_levels": 1, "degree": 2}
  })");
}

std::string error_path(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

} // namespace

TEST_CASE("config round trip and hash") {
  const CampaignConfig c = parse_config(small_config());
  CHECK(c.geometry.nx == 4);
  CHECK(c.neumann.at(1).x() == doctest::Approx(-0.028));
  CHECK(c.problem_data().gamma0 == doctest::Approx(10.0));
  const CampaignConfig again = parse_config(to_json(c));
  CHECK(to_json(again) == to_json(c));
  CHECK(config_hash(again) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  json changed = small_config();
  changed["friction"]["s"] = 0.006;
  CHECK(config_hash(parse_config(changed)) != config_hash(c));
}

TEST_CASE("invalid configurations name the offending field") {
  json j = small_config();
  j["geometry"]["gap"] = 0.1;
  CHECK(error_path(j) == "geometry.gap");
  j = small_config();
  j["gap"] = json::array({0, 1});
  CHECK(error_path(j) == "gap");
  j = small_config();
  j["material"]["E"] = -1;
  CHECK(error_path(j) == "material.E");
  j = small_config();
  j["material"]["nu"] = 0.5;
  CHECK(error_path(j) == "material.nu");
  j = small_config();
  j["geometry"]["labels"]["top"] = "X";
  CHECK(error_path(j) == "geometry.labels.top");
  j = small_config();
  j["adaptive"]["thta"] = 0.1;
  CHECK(error_path(j) == "adaptive.thta");
  j = small_config();
  j["degree"] = 2;
  CHECK(error_path(j) == "degree");
  j = small_config();
  j["loads"]["neumann"]["D"] = {1, 0};
  CHECK(error_path(j) == "loads.neumann.D");
  j = small_config();
  j["newton"] = {{"stopping", "sometimes"}};
  CHECK(error_path(j) == "newton.stopping");
  j = small_config();
  j["friction"] = {{"law", "tresca"}, {"mu", 0.3}};
  CHECK(error_path(j) == "friction.mu");
}

TEST_CASE("builtins") {
  for (const std::string& name : builtin_names()) {
    const CampaignConfig c = builtin_config(name);
    CHECK(parse_config(to_json(c)).name == name);
    CHECK(c.adaptive.max_levels == 11);
    CHECK(c.adaptive.theta == doctest::Approx(0.062));
    CHECK(check_conformity(c.initial_mesh()).empty());
  }
  CHECK(builtin_config("square-lit").problem_data().gamma0 == doctest::Approx(1e6));
  CHECK(builtin_config("coulomb-rect").law == FrictionLaw::Coulomb);
  CHECK_THROWS_AS(builtin_config("nope"), Error);
}

TEST_CASE("campaign writes its manifest") {
  const fs::path dir = fs::temp_directory_path() / "nitsche_campaign_test";
  fs::remove_all(dir);
  const CampaignConfig c = parse_config(small_config());
  const CampaignResult r = run_campaign(c, dir.string());
  REQUIRE(r.uniform);
  REQUIRE(r.adaptive);
  CHECK(r.uniform->levels.size() == 2);
  CHECK(r.adaptive->levels.size() == 2);
  CHECK(r.reference_dofs > 0);
  std::ifstream in(dir / "manifest.json");
  const json m = json::parse(in);
  CHECK(m["config_hash"] == r.hash);
  CHECK(m["files"].size() > 10);
  for (const auto& f : m["files"]) {
    const fs::path p = dir / f.get<std::string>();
    CHECK_MESSAGE(fs::file_size(p) > 0, p.string());
  }
  std::ifstream newton(dir / "adaptive_newton.csv");
  std::string first, header;
  std::getline(newton, first);
  std::getline(newton, header);
  CHECK(first == "# config_hash=" + r.hash);
  CHECK(header == "level,k,eta_osc,eta_str,eta_lin,eta_Neu,eta_cnt,eta_frc,stop");
  // The final mesh named by the solution sidecar exists and matches the dof count.
  std::ifstream side(dir / "adaptive_solution.json");
  const json s = json::parse(side);
  const Mesh last = load_mesh((dir / s["mesh"].get<std::string>()).string());
  CHECK(last.num_elements() == r.adaptive->levels.back().elements);
  fs::remove_all(dir);
}

TEST_CASE("round-tripped config reproduces the report files") {
  const fs::path a = fs::temp_directory_path() / "nitsche_roundtrip_a";
  const fs::path b = fs::temp_directory_path() / "nitsche_roundtrip_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const CampaignConfig c = parse_config(small_config());
  const CampaignResult ra = run_campaign(c, a.string());
  const CampaignResult rb = run_campaign(parse_config(json::parse(to_json(c).dump())), b.string());
  REQUIRE(ra.files == rb.files);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const std::string& f : ra.files)
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("output directory override") {
  CampaignConfig c;
  c.output_dir = "runs/a";
  unsetenv("NITSCHE_OUT_DIR");
  CHECK(resolve_output_dir(c) == "runs/a");
  setenv("NITSCHE_OUT_DIR", "/tmp/elsewhere", 1);
  CHECK(resolve_output_dir(c) == "/tmp/elsewhere");
  unsetenv("NITSCHE_OUT_DIR");
}

TEST_CASE("property suite and fault injection") {
  json j = small_config();
  j["friction"] = {{"law", "coulomb"}, {"mu", 0.5}};
  const CampaignConfig c = parse_config(j);
  auto failing = [&](Fault f) {
    std::vector<std::string> names;
    for (const PropertyResult& p : verify(c, 2, f))
      if (!p.pass)
        names.push_back(p.name);
    return names;
  };
  CHECK(failing(Fault::None).empty());
  auto has = [](const std::vector<std::string>& v, const std::string& prefix) {
    for (const std::string& s : v)
      if (s.rfind(prefix, 0) == 0)
        return true;
    return false;
  };
  const auto cont = failing(Fault::Continuity);
  CHECK(has(cont, "continuity"));
  CHECK_FALSE(has(cont, "tangent"));
  const auto eq = failing(Fault::Equilibrium);
  CHECK(has(eq, "equilibrium"));
  CHECK_FALSE(has(eq, "continuity"));
  const auto tan = failing(Fault::Tangent);
  CHECK(has(tan, "tangent"));
  CHECK_FALSE(has(tan, "equilibrium"));
  CHECK(parse_fault("tangent") == Fault::Tangent);
  CHECK_THROWS_AS(parse_fault("gravity"), Error);
}
