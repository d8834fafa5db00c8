#include "nitsche/campaign.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>

using namespace nitsche;

namespace {

CampaignConfig select(const std::string& path, const std::string& builtin) {
  if (!builtin.empty())
    return builtin_config(builtin);
  if (path.empty())
    throw Error("give a config file or --builtin NAME");
  return load_config(path);
}

void print_summary(const std::string& mode, const AdaptiveReport& r, double h1, double en) {
  std::cout << mode << ":\n"
            << "  level      dofs   newton     eta_tot        err_H1   I_eff_low  I_eff_up\n";
  for (const LevelReport& l : r.levels) {
    std::cout << "  " << std::setw(5) << l.level << std::setw(10) << l.dofs << std::setw(9)
              << l.newton << std::scientific << std::setprecision(3) << std::setw(12)
              << l.eta.tot << std::setw(14) << (l.has_reference ? l.error.h1 : NAN)
              << std::defaultfloat << std::setprecision(3) << std::setw(12)
              << (l.bounds.defined ? l.bounds.eff_low : NAN) << std::setw(10)
              << (l.bounds.defined ? l.bounds.eff_up : NAN) << "\n";
  }
  if (r.levels.front().has_reference)
    std::cout << "  rate H1 " << h1 << ", rate energy " << en << "\n";
}

int run(const std::string& path, const std::string& builtin, const std::string& out,
        int threads) {
  CampaignConfig c = select(path, builtin);
  if (threads > 0) {
    c.threads = c.adaptive.threads = threads;
    c.estimators.equilibration.threads = threads;
  }
  const std::string dir = out.empty() ? resolve_output_dir(c) : out;
  std::cout << "campaign " << c.name << " (config_hash " << config_hash(c) << ")\n";
  const CampaignResult r = run_campaign(c, dir);
  if (r.uniform)
    print_summary("uniform", *r.uniform, r.rate_h1_uniform, r.rate_energy_uniform);
  if (r.adaptive)
    print_summary("adaptive", *r.adaptive, r.rate_h1_adaptive, r.rate_energy_adaptive);
  std::cout << r.files.size() << " files written to " << dir << "\n";
  return 0;
}

int verify_cmd(const std::string& path, const std::string& builtin, const std::string& fault,
               int levels) {
  const CampaignConfig c = select(path, builtin);
  const std::vector<PropertyResult> res = verify(c, levels, parse_fault(fault));
  int failed = 0;
  for (const PropertyResult& p : res) {
    std::cout << (p.pass ? "PASS " : "FAIL ") << "L" << p.level << " " << std::left
              << std::setw(28) << p.name << std::right << std::scientific
              << std::setprecision(2) << p.value << " <= " << p.tolerance << std::defaultfloat
              << "\n";
    failed += !p.pass;
  }
  std::cout << (failed ? std::to_string(failed) + " properties failed" : "all properties hold")
            << "\n";
  return failed ? 3 : 0;
}

int mesh_info(const std::string& path) {
  const Mesh m = load_mesh(path);
  const MeshStats s = mesh_stats(m);
  std::cout << "vertices " << s.vertices << "\nelements " << s.elements << "\nfaces " << s.faces
            << "\nhmin " << s.hmin << "\nhmax " << s.hmax << "\narea " << s.area
            << "\nmin_angle_deg " << s.min_angle_deg << "\n";
  for (const auto& [label, n] : s.boundary_faces)
    std::cout << "boundary " << label << " " << n << "\n";
  const std::string bad = check_conformity(m);
  std::cout << "conforming " << (bad.empty() ? "yes" : "no: " + bad) << "\n";
  return bad.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nitsche frictional contact with equilibrated a posteriori estimators"};
  app.require_subcommand(1);

  std::string config, builtin, out, fault = "none";
  int threads = 0, levels = 2;

  CLI::App* run_app = app.add_subcommand("run", "run the uniform and adaptive campaigns");
  run_app->add_option("config", config, "JSON configuration file");
  run_app->add_option("--builtin", builtin, "builtin configuration")
      ->check(CLI::IsMember(builtin_names()));
  run_app->add_option("--out", out, "output directory (overrides the config and NITSCHE_OUT_DIR)");
  run_app->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  CLI::App* verify_app = app.add_subcommand("verify", "check reconstruction and tangent properties");
  verify_app->add_option("config", config, "JSON configuration file");
  verify_app->add_option("--builtin", builtin, "builtin configuration")
      ->check(CLI::IsMember(builtin_names()));
  verify_app->add_option("--fault", fault, "inject a fault")
      ->check(CLI::IsMember({"none", "continuity", "equilibrium", "tangent"}));
  verify_app->add_option("--levels", levels, "uniform levels checked")->check(CLI::PositiveNumber);

  std::string mesh;
  CLI::App* mesh_app = app.add_subcommand("mesh-info", "print statistics of a mesh file");
  mesh_app->add_option("mesh", mesh, "mesh file")->required();

  CLI::App* list_app = app.add_subcommand("builtins", "list builtin configurations");
  bool dump = false;
  list_app->add_flag("--dump", dump, "print each builtin as JSON");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_app)
      return run(config, builtin, out, threads);
    if (*verify_app)
      return verify_cmd(config, builtin, fault, levels);
    if (*mesh_app)
      return mesh_info(mesh);
    for (const std::string& n : builtin_names()) {
      if (dump)
        std::cout << to_json(builtin_config(n)).dump(2) << "\n";
      else
        std::cout << n << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
