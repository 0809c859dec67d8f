#include "fehmm/studies.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>

using namespace fehmm;

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  int threads = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> sets;
  std::string scale;
};

StudyConfig load(const Options& o) {
  Config c = o.config.empty() ? Config{} : Config::load(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    std::string k = kv.substr(0, eq);
    k.erase(k.find_last_not_of(" \t") + 1);
    c.set(k, kv.substr(eq + 1));
  }
  if (o.threads > 0) c.set("threads", std::to_string(o.threads));
  if (o.seed_given) c.set("seed", std::to_string(o.seed));
  if (!o.scale.empty()) c.set("study.scale", o.scale);
  return study_config_from(c);
}

void report(const StudyResult& r, const std::string& out) {
  const auto paths = write_study(r, out);
  for (const auto& s : r.series)
    std::cout << r.study << "  " << std::left << std::setw(40) << s.label << std::setw(7)
              << to_string(s.norm) << " rate " << std::setprecision(4) << s.rate << '\n';
  for (const auto& n : r.notes) std::cout << "note: " << n << '\n';
  std::cout << "wrote " << paths.size() << " files to " << out << " (config " << r.config_hash << ")\n";
}

void homogenize(const StudyConfig& s) {
  std::cout << std::setprecision(12);
  for (const auto& cs : s.couplings) {
    const MicroSolver m(micro_problem(s, s.micro_fixed, s.delta_over_epsilon), cs);
    std::cout << to_string(cs.kind) << " (N = " << s.micro_fixed << ", q = " << s.q
              << ", delta/epsilon = " << s.delta_over_epsilon << ")\n"
              << m.homogenized().voigt << "\n";
  }
}

void solve(const StudyConfig& s, const std::string& out) {
  std::filesystem::create_directories(out);
  MacroProblem P = macro_problem(s, s.macro_fixed);
  P.micro = micro_problem(s, s.micro_fixed, s.delta_over_epsilon);
  P.coupling = s.couplings.front();
  const MacroSolution sol = assemble_and_solve(P);
  const auto vtk = (std::filesystem::path(out) / "solve.vtk").string();
  const auto csv = (std::filesystem::path(out) / "solve_qp.csv").string();
  export_vtk(vtk, sol);
  export_qp_csv(csv, sol);
  std::cout << std::setprecision(10) << "coupling " << to_string(P.coupling.kind) << ", macro "
            << s.macro_fixed << "x" << s.macro_fixed << " p=" << s.p << ", micro N=" << s.micro_fixed
            << " q=" << s.q << "\n"
            << "||u_H||_L2 = " << norm_L2(sol.mesh, sol.u_H) << "\n"
            << "A0 =\n" << sol.A0.voigt << "\n"
            << "wrote " << vtk << " and " << csv << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale FE-HMM / FE2 homogenization for 2D plane-strain elasticity"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sc) {
    sc->add_option("--config", o.config, "config file (key = value)");
    sc->add_option("--out", o.out, "output directory")->capture_default_str();
    sc->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sc->add_option("--seed", o.seed, "seed for the perturbation draws")
        ->each([&o](const std::string&) { o.seed_given = true; });
    sc->add_option("--set", o.sets, "override one config entry, key=value")->take_all();
    return sc;
  };
  auto* homog = common(app.add_subcommand("homogenize", "print the homogenized tensor"));
  auto* solve_cmd = common(app.add_subcommand("solve", "one two-scale solve with VTK export"));
  auto* cmicro = common(app.add_subcommand("converge-micro", "micro refinement study"));
  cmicro->add_option("--scale", o.scale, "macroscale or microscale")
      ->check(CLI::IsMember({"macroscale", "microscale"}));
  auto* cmacro = common(app.add_subcommand("converge-macro", "macro refinement study"));
  auto* refine = common(app.add_subcommand("refine-study", "micro-macro refinement strategies"));
  auto* neumann = common(app.add_subcommand("neumann-compare", "semi-Dirichlet vs perturbation"));
  auto* model = common(app.add_subcommand("modeling-error", "RVE size and coupling study"));
  auto* decomp = common(app.add_subcommand("decompose-error", "total / macro / micro errors"));
  auto* estim = common(app.add_subcommand("estimate-error", "SPR estimator validation"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const StudyConfig s = load(o);
    if (homog->parsed()) homogenize(s);
    else if (solve_cmd->parsed()) solve(s, o.out);
    else if (cmicro->parsed()) report(run_micro_convergence(s, s.scale), o.out);
    else if (cmacro->parsed()) report(run_macro_convergence(s), o.out);
    else if (refine->parsed()) report(run_refinement_strategy(s), o.out);
    else if (neumann->parsed()) report(run_neumann_comparison(s), o.out);
    else if (model->parsed()) report(run_modeling_error(s), o.out);
    else if (decomp->parsed()) report(run_error_decomposition(s), o.out);
    else if (estim->parsed()) report(run_estimator_validation(s), o.out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
