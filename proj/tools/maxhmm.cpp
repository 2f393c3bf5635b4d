#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "maxhmm/io.hpp"

using namespace maxhmm;

namespace {

struct CommonArgs {
  std::string config;
  std::string out = ".";
  int threads = 1;
  std::optional<double> k;
  std::optional<int> mesh_n;
};

// Collects the files a command writes so a failed run leaves no partial
// outputs behind.
struct OutputSet {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> written;

  explicit OutputSet(const std::string& d) : dir(d) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory: " + dir.string());
  }
  std::filesystem::path file(const std::string& name) {
    written.push_back(dir / name);
    return written.back();
  }
  void discard() {
    for (const auto& p : written) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }
};

std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path.string());
  return out;
}

void print_tensors(std::ostream& out, const EffectiveTensors& t) {
  out << "eps_inv_hom diagonal: " << g9(t.eps_inv_hom(0, 0)) << ", "
      << g9(t.eps_inv_hom(1, 1)) << ", " << g9(t.eps_inv_hom(2, 2)) << '\n';
  out << "mu_hom diagonal:";
  for (int i = 0; i < 3; ++i)
    out << (i ? ", " : " ") << g9(t.mu_hom(i, i).real()) << " + "
        << g9(t.mu_hom(i, i).imag()) << "i";
  out << '\n';
}

void print_macro_report(std::ostream& out, const MacroSolution& sol) {
  const Norms norms = weighted_norms(sol.u, sol.k);
  out << "solver: " << (sol.report.converged ? "converged" : "FAILED") << " in "
      << sol.report.iterations << " iterations, relative residual "
      << g9(sol.report.residual) << '\n';
  out << "energy balance defect: " << g9(sol.balance.defect) << '\n';
  out << "field norms: l2 = " << g9(norms.l2)
      << ", curl seminorm = " << g9(norms.curl_semi) << '\n';
}

void cmd_cell(const CommonArgs& args, OutputSet& out) {
  CellRunConfig rc = load_cell_config(args.config);
  if (args.k) rc.k = *args.k;
  if (args.mesh_n) rc.micro_n = *args.mesh_n;
  rc.validate();

  const auto [mesh, ident] = build_periodic_cell_mesh(rc.micro_n, rc.inclusion);
  rc.coeffs.validate(mesh.tets.size());
  CellSolutions cells;
  cells.cell1 = solve_cell1(mesh, ident, rc.coeffs);
  cells.cell2 = solve_cell2(mesh, ident);
  cells.cell3 = solve_cell3(mesh, rc.coeffs, rc.k);
  const EffectiveTensors tensors = compute_mu_hom(cells, rc.k);

  write_real_matrix_csv(out.file("eps_hom.csv"), tensors.eps_inv_hom);
  write_complex_matrix_csv(out.file("mu_hom.csv"), tensors.mu_hom);
  auto summary = open_text(out.file("cell_summary.txt"));
  summary << "periodicity-cell problems at k = " << g9(rc.k) << '\n';
  summary << mesh.stats_summary() << '\n';
  summary << "curl corrector dofs: " << cells.cell1.space->n_dofs
          << ", potential dofs: " << cells.cell2.space->n_dofs
          << ", resonator dofs: " << cells.cell3.space->n_dofs << '\n';
  print_tensors(summary, tensors);
  std::cout << "cell problems solved at k = " << g9(rc.k) << "; tensors written to "
            << out.dir.string() << '\n';
}

void cmd_musweep(const CommonArgs& args, OutputSet& out) {
  SweepRunConfig rc = load_sweep_config(args.config);
  if (args.mesh_n) rc.micro_n = *args.mesh_n;
  if (args.k)
    throw ConfigError("--k does not apply to musweep; set k_values or k_range");
  rc.validate();

  const auto [mesh, ident] = build_periodic_cell_mesh(rc.micro_n, rc.inclusion);
  rc.coeffs.validate(mesh.tets.size());
  const std::vector<MuSweepRow> rows =
      sweep_mu(mesh, ident, rc.coeffs, rc.k_grid, args.threads);
  const std::vector<ResonanceInterval> intervals = detect_resonance_intervals(rows);

  write_mu_sweep_csv(out.file("mu_sweep.csv"), rows);
  write_resonance_report(out.file("resonances.txt"), rows, intervals);
  std::size_t failed = 0;
  for (const auto& row : rows) failed += !row.ok;
  std::cout << rows.size() << " sweep rows (" << failed << " failed), "
            << intervals.size() << " resonance intervals; written to "
            << out.dir.string() << '\n';
}

void cmd_solve(const CommonArgs& args, OutputSet& out) {
  SolveRunConfig rc = load_solve_config(args.config);
  if (args.k) {
    rc.scatter.k = *args.k;
    rc.scatter.tensors.k = *args.k;
  }
  if (args.mesh_n) rc.scatter.mesh_n = *args.mesh_n;
  rc.validate();

  const MacroSolution sol = solve_effective(rc.scatter);
  write_vtk_field(out.file("field.vtk").string(), *sol.mesh, sol.u);
  if (rc.slice)
    write_plane_slice_csv(out.file("slice.csv").string(), *sol.mesh, sol.u,
                          rc.slice->axis, rc.slice->offset);
  auto summary = open_text(out.file("solve_summary.txt"));
  summary << "effective scattering solve at k = " << g9(sol.k) << '\n';
  summary << sol.mesh->stats_summary() << '\n';
  summary << "edge dofs: " << sol.space->n_dofs << '\n';
  print_macro_report(summary, sol);
  std::cout << "scattering problem solved at k = " << g9(sol.k)
            << "; fields written to " << out.dir.string() << '\n';
}

void cmd_hmm(const CommonArgs& args, OutputSet& out) {
  HmmRunConfig rc = load_hmm_config(args.config);
  if (args.k) rc.hmm.scatter.k = *args.k;
  if (args.mesh_n) rc.hmm.scatter.mesh_n = *args.mesh_n;
  rc.validate();

  const HmmSolution sol = hmm_solve(rc.hmm);
  write_real_matrix_csv(out.file("eps_hom.csv"), sol.tensors.eps_inv_hom);
  write_complex_matrix_csv(out.file("mu_hom.csv"), sol.tensors.mu_hom);
  write_vtk_field(out.file("field.vtk").string(), *sol.macro.mesh, sol.macro.u);
  if (rc.slice) {
    write_plane_slice_csv(out.file("slice.csv").string(), *sol.macro.mesh,
                          sol.macro.u, rc.slice->axis, rc.slice->offset);
    if (rc.delta)
      write_zeroth_slice_csv(out.file("zeroth_slice.csv"), sol, *rc.delta,
                             *rc.slice);
  }
  auto summary = open_text(out.file("hmm_summary.txt"));
  summary << "multiscale pipeline at k = " << g9(sol.macro.k) << '\n';
  summary << "macro " << sol.macro.mesh->stats_summary() << '\n';
  summary << "micro " << sol.micro_mesh->stats_summary() << '\n';
  print_tensors(summary, sol.tensors);
  print_macro_report(summary, sol.macro);
  std::cout << "multiscale solve done at k = " << g9(sol.macro.k)
            << "; outputs written to " << out.dir.string() << '\n';
}

void cmd_study(const CommonArgs& args, OutputSet& out) {
  StudyRunConfig rc = load_study_config(args.config);
  if (args.k) rc.study.base.scatter.k = *args.k;
  if (args.mesh_n)
    throw ConfigError("--mesh-n does not apply to study; set ns in the config");
  const char* cache_env = std::getenv("MAXWELL_HMM_CACHE");
  rc.study.cache_dir = cache_env ? std::filesystem::path(cache_env)
                                 : out.dir / "_refcache";
  rc.validate();

  const StudyReport report = convergence_study(rc.study, &std::cerr);
  write_study_csv(out.file("study.csv"), report);
  std::cout << format_study_table(report);
  std::cout << "reference mesh H = " << g9(report.ref_H)
            << (report.ref_from_cache ? " (loaded from cache)" : " (computed)")
            << "; table written to " << out.dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite-element multiscale solver for high-contrast Maxwell scattering"};
  app.require_subcommand(1);
  CommonArgs args;

  const auto add_common = [&args](CLI::App* sub) {
    sub->add_option("--config", args.config, "JSON parameter file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory (created if missing)");
    sub->add_option("--threads", args.threads, "worker threads for sweep rows")
        ->check(CLI::PositiveNumber);
    sub->add_option("--k", args.k, "override the wavenumber from the config");
    sub->add_option("--mesh-n", args.mesh_n,
                    "override the mesh resolution (micro grid for cell/musweep, "
                    "macro grid for solve/hmm)");
  };

  using Command = void (*)(const CommonArgs&, OutputSet&);
  std::vector<std::pair<CLI::App*, Command>> commands;
  commands.emplace_back(
      app.add_subcommand("cell", "solve the periodicity-cell problems and write "
                                 "the effective tensors"),
      cmd_cell);
  commands.emplace_back(
      app.add_subcommand("musweep", "sweep the effective permeability over a "
                                    "wavenumber grid and flag resonances"),
      cmd_musweep);
  commands.emplace_back(
      app.add_subcommand("solve", "solve the scattering problem with constant "
                                  "effective tensors"),
      cmd_solve);
  commands.emplace_back(
      app.add_subcommand("hmm", "run the full pipeline: cell problems, effective "
                                "tensors, macro scattering solve"),
      cmd_hmm);
  commands.emplace_back(
      app.add_subcommand("study", "run a convergence study against a "
                                  "self-computed reference solution"),
      cmd_study);
  for (auto& [sub, fn] : commands) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    OutputSet out(args.out);
    try {
      for (auto& [sub, fn] : commands)
        if (sub->parsed()) fn(args, out);
      return 0;
    } catch (...) {
      out.discard();
      throw;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
