#pragma once

#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "maxhmm/macroscatter.hpp"
#include "maxhmm/microcell.hpp"

namespace maxhmm {

// Full multiscale configuration: a periodic unit cell discretization whose
// effective tensors feed the macro scattering problem.
struct HmmConfig {
  ScatterConfig scatter;
  int micro_n = 8;
  AxisBox inclusion{Vec3::Constant(0.25), Vec3::Constant(0.75)};
  MicroCoefficients coeffs;

  // permits an inclusion sharing faces with the unit cell boundary (toy setups)
  bool inclusion_boundary_contact = false;

  // inclusion inside the unit cell and aligned with the micro grid
  void validate() const;
};

struct HmmSolution {
  HmmConfig config;
  std::shared_ptr<const StructuredTetMesh> micro_mesh;
  std::shared_ptr<const PeriodicIdentification> micro_ident;
  CellSolutions cells;
  EffectiveTensors tensors;
  MacroSolution macro;
};

// Decoupled realization: solve the cell problems once at the configured
// wavenumber, form the effective tensors, then solve the macro problem.
HmmSolution hmm_solve(const HmmConfig& cfg);

// Zeroth-order two-scale reconstruction at x for cells of physical period
// delta: inside the scatterer the macro field is augmented by the scalar
// potential gradient and the inclusion resonator response, both evaluated at
// the unit cell coordinate y = x/delta mod 1; outside it is the macro field.
Vec3c zeroth_order_field(const HmmSolution& sol, double delta, const Vec3& x);

// Re-expands a coarse edge field on a nested refinement of the same box
// (fine n a multiple of coarse n).  Each fine edge integral is split at the
// coarse element interfaces it crosses, so the transfer is exact and the
// result interpolates the coarse field without quadrature error.
EdgeField transfer_edge_field(const EdgeSpace& fine, const EdgeField& coarse);

// Scalar potential with zero boundary values solving
// (grad theta, grad phi) = (e, grad phi) for all P1 test functions phi.
// Its L2 norm measures the curl-free component of e in a dual sense.
struct ThetaField {
  std::shared_ptr<const NodalSpace> space;
  NodalField theta;
  double l2 = 0.0;
};
ThetaField helmholtz_theta(const EdgeField& e);

// Error of a coarse solution against a reference on a nested finer mesh.
struct ErrorNorms {
  double l2 = 0.0;
  double curl = 0.0;
  double theta_l2 = 0.0;
};
ErrorNorms error_norms(const MacroSolution& coarse, const MacroSolution& ref);

// Observed convergence orders between consecutive (mesh size, error) rows:
// out[0] is NaN, out[i] = log(e_{i-1}/e_i) / log(H_{i-1}/H_i).  Rows with a
// nonpositive error or equal mesh sizes yield NaN.
std::vector<double> eoc(const std::vector<std::pair<double, double>>& rows);

// Convergence study at fixed wavenumber: a ladder of paired macro/micro
// resolutions, each compared against one fine reference solution.
struct StudyConfig {
  HmmConfig base;
  std::vector<int> ns;  // ascending; used for both macro and micro grids
  int ref_macro_n = 24;
  int ref_micro_n = 12;
  std::filesystem::path cache_dir;  // caches the reference solve; empty disables

  void validate() const;
};

struct StudyRow {
  double H = 0.0;  // macro mesh size
  double h = 0.0;  // micro mesh size
  double k = 0.0;
  double l2_err = 0.0;
  double curl_err = 0.0;
  double theta_l2 = 0.0;
  double eoc_l2 = 0.0;  // NaN on the first row
  double eoc_curl = 0.0;
  double eoc_theta = 0.0;
};

struct StudyReport {
  std::vector<StudyRow> rows;
  double ref_H = 0.0;
  double ref_h = 0.0;
  bool ref_from_cache = false;
};

// Runs the ladder; progress lines go to log when given.
StudyReport convergence_study(const StudyConfig& cfg, std::ostream* log = nullptr);

void write_study_csv(const std::filesystem::path& path, const StudyReport& report);
std::string format_study_table(const StudyReport& report);

// Reference implementation of the coupled two-scale variational problem on a
// deliberately small mesh pair: macro field and all three corrector families
// are kept as unknowns of one dense system instead of being eliminated
// through cell problems.  Returns the macro coefficient vector (unconstrained
// edge space on the macro mesh) for comparison against the decoupled solver.
CVector monolithic_twoscale_macro(const HmmConfig& cfg);

}  // namespace maxhmm
