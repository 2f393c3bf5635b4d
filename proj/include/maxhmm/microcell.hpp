#pragma once

#include "maxhmm/fem.hpp"

#include <memory>
#include <optional>
#include <string>

namespace maxhmm {

// Material data on the periodicity cell: eps0_inv on the matrix part (size 1
// or one value per tet), eps1_inv on the inclusion.  The negative imaginary
// part of eps1_inv models absorption and keeps the inclusion problem coercive.
struct MicroCoefficients {
  std::vector<double> eps0_inv = {1.0};
  Complex eps1_inv{1.0, -0.01};

  double eps0_at(std::size_t t) const {
    return eps0_inv.size() == 1 ? eps0_inv[0] : eps0_inv[t];
  }
  void validate(std::size_t n_tets) const;
};

struct EffectiveTensors {
  Mat3 eps_inv_hom = Mat3::Identity();
  Mat3c mu_hom = Mat3c::Identity();
  double k = 0.0;
};

// First cell problem: periodic curl correctors on the matrix part, one per
// coordinate direction.  Only the (gauge-independent) curls are kept.
struct Cell1Solution {
  std::shared_ptr<const EdgeSpace> space;
  std::array<std::vector<Vec3c>, 3> curl_w1;  // per tet, zero off the matrix part
  Mat3 eps_inv_hom = Mat3::Identity();
};

// Second cell problem: periodic scalar potentials p_l (the k-independent
// rescaling of the divergence correctors), zero mean over the matrix part.
struct Cell2Solution {
  std::shared_ptr<const NodalSpace> space;
  std::array<NodalField, 3> p;
};

// Third cell problem: inclusion resonators with zero tangential trace,
// solved at a fixed wavenumber.
struct Cell3Solution {
  std::shared_ptr<const EdgeSpace> space;
  std::array<EdgeField, 3> w3;
  double k = 0.0;
};

struct CellSolutions {
  Cell1Solution cell1;
  Cell2Solution cell2;
  Cell3Solution cell3;
};

Cell1Solution solve_cell1(const StructuredTetMesh& mesh,
                          const PeriodicIdentification& ident,
                          const MicroCoefficients& coeffs);

Cell2Solution solve_cell2(const StructuredTetMesh& mesh,
                          const PeriodicIdentification& ident);

Cell3Solution solve_cell3(const StructuredTetMesh& mesh, const MicroCoefficients& coeffs,
                          double k);

// mu_hom(k) = Id + int_{matrix} grad p_l . e_j + k^2 int_{inclusion} w3_l . e_j
Mat3c mu_from_parts(const Cell2Solution& c2, const Cell3Solution& c3, double k);

// Combines the stored cell solutions; cells must have been solved at this k.
EffectiveTensors compute_mu_hom(const CellSolutions& cells, double k);

struct MuSweepRow {
  double k = 0.0;
  Mat3c mu = Mat3c::Identity();
  bool ok = false;
  std::string note;  // failure annotation; empty on success
};

// One inclusion solve per k; the k-independent cell problems are solved once.
// Solver failures annotate the affected row instead of aborting the sweep.
std::vector<MuSweepRow> sweep_mu(const StructuredTetMesh& mesh,
                                 const PeriodicIdentification& ident,
                                 const MicroCoefficients& coeffs,
                                 const std::vector<double>& k_grid, int n_threads = 1);

struct ResonanceInterval {
  double k_lo = 0.0;
  double k_hi = 0.0;
};

// Flags resonances as k-intervals anchored at local maxima of Im(diag mu)
// exceeding three times the sweep median.  Sign changes of Re(diag mu) within
// five grid spacings of an anchor widen its interval; flags closer than five
// spacings merge.
std::vector<ResonanceInterval> detect_resonance_intervals(
    const std::vector<MuSweepRow>& rows);

}  // namespace maxhmm
