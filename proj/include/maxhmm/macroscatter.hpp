#pragma once

#include "maxhmm/microcell.hpp"

#include <memory>
#include <string>

namespace maxhmm {

// Plane wave amplitude * exp(-i k direction.x) * polarization.
struct IncidentWave {
  Vec3 direction = Vec3::Unit(0);
  Vec3 polarization = Vec3::Unit(1);
  Complex amplitude{1.0, 0.0};

  void validate() const;
  Vec3c field(double k, const Vec3& x) const;
  Vec3c curl(double k, const Vec3& x) const;
};

// Impedance data g = curl u_inc x n - ik (n x u_inc) x n; tangential to the
// face by construction.
Vec3c impedance_trace_g(const IncidentWave& wave, double k, const Vec3& x,
                        const Vec3& n);

// Scattering setup: effective tensors on the scatterer, identity coefficients
// in the surrounding shell, impedance condition on the outer box boundary.
struct ScatterConfig {
  AxisBox domain{Vec3::Zero(), Vec3::Ones()};
  AxisBox scatterer{Vec3::Constant(0.25), Vec3::Constant(0.75)};
  int mesh_n = 8;
  double k = 12.0;
  IncidentWave incident;
  EffectiveTensors tensors;

  // permits a scatterer sharing faces with the domain boundary (toy setups)
  bool allow_boundary_contact = false;

  // scatterer inside the domain (strictly unless boundary contact is allowed)
  // and aligned with the mesh grid
  void validate() const;
};

struct MacroSystem {
  std::shared_ptr<const StructuredTetMesh> mesh;
  std::shared_ptr<const EdgeSpace> space;
  SparseMatrix stiffness;  // curl-curl block with the electric tensor
  SparseMatrix mass;       // mass block with the magnetic tensor
  SparseMatrix boundary;   // tangential-tangential boundary mass
  SparseMatrix system;     // stiffness - k^2 mass - ik boundary
  CVector rhs;
};

MacroSystem assemble_effective_system(const ScatterConfig& config);
MacroSystem assemble_effective_system(const ScatterConfig& config,
                                      std::shared_ptr<const StructuredTetMesh> mesh);

// Power balance of the solved system: what the boundary data puts in must
// come out as volume absorption plus boundary radiation.
struct EnergyBalance {
  double input = 0.0;     // -Im(u^H rhs)
  double absorbed = 0.0;  // k^2 u^H Im(mass) u
  double radiated = 0.0;  // k Re(u^H boundary u)
  double defect = 0.0;    // relative mismatch of the three
};

struct MacroSolution {
  std::shared_ptr<const StructuredTetMesh> mesh;
  std::shared_ptr<const EdgeSpace> space;
  EdgeField u;
  double k = 0.0;
  SolverReport report;
  EnergyBalance balance;
};

MacroSolution solve_effective(const ScatterConfig& config);
MacroSolution solve_effective(const MacroSystem& sys, double k);

// Scale-free planarity statistic of the real field magnitude on the plane
// axis=coord: variance over a samples^2 grid divided by the squared mean.
double plane_field_variance(const MacroSolution& sol, int axis, double coord,
                            int samples_per_side = 24);

// VTK legacy ASCII export: vertex-averaged Re_u / Im_u point vectors plus the
// subdomain tag as cell data.
void write_vtk_field(const std::string& path, const StructuredTetMesh& mesh,
                     const EdgeField& u);

// CSV table of the cell layer nearest the plane axis=offset, sampled at
// barycenters: x,y,z,Re/Im field components,subdomain.
void write_plane_slice_csv(const std::string& path, const StructuredTetMesh& mesh,
                           const EdgeField& u, int axis, double offset);

}  // namespace maxhmm
