#include "maxhmm/macroscatter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>
#include <vector>

namespace maxhmm {

namespace {

// Eigen's cross() conjugates complex operands, so spell the bilinear one out
Vec3c bilinear_cross(const Vec3c& a, const Vec3c& b) {
  return Vec3c(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
               a[0] * b[1] - a[1] * b[0]);
}

Complex herm_dot_vec(const CVector& x, const CVector& y) {
  Complex s(0.0);
  for (std::size_t i = 0; i < x.size(); ++i) s += std::conj(x[i]) * y[i];
  return s;
}

// fill-reducing order from the geometric positions of the edge dofs
std::vector<int> edge_dof_order(const StructuredTetMesh& mesh, const EdgeSpace& space) {
  std::vector<Vec3> points(space.n_dofs, Vec3::Zero());
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    const int d = space.edge_dof[e];
    if (d >= 0)
      points[d] = 0.5 * (mesh.vertices[mesh.edges[e][0]] + mesh.vertices[mesh.edges[e][1]]);
  }
  const Vec3 h = (mesh.box.hi - mesh.box.lo) / mesh.n_per_axis;
  return nested_dissection_order(points, h);
}

}  // namespace

void IncidentWave::validate() const {
  if (std::abs(direction.norm() - 1.0) > 1e-12)
    throw ConfigError("incident wave: direction must be a unit vector");
  if (std::abs(polarization.norm() - 1.0) > 1e-12)
    throw ConfigError("incident wave: polarization must be a unit vector");
  if (std::abs(direction.dot(polarization)) > 1e-12)
    throw ConfigError("incident wave: polarization must be orthogonal to direction");
}

Vec3c IncidentWave::field(double k, const Vec3& x) const {
  const Complex phase = amplitude * std::exp(Complex(0.0, -k * direction.dot(x)));
  return phase * polarization.cast<Complex>();
}

Vec3c IncidentWave::curl(double k, const Vec3& x) const {
  const Complex phase = amplitude * std::exp(Complex(0.0, -k * direction.dot(x)));
  const Vec3 dxq = direction.cross(polarization);
  return Complex(0.0, -k) * phase * dxq.cast<Complex>();
}

Vec3c impedance_trace_g(const IncidentWave& wave, double k, const Vec3& x,
                        const Vec3& n) {
  const Vec3c u = wave.field(k, x);
  const Vec3c nc = n.cast<Complex>();
  const Vec3c u_t = bilinear_cross(bilinear_cross(nc, u), nc);
  return bilinear_cross(wave.curl(k, x), nc) - Complex(0.0, k) * u_t;
}

void ScatterConfig::validate() const {
  domain.validate();
  scatterer.validate();
  for (int a = 0; a < 3; ++a) {
    const bool ok = allow_boundary_contact
                        ? domain.lo[a] <= scatterer.lo[a] && scatterer.hi[a] <= domain.hi[a]
                        : domain.lo[a] < scatterer.lo[a] && scatterer.hi[a] < domain.hi[a];
    if (!ok) throw ConfigError("scatter config: scatterer must lie strictly inside the domain");
  }
  if (!(k > 0.0)) throw ConfigError("scatter config: wavenumber must be positive");
  if (mesh_n < 2) throw ConfigError("scatter config: mesh must have at least 2 cells per axis");
  for (int a = 0; a < 3; ++a) {
    const double h = (domain.hi[a] - domain.lo[a]) / mesh_n;
    for (double c : {scatterer.lo[a], scatterer.hi[a]}) {
      const double r = (c - domain.lo[a]) / h;
      if (std::abs(r - std::round(r)) > 1e-9)
        throw ConfigError("scatter config: mesh does not resolve the scatterer faces");
    }
  }
  incident.validate();
}

MacroSystem assemble_effective_system(const ScatterConfig& config,
                                      std::shared_ptr<const StructuredTetMesh> mesh) {
  config.validate();

  auto space = std::make_shared<const EdgeSpace>(*mesh, EdgeFlavor::Unconstrained);

  const std::size_t n_tets = mesh->tets.size();
  std::vector<Mat3c> eps(n_tets), mu(n_tets);
  const Mat3c eps_in = config.tensors.eps_inv_hom.cast<Complex>();
  for (std::size_t t = 0; t < n_tets; ++t) {
    const bool inside = mesh->subdomain_tag[t] == SubdomainTag::Inside;
    eps[t] = inside ? eps_in : Mat3c::Identity();
    mu[t] = inside ? config.tensors.mu_hom : Mat3c::Identity();
  }

  MacroSystem sys;
  sys.mesh = mesh;
  sys.space = space;
  sys.stiffness = assemble_curlcurl(*space, CoeffField::per_tet(std::move(eps)));
  sys.mass = assemble_mass(*space, CoeffField::per_tet(std::move(mu)));
  sys.boundary = assemble_boundary_tangential_mass(*space);

  const double k = config.k;
  sys.system = matrix_sum(Complex(1.0), linear_combination(1.0, sys.stiffness, -k * k, sys.mass),
                          Complex(0.0, -k), sys.boundary);

  const IncidentWave wave = config.incident;
  sys.rhs = boundary_load(*space, [&wave, k](const Vec3& x, const Vec3& n) {
    return impedance_trace_g(wave, k, x, n);
  });
  return sys;
}

MacroSystem assemble_effective_system(const ScatterConfig& config) {
  auto mesh = std::make_shared<const StructuredTetMesh>(
      build_box_mesh(config.domain, config.mesh_n, config.scatterer));
  return assemble_effective_system(config, std::move(mesh));
}

MacroSolution solve_effective(const MacroSystem& sys, double k) {
  MacroSolution sol;
  sol.mesh = sys.mesh;
  sol.space = sys.space;
  sol.k = k;

  const std::vector<int> perm = edge_dof_order(*sys.mesh, *sys.space);
  SymmetricDirectSolver solver(sys.system, &perm);
  sol.u.space = sys.space.get();
  sol.u.coeffs = solver.solve(sys.rhs, &sol.report);
  if (!sol.report.converged || sol.report.residual > 1e-8)
    throw SolverError("effective scattering solve did not reach the residual target");

  const Complex u_rhs = herm_dot_vec(sol.u.coeffs, sys.rhs);
  const Complex u_m_u = herm_dot_vec(sol.u.coeffs, spmv(sys.mass, sol.u.coeffs));
  const Complex u_b_u = herm_dot_vec(sol.u.coeffs, spmv(sys.boundary, sol.u.coeffs));
  sol.balance.input = -u_rhs.imag();
  sol.balance.absorbed = k * k * u_m_u.imag();
  sol.balance.radiated = k * u_b_u.real();
  const double scale = std::max({std::abs(sol.balance.input), sol.balance.radiated, 1e-300});
  sol.balance.defect =
      std::abs(sol.balance.input - sol.balance.absorbed - sol.balance.radiated) / scale;
  return sol;
}

MacroSolution solve_effective(const ScatterConfig& config) {
  return solve_effective(assemble_effective_system(config), config.k);
}

double plane_field_variance(const MacroSolution& sol, int axis, double coord,
                            int samples_per_side) {
  const AxisBox& box = sol.mesh->box;
  if (coord < box.lo[axis] || coord > box.hi[axis])
    throw ConfigError("plane statistic: coordinate outside the domain");
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(samples_per_side) * samples_per_side);
  for (int i = 0; i < samples_per_side; ++i)
    for (int j = 0; j < samples_per_side; ++j) {
      Vec3 x;
      x[axis] = coord;
      x[a1] = box.lo[a1] + (box.hi[a1] - box.lo[a1]) * (i + 0.5) / samples_per_side;
      x[a2] = box.lo[a2] + (box.hi[a2] - box.lo[a2]) * (j + 0.5) / samples_per_side;
      const int t = sol.mesh->locate(x);
      if (t < 0) continue;
      Vec3 re;
      const Vec3c u = eval_edge_field(sol.u, t, x);
      for (int c = 0; c < 3; ++c) re[c] = u[c].real();
      values.push_back(re.norm());
    }
  if (values.empty()) return 0.0;

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= values.size();
  return var / std::max(mean * mean, 1e-300);
}

void write_vtk_field(const std::string& path, const StructuredTetMesh& mesh,
                     const EdgeField& u) {
  const std::size_t nv = mesh.vertices.size();
  const std::size_t nt = mesh.tets.size();

  std::vector<Vec3c> avg(nv, Vec3c::Zero());
  std::vector<int> count(nv, 0);
  for (std::size_t t = 0; t < nt; ++t)
    for (int lv = 0; lv < 4; ++lv) {
      const int v = mesh.tets[t][lv];
      avg[v] += eval_edge_field(u, static_cast<int>(t), mesh.vertices[v]);
      count[v] += 1;
    }
  for (std::size_t v = 0; v < nv; ++v)
    if (count[v] > 0) avg[v] /= static_cast<double>(count[v]);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << "# vtk DataFile Version 3.0\n";
  out << "time-harmonic field\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";

  char buf[160];
  out << "POINTS " << nv << " double\n";
  for (const Vec3& x : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", x[0], x[1], x[2]);
    out << buf;
  }
  out << "CELLS " << nt << " " << 5 * nt << "\n";
  for (const auto& T : mesh.tets)
    out << "4 " << T[0] << " " << T[1] << " " << T[2] << " " << T[3] << "\n";
  out << "CELL_TYPES " << nt << "\n";
  for (std::size_t t = 0; t < nt; ++t) out << "10\n";

  out << "POINT_DATA " << nv << "\n";
  for (int part = 0; part < 2; ++part) {
    out << "VECTORS " << (part == 0 ? "Re_u" : "Im_u") << " double\n";
    for (std::size_t v = 0; v < nv; ++v) {
      const Vec3c& a = avg[v];
      std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n",
                    part == 0 ? a[0].real() : a[0].imag(),
                    part == 0 ? a[1].real() : a[1].imag(),
                    part == 0 ? a[2].real() : a[2].imag());
      out << buf;
    }
  }
  out << "CELL_DATA " << nt << "\n";
  out << "SCALARS subdomain int 1\n";
  out << "LOOKUP_TABLE default\n";
  for (std::size_t t = 0; t < nt; ++t)
    out << (mesh.subdomain_tag[t] == SubdomainTag::Inside ? 1 : 0) << "\n";
  if (!out) throw ConfigError("failed writing output file: " + path);
}

void write_plane_slice_csv(const std::string& path, const StructuredTetMesh& mesh,
                           const EdgeField& u, int axis, double offset) {
  const AxisBox& box = mesh.box;
  if (offset < box.lo[axis] || offset > box.hi[axis])
    throw ConfigError("plane slice: offset outside the domain");
  const double h = (box.hi[axis] - box.lo[axis]) / mesh.n_per_axis;
  int layer = static_cast<int>(std::floor((offset - box.lo[axis]) / h));
  layer = std::clamp(layer, 0, mesh.n_per_axis - 1);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << "x,y,z,Re_ux,Im_ux,Re_uy,Im_uy,Re_uz,Im_uz,subdomain\n";
  char buf[320];
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const Vec3 b = mesh.barycenter(static_cast<int>(t));
    const int t_layer = static_cast<int>(std::floor((b[axis] - box.lo[axis]) / h));
    if (t_layer != layer) continue;
    const Vec3c v = eval_edge_field(u, static_cast<int>(t), b);
    std::snprintf(buf, sizeof buf,
                  "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", b[0], b[1],
                  b[2], v[0].real(), v[0].imag(), v[1].real(), v[1].imag(),
                  v[2].real(), v[2].imag(),
                  mesh.subdomain_tag[t] == SubdomainTag::Inside ? 1 : 0);
    out << buf;
  }
  if (!out) throw ConfigError("failed writing output file: " + path);
}

}  // namespace maxhmm
