#include "maxhmm/macroscatter.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace maxhmm;

namespace {

ScatterConfig small_config(int n, double k) {
  ScatterConfig cfg;
  cfg.mesh_n = n;
  cfg.k = k;
  return cfg;
}

double vec_err(const Vec3c& a, const Vec3c& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

Eigen::MatrixXcd to_dense(const SparseMatrix& A) {
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) D(i, A.col[p]) += A.val[p];
  return D;
}

double rel_curl_error_vs_incident(const MacroSolution& sol, const IncidentWave& w) {
  EdgeField ref = interpolate_edge(
      *sol.space, [&](const Vec3& x) { return w.field(sol.k, x); });
  EdgeField err = ref;
  for (std::size_t i = 0; i < err.coeffs.size(); ++i)
    err.coeffs[i] = sol.u.coeffs[i] - ref.coeffs[i];
  const Norms e = weighted_norms(err, sol.k);
  const Norms r = weighted_norms(ref, sol.k);
  return std::sqrt(e.l2 * e.l2 + e.curl_semi * e.curl_semi) /
         std::sqrt(r.l2 * r.l2 + r.curl_semi * r.curl_semi);
}

std::string temp_path(const std::string& name) {
  return std::string("/tmp/maxhmm_test_") + name;
}

}  // namespace

TEST_CASE("plane wave field and curl match the closed forms") {
  IncidentWave w;
  const double k = 5.0;

  CHECK(vec_err(w.field(k, Vec3::Zero()), Vec3c(0, 1, 0)) == 0.0);

  const Vec3 x(0.3, 0.8, 0.1);
  const Complex phase = std::exp(-I_UNIT * k * x[0]);
  CHECK(vec_err(w.field(k, x), phase * Vec3c(0, 1, 0)) <= 1e-15);
  CHECK(vec_err(w.curl(k, x), -I_UNIT * k * phase * Vec3c(0, 0, 1)) <= 1e-14);

  // k=0 degenerates to the constant polarization vector
  CHECK(vec_err(w.field(0.0, x), Vec3c(0, 1, 0)) == 0.0);

  // a rotated, scaled wave keeps the analytic form
  IncidentWave r;
  r.direction = Vec3(0, 0, 1);
  r.polarization = Vec3(1, 0, 0);
  r.amplitude = Complex(0.5, -2.0);
  const Complex rphase = r.amplitude * std::exp(-I_UNIT * k * x[2]);
  CHECK(vec_err(r.field(k, x), rphase * Vec3c(1, 0, 0)) <= 1e-14);
  CHECK(vec_err(r.curl(k, x), -I_UNIT * k * rphase * Vec3c(0, 1, 0)) <= 1e-14);

  IncidentWave bad = w;
  bad.direction *= 2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = w;
  bad.polarization = Vec3(0, 0.6, 0.8).normalized() * 1.01;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = w;
  bad.polarization = Vec3(1, 1, 0).normalized();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("impedance trace reproduces the hand-derived face values") {
  IncidentWave w;
  const double k = 12.0;

  // face x1=0, inward-traveling wave: the two terms cancel exactly
  const Vec3c g0 = impedance_trace_g(w, k, Vec3(0.0, 0.3, 0.7), Vec3(-1, 0, 0));
  CHECK(g0.cwiseAbs().maxCoeff() == 0.0);

  // face x1=1: both terms align, g = -2ik exp(-ik) e2
  const Vec3c g1 = impedance_trace_g(w, k, Vec3(1.0, 0.3, 0.7), Vec3(1, 0, 0));
  const Vec3c g1_exact = -2.0 * I_UNIT * k * std::exp(-I_UNIT * k) * Vec3c(0, 1, 0);
  CHECK(vec_err(g1, g1_exact) <= 1e-13);

  // face x2=0: the tangential trace of u vanishes, only the curl term remains
  const double x1 = 0.42;
  const Vec3c g2 = impedance_trace_g(w, k, Vec3(x1, 0.0, 0.13), Vec3(0, -1, 0));
  const Vec3c g2_exact = -I_UNIT * k * std::exp(-I_UNIT * k * x1) * Vec3c(1, 0, 0);
  CHECK(vec_err(g2, g2_exact) <= 1e-13);

  // tangency g.n = 0 on every face and at arbitrary points
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side) {
      Vec3 n = Vec3::Zero();
      n[axis] = side == 0 ? -1.0 : 1.0;
      Vec3 x(0.21, 0.55, 0.83);
      x[axis] = side;
      const Vec3c g = impedance_trace_g(w, k, x, n);
      Complex gn(0.0);
      for (int c = 0; c < 3; ++c) gn += g[c] * n[c];
      CHECK(std::abs(gn) <= 1e-14);
    }
}

TEST_CASE("scatter configuration validation") {
  CHECK_NOTHROW(small_config(4, 12.0).validate());
  CHECK_NOTHROW(small_config(8, 3.0).validate());

  ScatterConfig bad = small_config(4, 12.0);
  bad.k = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config(4, 12.0);
  bad.k = -3.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // scatterer touching or crossing the outer boundary
  bad = small_config(4, 12.0);
  bad.scatterer = AxisBox{Vec3::Zero(), Vec3::Constant(0.75)};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.allow_boundary_contact = true;  // opt-in permits shared faces
  CHECK_NOTHROW(bad.validate());
  bad.scatterer = AxisBox{Vec3::Zero(), Vec3(0.75, 1.25, 0.75)};
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // but never an overhang
  bad = small_config(4, 12.0);
  bad.scatterer = AxisBox{Vec3::Constant(0.25), Vec3(0.75, 1.5, 0.75)};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // mesh grid must hit the scatterer faces exactly
  bad = small_config(6, 12.0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config(3, 12.0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = small_config(4, 12.0);
  bad.incident.direction = Vec3(1, 1, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("assembled system is complex symmetric with consistent blocks") {
  ScatterConfig cfg = small_config(4, 7.0);
  cfg.tensors.eps_inv_hom = Mat3::Identity() * 0.7;
  cfg.tensors.mu_hom = Mat3c::Identity() * Complex(0.9, 0.05);
  cfg.tensors.k = cfg.k;

  const MacroSystem sys = assemble_effective_system(cfg);
  const Eigen::MatrixXcd A = to_dense(sys.system);
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  const Eigen::MatrixXcd combo = to_dense(sys.stiffness) -
                                 cfg.k * cfg.k * to_dense(sys.mass) -
                                 I_UNIT * cfg.k * to_dense(sys.boundary);
  CHECK((A - combo).cwiseAbs().maxCoeff() <= 1e-12);

  // boundary block only couples boundary edges: interior rows are empty
  const Eigen::MatrixXcd B = to_dense(sys.boundary);
  const EdgeSpace& S = *sys.space;
  const StructuredTetMesh& mesh = *sys.mesh;
  std::vector<char> on_bdry(S.n_dofs, 0);
  for (const BoundaryFace& f : mesh.boundary_faces)
    for (int le = 0; le < 6; ++le) {
      const auto [dof, sign] = S.dof(f.parent_tet, le);
      (void)sign;
      const auto& E = mesh.edges[mesh.tet_edges[f.parent_tet][le]];
      const Vec3& a = mesh.vertices[E[0]];
      const Vec3& b = mesh.vertices[E[1]];
      bool on_face = true;
      for (int c = 0; c < 3; ++c)
        if (std::abs(f.normal[c]) > 0.5)
          on_face = (std::abs(a[c] - b[c]) <= 1e-14) &&
                    (std::abs(a[c] - mesh.box.lo[c]) <= 1e-14 ||
                     std::abs(a[c] - mesh.box.hi[c]) <= 1e-14);
      if (on_face && dof >= 0) on_bdry[dof] = 1;
    }
  for (int i = 0; i < S.n_dofs; ++i)
    if (!on_bdry[i]) CHECK(B.row(i).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero boundary data produces the zero solution") {
  ScatterConfig cfg = small_config(4, 9.0);
  cfg.incident.amplitude = Complex(0.0, 0.0);
  const MacroSolution sol = solve_effective(cfg);
  double umax = 0.0;
  for (const Complex& c : sol.u.coeffs) umax = std::max(umax, std::abs(c));
  CHECK(umax == 0.0);
  CHECK(sol.report.converged);
}

TEST_CASE("identity tensors recover the incident wave under refinement") {
  const double k = 3.0;
  const MacroSolution coarse = solve_effective(small_config(4, k));
  const MacroSolution fine = solve_effective(small_config(8, k));

  const IncidentWave w;
  const double e_coarse = rel_curl_error_vs_incident(coarse, w);
  const double e_fine = rel_curl_error_vs_incident(fine, w);
  CHECK(e_coarse < 0.08);  // measured 4.75e-2
  CHECK(e_fine < 0.5 * e_coarse);

  // solving the resolved wave leaves the field planar in the sweep direction
  CHECK(plane_field_variance(fine, 0, 0.125) < 1e-4);
  CHECK(plane_field_variance(fine, 0, 0.875) < 1e-4);
  CHECK_THROWS_AS(plane_field_variance(fine, 0, 1.5), ConfigError);

  // Galerkin consistency: the interpolated incident wave nearly solves the
  // discrete system, with a residual that shrinks under refinement
  auto residual = [&](const MacroSolution& sol) {
    const MacroSystem sys = assemble_effective_system(
        small_config(sol.mesh->n_per_axis, k), sol.mesh);
    EdgeField ref = interpolate_edge(
        *sys.space, [&](const Vec3& x) { return w.field(k, x); });
    const CVector Au = spmv(sys.system, ref.coeffs);
    double r = 0.0, b = 0.0;
    for (std::size_t i = 0; i < Au.size(); ++i) {
      r += std::norm(Au[i] - sys.rhs[i]);
      b += std::norm(sys.rhs[i]);
    }
    return std::sqrt(r / b);
  };
  CHECK(residual(fine) < residual(coarse));
}

TEST_CASE("energy balance splits into absorption and radiation") {
  // dissipative scatterer: absorption strictly positive, defect at solver level
  ScatterConfig cfg = small_config(4, 12.0);
  cfg.tensors.eps_inv_hom = Mat3::Identity() * 0.69;
  cfg.tensors.mu_hom = Mat3c::Identity() * Complex(0.78, 0.002);
  cfg.tensors.k = cfg.k;

  const MacroSolution sol = solve_effective(cfg);
  CHECK(sol.balance.input > 0.0);
  CHECK(sol.balance.absorbed > 0.0);
  CHECK(sol.balance.radiated > 0.0);
  CHECK(sol.balance.defect <= 1e-10);
  CHECK(sol.report.residual <= 1e-10);

  // lossless coefficients put everything into radiation
  ScatterConfig lossless = small_config(4, 12.0);
  lossless.tensors.eps_inv_hom = Mat3::Identity() * 0.69;
  lossless.tensors.mu_hom = Mat3c::Identity() * 0.78;
  lossless.tensors.k = lossless.k;
  const MacroSolution free_sol = solve_effective(lossless);
  CHECK(std::abs(free_sol.balance.absorbed) <=
        1e-12 * std::max(1.0, free_sol.balance.input));
  CHECK(free_sol.balance.defect <= 1e-10);
}

TEST_CASE("vtk export writes a structurally valid legacy file") {
  ScatterConfig cfg = small_config(4, 6.0);
  const MacroSolution sol = solve_effective(cfg);
  const std::string path = temp_path("field.vtk");
  write_vtk_field(path, *sol.mesh, sol.u);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# vtk DataFile Version 3.0");
  std::getline(in, line);  // title
  std::getline(in, line);
  CHECK(line == "ASCII");
  std::getline(in, line);
  CHECK(line == "DATASET UNSTRUCTURED_GRID");

  const std::size_t nv = sol.mesh->vertices.size();
  const std::size_t nt = sol.mesh->tets.size();
  std::size_t points = 0, cells = 0, cell_types = 0, vectors = 0;
  std::size_t subdomain_ones = 0;
  bool in_subdomain = false;
  std::ostringstream header;
  header << "POINTS " << nv << " double";
  while (std::getline(in, line)) {
    if (line == header.str()) points += 1;
    if (line.rfind("CELLS ", 0) == 0) {
      std::istringstream ss(line);
      std::string word;
      std::size_t m = 0, total = 0;
      ss >> word >> m >> total;
      CHECK(m == nt);
      CHECK(total == 5 * nt);
      cells += 1;
    }
    if (line.rfind("CELL_TYPES ", 0) == 0) cell_types += 1;
    if (line.rfind("VECTORS ", 0) == 0) vectors += 1;
    if (line.rfind("SCALARS subdomain", 0) == 0) in_subdomain = true;
    if (in_subdomain && line == "1") subdomain_ones += 1;
  }
  CHECK(points == 1);
  CHECK(cells == 1);
  CHECK(cell_types == 1);
  CHECK(vectors == 2);
  CHECK(subdomain_ones == sol.mesh->n_inside_tets());
  std::remove(path.c_str());
}

TEST_CASE("plane slice csv contains exactly the nearest cell layer") {
  ScatterConfig cfg = small_config(4, 6.0);
  const MacroSolution sol = solve_effective(cfg);
  const std::string path = temp_path("slice.csv");
  write_plane_slice_csv(path, *sol.mesh, sol.u, 0, 0.55);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,y,z,Re_ux,Im_ux,Re_uy,Im_uy,Re_uz,Im_uz,subdomain");

  const int n = sol.mesh->n_per_axis;
  const double h = 1.0 / n;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    REQUIRE(!line.empty());
    std::istringstream ss(line);
    std::vector<double> cols;
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(std::stod(cell));
    REQUIRE(cols.size() == 10);
    // barycenters of the layer of cubes containing x=0.55: [0.5, 0.75)
    CHECK(cols[0] > 2 * h);
    CHECK(cols[0] < 3 * h);
    CHECK((cols[9] == 0.0 || cols[9] == 1.0));
    rows += 1;
  }
  // one layer of n^2 cubes, six tets each
  CHECK(rows == static_cast<std::size_t>(6 * n * n));
  std::remove(path.c_str());

  CHECK_THROWS_AS(write_plane_slice_csv(path, *sol.mesh, sol.u, 0, 2.0), ConfigError);
}
