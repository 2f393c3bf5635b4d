#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "maxhmm/hmm.hpp"

using namespace maxhmm;

namespace {

// smallest geometry where both boxes stay face-aligned: scatterer and
// inclusion occupy one octant and share faces with their outer boundaries
HmmConfig toy_config(double k) {
  HmmConfig c;
  c.scatter.scatterer = AxisBox{Vec3::Zero(), Vec3::Constant(0.5)};
  c.scatter.mesh_n = 2;
  c.scatter.k = k;
  c.scatter.allow_boundary_contact = true;
  c.micro_n = 2;
  c.inclusion = AxisBox{Vec3::Zero(), Vec3::Constant(0.5)};
  c.inclusion_boundary_contact = true;
  return c;
}

HmmConfig small_config(double k) {
  HmmConfig c;
  c.scatter.mesh_n = 4;
  c.scatter.k = k;
  c.micro_n = 4;
  return c;
}

double rel_diff(const CVector& a, const CVector& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("hmm config validation rejects unresolved or escaping inclusions") {
  HmmConfig c = small_config(5.0);
  CHECK_NOTHROW(c.validate());

  HmmConfig bad = c;
  bad.micro_n = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = c;
  bad.inclusion = AxisBox{Vec3::Constant(0.3), Vec3::Constant(0.7)};
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // 0.3 not on the n=4 grid

  bad = c;
  bad.inclusion = AxisBox{Vec3::Zero(), Vec3::Constant(0.5)};
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // touches the cell boundary
  bad.inclusion_boundary_contact = true;
  CHECK_NOTHROW(bad.validate());

  bad = c;
  bad.scatter.k = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // scatter validation propagates
}

TEST_CASE("decoupled pipeline feeds the cell tensors into the macro solve") {
  const HmmConfig cfg = small_config(5.0);
  const HmmSolution sol = hmm_solve(cfg);

  CHECK(sol.micro_mesh->n_per_axis == 4);
  CHECK(sol.tensors.k == doctest::Approx(5.0));
  CHECK(sol.cells.cell3.k == doctest::Approx(5.0));
  CHECK(sol.macro.k == doctest::Approx(5.0));
  CHECK(sol.macro.report.converged);

  // re-running the macro stage with the stored tensors reproduces the field
  ScatterConfig sc = cfg.scatter;
  sc.tensors = sol.tensors;
  const MacroSolution again = solve_effective(sc);
  CHECK(rel_diff(again.u.coeffs, sol.macro.u.coeffs) <= 1e-14);

  // the tensors match a direct cell-problem evaluation
  const EffectiveTensors direct = compute_mu_hom(sol.cells, 5.0);
  CHECK((direct.mu_hom - sol.tensors.mu_hom).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zeroth-order reconstruction matches its defining formula") {
  const HmmConfig cfg = small_config(5.0);
  const HmmSolution sol = hmm_solve(cfg);
  const double k2 = 25.0;

  // outside the scatterer the reconstruction is the macro field
  const Vec3 xo(0.1, 0.12, 0.13);
  const Vec3c uo = zeroth_order_field(sol, 0.05, xo);
  const Vec3c uHo = eval_edge_field(sol.macro.u, sol.macro.mesh->locate(xo), xo);
  CHECK((uo - uHo).norm() == 0.0);

  // inside it adds the potential gradient and the resonator response at the
  // wrapped unit cell coordinate
  for (const double delta : {0.05, 0.125}) {
    const Vec3 xi(0.52, 0.49, 0.51);
    const int mt = sol.macro.mesh->locate(xi);
    const Vec3c uH = eval_edge_field(sol.macro.u, mt, xi);
    Vec3 y;
    for (int a = 0; a < 3; ++a) {
      const double s = xi[a] / delta;
      y[a] = s - std::floor(s);
    }
    const int yt = sol.micro_mesh->locate(y);
    Vec3c expect = uH;
    for (int j = 0; j < 3; ++j) {
      expect += uH[j] * eval_nodal_gradient(sol.cells.cell2.p[j], yt);
      expect += k2 * uH[j] * eval_edge_field(sol.cells.cell3.w3[j], yt, y);
    }
    CHECK((zeroth_order_field(sol, delta, xi) - expect).norm() <= 1e-14);
    CHECK((zeroth_order_field(sol, delta, xi) - uH).norm() > 1e-3);  // correctors act
  }

  CHECK_THROWS_AS(zeroth_order_field(sol, 0.0, xo), ConfigError);
  CHECK_THROWS_AS(zeroth_order_field(sol, 0.05, Vec3(2.0, 2.0, 2.0)), ConfigError);
}

TEST_CASE("nested transfer reproduces representable fields exactly") {
  const AxisBox box{Vec3::Zero(), Vec3::Ones()};
  const StructuredTetMesh cmesh = build_box_mesh(box, 2);
  const StructuredTetMesh fmesh = build_box_mesh(box, 6);
  const EdgeSpace cs(cmesh, EdgeFlavor::Unconstrained);
  const EdgeSpace fs(fmesh, EdgeFlavor::Unconstrained);

  // a + b x x spans the lowest-order edge space on every mesh
  const auto fn = [](const Vec3& x) -> Vec3c {
    const Vec3 a(0.3, -1.1, 0.7), b(0.9, 0.4, -0.2);
    return Complex(1.0, 0.5) * (a.cast<Complex>() + b.cross(x).cast<Complex>());
  };
  const EdgeField uc = interpolate_edge(cs, fn);
  const EdgeField uf = interpolate_edge(fs, fn);
  const EdgeField tr = transfer_edge_field(fs, uc);
  double err = 0.0;
  for (int i = 0; i < fs.n_dofs; ++i)
    err = std::max(err, std::abs(tr.coeffs[i] - uf.coeffs[i]));
  CHECK(err <= 1e-13);

  // transfer onto the same mesh recomputes the coefficients
  const EdgeField same = transfer_edge_field(cs, uc);
  double derr = 0.0;
  for (int i = 0; i < cs.n_dofs; ++i)
    derr = std::max(derr, std::abs(same.coeffs[i] - uc.coeffs[i]));
  CHECK(derr <= 1e-13);

  // exact re-expansion preserves the norms of any coarse function
  const EdgeField rough = interpolate_edge(cs, [](const Vec3& x) -> Vec3c {
    return Vec3c(Complex(std::sin(3.0 * x[1]), 0.2), Complex(std::cos(2.0 * x[2]), 0.0),
                 Complex(x[0] * x[0], -0.1));
  });
  const EdgeField rtr = transfer_edge_field(fs, rough);
  const Norms nc = weighted_norms(rough, 1.0);
  const Norms nf = weighted_norms(rtr, 1.0);
  CHECK(nf.l2 == doctest::Approx(nc.l2).epsilon(1e-12));
  CHECK(nf.curl_semi == doctest::Approx(nc.curl_semi).epsilon(1e-12));

  // non-nested or mismatched meshes are rejected
  const StructuredTetMesh f5 = build_box_mesh(box, 5);
  const EdgeSpace fs5(f5, EdgeFlavor::Unconstrained);
  CHECK_THROWS_AS(transfer_edge_field(fs5, uc), ConfigError);

  const StructuredTetMesh shifted = build_box_mesh(AxisBox{Vec3::Zero(), Vec3::Constant(2.0)}, 4);
  const EdgeSpace sspace(shifted, EdgeFlavor::Unconstrained);
  CHECK_THROWS_AS(transfer_edge_field(sspace, uc), ConfigError);
}

TEST_CASE("helmholtz theta recovers a manufactured potential") {
  const AxisBox box{Vec3::Zero(), Vec3::Ones()};
  const auto pot = [](const Vec3& x) {
    return x[0] * (1 - x[0]) * x[1] * (1 - x[1]) * x[2] * (1 - x[2]);
  };
  const auto gradpot = [](const Vec3& x) -> Vec3c {
    const double u = x[0] * (1 - x[0]), v = x[1] * (1 - x[1]), w = x[2] * (1 - x[2]);
    return Vec3c(Complex((1 - 2 * x[0]) * v * w), Complex(u * (1 - 2 * x[1]) * w),
                 Complex(u * v * (1 - 2 * x[2])));
  };

  const StructuredTetMesh mesh = build_box_mesh(box, 8);
  const EdgeSpace S(mesh, EdgeFlavor::Unconstrained);
  const ThetaField th = helmholtz_theta(interpolate_edge(S, gradpot));
  CHECK(th.l2 == doctest::Approx(5.853970e-3).epsilon(1e-5));

  double err2 = 0.0;
  const auto w = nodal_lumped_mass(*th.space);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const int d = th.space->vertex_dof[v];
    if (d >= 0) err2 += w[d] * std::norm(th.theta.coeffs[d] - pot(mesh.vertices[v]));
  }
  CHECK(std::sqrt(err2) <= 5e-7);

  // refined: the theta norm approaches the exact potential norm 30^{-3/2}
  const StructuredTetMesh fine = build_box_mesh(box, 16);
  const EdgeSpace Sf(fine, EdgeFlavor::Unconstrained);
  const ThetaField thf = helmholtz_theta(interpolate_edge(Sf, gradpot));
  const double exact = std::pow(30.0, -1.5);
  CHECK(std::abs(thf.l2 - exact) <= 0.02 * exact);

  // a rotational field has no curl-free component
  const ThetaField rot = helmholtz_theta(interpolate_edge(S, [](const Vec3& x) -> Vec3c {
    return Vec3(0.5, -0.3, 0.8).cross(x).cast<Complex>();
  }));
  CHECK(rot.l2 <= 1e-14);
}

TEST_CASE("observed convergence orders and their edge cases") {
  const double H1 = std::sqrt(3.0) / 4.0, H2 = std::sqrt(3.0) / 8.0;
  const auto r1 = eoc({{H1, 0.945214}, {H2, 0.5316}});
  REQUIRE(r1.size() == 2);
  CHECK(std::isnan(r1[0]));
  CHECK(r1[1] == doctest::Approx(0.8303).epsilon(1e-4));

  const auto r2 = eoc({{H1, 11.6003}, {H2, 5.76452}});
  CHECK(r2[1] == doctest::Approx(1.0089).epsilon(1e-4));

  CHECK(eoc({{H1, 0.5}, {H2, 0.5}})[1] == doctest::Approx(0.0));
  CHECK(std::isnan(eoc({{H1, 0.5}, {H2, 0.0}})[1]));
  CHECK(std::isnan(eoc({{H1, 0.5}, {H1, 0.25}})[1]));  // equal mesh sizes
  CHECK(eoc({}).empty());
  const auto single = eoc({{H1, 0.5}});
  REQUIRE(single.size() == 1);
  CHECK(std::isnan(single[0]));
}

TEST_CASE("error norms vanish on identical solutions and decay under refinement") {
  ScatterConfig sc;  // identity tensors: the exact solution is the incident wave
  sc.scatterer = AxisBox{Vec3::Zero(), Vec3::Constant(0.5)};  // aligned at n=2
  sc.allow_boundary_contact = true;
  sc.k = 3.0;
  sc.mesh_n = 8;
  const MacroSolution ref = solve_effective(sc);

  const ErrorNorms self = error_norms(ref, ref);
  CHECK(self.l2 <= 1e-12);
  CHECK(self.curl <= 1e-12);
  CHECK(self.theta_l2 <= 1e-12);

  sc.mesh_n = 2;
  const MacroSolution c2 = solve_effective(sc);
  sc.mesh_n = 4;
  const MacroSolution c4 = solve_effective(sc);
  const ErrorNorms e2 = error_norms(c2, ref);
  const ErrorNorms e4 = error_norms(c4, ref);
  CHECK(e4.l2 < e2.l2);
  CHECK(e4.curl < e2.curl);
  CHECK(e2.l2 > 0.0);

  MacroSolution wrong_k = c2;
  wrong_k.k = 4.0;
  CHECK_THROWS_AS(error_norms(wrong_k, ref), ConfigError);
}

TEST_CASE("study config validation") {
  StudyConfig cfg;
  cfg.base = small_config(5.0);
  cfg.ns = {4};
  cfg.ref_macro_n = 8;
  cfg.ref_micro_n = 4;
  CHECK_NOTHROW(cfg.validate());

  StudyConfig bad = cfg;
  bad.ns = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ns = {4, 4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ns = {3};  // 8 % 3 != 0
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ns = {8};  // not a proper refinement of the reference
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("convergence study ladder, caching, and csv round trip") {
  StudyConfig cfg;
  cfg.base = toy_config(5.0);
  cfg.ns = {2, 4};
  cfg.ref_macro_n = 8;
  cfg.ref_micro_n = 4;
  cfg.cache_dir = temp_dir("maxhmm_test_cache");

  const StudyReport rep = convergence_study(cfg, nullptr);
  REQUIRE(rep.rows.size() == 2);
  CHECK(!rep.ref_from_cache);
  CHECK(rep.rows[0].H == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
  CHECK(rep.rows[1].h == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-12));

  // frozen regression anchors for the toy ladder
  CHECK(rep.rows[0].l2_err == doctest::Approx(0.643043473).epsilon(1e-7));
  CHECK(rep.rows[0].curl_err == doctest::Approx(3.18402011).epsilon(1e-7));
  CHECK(rep.rows[0].theta_l2 == doctest::Approx(0.0327832613).epsilon(1e-7));
  CHECK(rep.rows[1].l2_err == doctest::Approx(0.309995904).epsilon(1e-7));
  CHECK(std::isnan(rep.rows[0].eoc_l2));
  CHECK(rep.rows[1].eoc_l2 == doctest::Approx(1.0527).epsilon(1e-3));
  CHECK(rep.rows[1].eoc_curl == doctest::Approx(1.2054).epsilon(1e-3));
  CHECK(rep.rows[1].eoc_theta == doctest::Approx(1.6538).epsilon(1e-3));

  // second run hits the cache and reproduces the rows byte for byte
  const StudyReport rep2 = convergence_study(cfg, nullptr);
  CHECK(rep2.ref_from_cache);
  const auto csv_a = cfg.cache_dir / "a.csv";
  const auto csv_b = cfg.cache_dir / "b.csv";
  write_study_csv(csv_a, rep);
  write_study_csv(csv_b, rep2);
  const std::string text = read_file(csv_a);
  CHECK(text == read_file(csv_b));

  // csv format: exact header, nan markers on the first row, parseable floats
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  CHECK(line == "H,h,k,l2_err,curl_err,theta_l2,eoc_l2,eoc_curl,eoc_theta");
  std::getline(is, line);
  CHECK(line.find("nan") != std::string::npos);
  std::getline(is, line);
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream row(line);
  double H, h, k, l2;
  row >> H >> h >> k >> l2;
  CHECK(H == doctest::Approx(rep.rows[1].H).epsilon(1e-8));
  CHECK(k == doctest::Approx(5.0));
  CHECK(l2 == doctest::Approx(rep.rows[1].l2_err).epsilon(1e-8));

  // the table formats one line per row plus a header
  const std::string table = format_study_table(rep);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
  CHECK(table.find("l2_err") != std::string::npos);

  // a corrupted cache entry is ignored and rebuilt
  for (const auto& entry : std::filesystem::directory_iterator(cfg.cache_dir))
    if (entry.path().extension() == ".txt") {
      std::ofstream f(entry.path());
      f << "garbage\n";
    }
  const StudyReport rep3 = convergence_study(cfg, nullptr);
  CHECK(!rep3.ref_from_cache);
  CHECK(rep3.rows[1].l2_err == doctest::Approx(rep.rows[1].l2_err).epsilon(1e-12));
  const StudyReport rep4 = convergence_study(cfg, nullptr);
  CHECK(rep4.ref_from_cache);

  std::filesystem::remove_all(cfg.cache_dir);
}

TEST_CASE("single-row study reports errors without convergence orders") {
  StudyConfig cfg;
  cfg.base = small_config(5.0);
  cfg.ns = {4};
  cfg.ref_macro_n = 8;
  cfg.ref_micro_n = 4;

  const StudyReport rep = convergence_study(cfg, nullptr);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].l2_err == doctest::Approx(0.315017416).epsilon(1e-7));
  CHECK(rep.rows[0].curl_err == doctest::Approx(1.39186773).epsilon(1e-7));
  CHECK(rep.rows[0].theta_l2 == doctest::Approx(0.0107596493).epsilon(1e-7));
  CHECK(std::isnan(rep.rows[0].eoc_l2));
  CHECK(std::isnan(rep.rows[0].eoc_theta));
}

TEST_CASE("monolithic two-scale assembly agrees with the decoupled realization") {
  const HmmConfig toy = toy_config(6.0);
  const HmmSolution dec = hmm_solve(toy);
  const CVector mono = monolithic_twoscale_macro(toy);
  REQUIRE(mono.size() == dec.macro.u.coeffs.size());
  CHECK(rel_diff(mono, dec.macro.u.coeffs) <= 1e-10);

  // different wavenumber, oblique incident wave, complex amplitude
  HmmConfig toy2 = toy_config(3.5);
  toy2.scatter.incident.direction = Vec3(0.0, 1.0, 0.0);
  toy2.scatter.incident.polarization = Vec3(0.0, 0.0, 1.0);
  toy2.scatter.incident.amplitude = Complex(0.7, -0.4);
  const HmmSolution dec2 = hmm_solve(toy2);
  const CVector mono2 = monolithic_twoscale_macro(toy2);
  CHECK(rel_diff(mono2, dec2.macro.u.coeffs) <= 1e-10);

  // the dense oracle refuses production-sized systems
  CHECK_THROWS_AS(monolithic_twoscale_macro(small_config(5.0)), ConfigError);
}
