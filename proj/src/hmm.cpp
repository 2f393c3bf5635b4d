#include "maxhmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "maxhmm/quadrature.hpp"

namespace maxhmm {

namespace {

// unconjugated bilinear dot product against a real direction
Complex sym_dot3(const Vec3c& x, const Vec3& y) {
  return x(0) * y(0) + x(1) * y(1) + x(2) * y(2);
}

std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Eigen::MatrixXcd to_dense(const SparseMatrix& A) {
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) D(i, A.col[p]) += A.val[p];
  return D;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void HmmConfig::validate() const {
  scatter.validate();
  if (micro_n < 2) throw ConfigError("hmm config: micro mesh needs at least 2 cells per axis");
  inclusion.validate();
  for (int a = 0; a < 3; ++a) {
    const bool ok = inclusion_boundary_contact
                        ? 0.0 <= inclusion.lo[a] && inclusion.hi[a] <= 1.0
                        : 0.0 < inclusion.lo[a] && inclusion.hi[a] < 1.0;
    if (!ok) throw ConfigError("hmm config: inclusion must lie inside the unit cell");
  }
  const double h = 1.0 / micro_n;
  for (int a = 0; a < 3; ++a)
    for (double c : {inclusion.lo[a], inclusion.hi[a]}) {
      const double r = c / h;
      if (std::abs(r - std::round(r)) > 1e-9)
        throw ConfigError("hmm config: micro mesh does not resolve the inclusion faces");
    }
}

HmmSolution hmm_solve(const HmmConfig& cfg) {
  cfg.validate();
  HmmSolution sol;
  sol.config = cfg;

  auto built =
      build_periodic_cell_mesh(cfg.micro_n, cfg.inclusion, cfg.inclusion_boundary_contact);
  sol.micro_mesh = std::make_shared<const StructuredTetMesh>(std::move(built.first));
  sol.micro_ident = std::make_shared<const PeriodicIdentification>(std::move(built.second));

  sol.cells.cell1 = solve_cell1(*sol.micro_mesh, *sol.micro_ident, cfg.coeffs);
  sol.cells.cell2 = solve_cell2(*sol.micro_mesh, *sol.micro_ident);
  sol.cells.cell3 = solve_cell3(*sol.micro_mesh, cfg.coeffs, cfg.scatter.k);
  sol.tensors = compute_mu_hom(sol.cells, cfg.scatter.k);

  ScatterConfig sc = cfg.scatter;
  sc.tensors = sol.tensors;
  sol.macro = solve_effective(sc);
  return sol;
}

Vec3c zeroth_order_field(const HmmSolution& sol, double delta, const Vec3& x) {
  if (!(delta > 0.0)) throw ConfigError("reconstruction: cell period must be positive");
  const int mt = sol.macro.mesh->locate(x);
  if (mt < 0) throw ConfigError("reconstruction: point lies outside the domain");
  const Vec3c uH = eval_edge_field(sol.macro.u, mt, x);
  if (sol.macro.mesh->subdomain_tag[mt] != SubdomainTag::Inside) return uH;

  Vec3 y;
  for (int a = 0; a < 3; ++a) {
    const double s = x[a] / delta;
    y[a] = s - std::floor(s);
  }
  const int yt = sol.micro_mesh->locate(y);
  if (yt < 0) throw SolverError("reconstruction: unit cell point location failed");

  const double k2 = sol.macro.k * sol.macro.k;
  Vec3c out = uH;
  for (int j = 0; j < 3; ++j) {
    out += uH[j] * eval_nodal_gradient(sol.cells.cell2.p[j], yt);
    out += k2 * uH[j] * eval_edge_field(sol.cells.cell3.w3[j], yt, y);
  }
  return out;
}

EdgeField transfer_edge_field(const EdgeSpace& fine, const EdgeField& coarse) {
  const auto& fm = *fine.mesh;
  const auto& cm = *coarse.space->mesh;
  for (int a = 0; a < 3; ++a)
    if (std::abs(fm.box.lo[a] - cm.box.lo[a]) > 1e-12 ||
        std::abs(fm.box.hi[a] - cm.box.hi[a]) > 1e-12)
      throw ConfigError("field transfer: meshes must cover the same box");
  if (cm.n_per_axis <= 0 || fm.n_per_axis % cm.n_per_axis != 0)
    throw ConfigError("field transfer: fine grid must be a multiple of the coarse grid");

  Vec3 Hc;
  for (int a = 0; a < 3; ++a) Hc[a] = (cm.box.hi[a] - cm.box.lo[a]) / cm.n_per_axis;
  const auto& gauss = segment_gauss2();

  EdgeField out;
  out.space = &fine;
  out.coeffs.assign(fine.n_dofs, Complex(0.0));

  std::vector<double> ts;
  for (std::size_t e = 0; e < fm.edges.size(); ++e) {
    const int d = fine.edge_dof[e];
    if (d < 0) continue;
    const Vec3 p0 = fm.vertices[fm.edges[e][0]];
    const Vec3 p1 = fm.vertices[fm.edges[e][1]];
    const Vec3 dir = p1 - p0;

    // split where the edge passes a coarse grid plane
    ts.clear();
    ts.push_back(0.0);
    ts.push_back(1.0);
    for (int a = 0; a < 3; ++a) {
      if (std::abs(dir[a]) < 1e-14) continue;
      for (int m = 1; m < cm.n_per_axis; ++m) {
        const double t = (cm.box.lo[a] + m * Hc[a] - p0[a]) / dir[a];
        if (t > 1e-12 && t < 1.0 - 1e-12) ts.push_back(t);
      }
    }
    std::sort(ts.begin(), ts.end());

    // then where it passes a diagonal face inside a coarse cube
    const std::size_t n_outer = ts.size();
    for (std::size_t s = 0; s + 1 < n_outer; ++s) {
      const double t0 = ts[s], t1 = ts[s + 1];
      if (t1 - t0 < 1e-13) continue;
      const Vec3 xm = p0 + 0.5 * (t0 + t1) * dir;
      Vec3 corner;
      for (int a = 0; a < 3; ++a) {
        int idx = static_cast<int>(std::floor((xm[a] - cm.box.lo[a]) / Hc[a]));
        idx = std::clamp(idx, 0, cm.n_per_axis - 1);
        corner[a] = cm.box.lo[a] + idx * Hc[a];
      }
      for (const auto& [a, b] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
        const double num = (p0[a] - corner[a]) / Hc[a] - (p0[b] - corner[b]) / Hc[b];
        const double den = dir[a] / Hc[a] - dir[b] / Hc[b];
        if (std::abs(den) < 1e-14) continue;
        const double tc = -num / den;
        if (tc > t0 + 1e-12 && tc < t1 - 1e-12) ts.push_back(tc);
      }
    }
    std::sort(ts.begin(), ts.end());

    Complex val = 0.0;
    for (std::size_t s = 0; s + 1 < ts.size(); ++s) {
      const double t0 = ts[s], t1 = ts[s + 1];
      if (t1 - t0 < 1e-13) continue;
      for (const auto& [g, w] : gauss) {
        const double tg = t0 + g * (t1 - t0);
        const Vec3 xg = p0 + tg * dir;
        const int ct = cm.locate(xg);
        if (ct < 0) throw SolverError("field transfer: point location failed");
        val += w * (t1 - t0) * sym_dot3(eval_edge_field(coarse, ct, xg), dir);
      }
    }
    out.coeffs[d] = val;
  }
  return out;
}

ThetaField helmholtz_theta(const EdgeField& e) {
  const auto& m = *e.space->mesh;
  auto S = std::make_shared<const NodalSpace>(m, NodalFlavor::ZeroBoundary, Region::All);

  ThetaField out;
  out.space = S;
  out.theta.space = S.get();
  out.theta.coeffs.assign(S->n_dofs, Complex(0.0));
  if (S->n_dofs == 0) return out;

  const SparseMatrix A = assemble_p1_stiffness(*S, CoeffField::uniform(Complex(1.0)));
  const CVector rhs = volume_load_p1_grad(
      *S,
      [&](const Vec3& x) -> Vec3c {
        const int t = m.locate(x);
        return t < 0 ? Vec3c(Vec3c::Zero()) : eval_edge_field(e, t, x);
      },
      tet_rule_degree2());

  std::vector<Vec3> pts(S->n_dofs);
  for (std::size_t v = 0; v < m.vertices.size(); ++v) {
    const int d = S->vertex_dof[v];
    if (d >= 0) pts[d] = m.vertices[v];
  }
  Vec3 h;
  for (int a = 0; a < 3; ++a) h[a] = (m.box.hi[a] - m.box.lo[a]) / m.n_per_axis;
  const std::vector<int> perm = nested_dissection_order(pts, h);
  const SymmetricDirectSolver solver(A, &perm);
  out.theta.coeffs = solver.solve(rhs);

  const SparseMatrix Mm = assemble_p1_mass(*S);
  const CVector Mth = spmv(Mm, out.theta.coeffs);
  double nrm2 = 0.0;
  for (int i = 0; i < S->n_dofs; ++i)
    nrm2 += (std::conj(out.theta.coeffs[i]) * Mth[i]).real();
  out.l2 = std::sqrt(std::max(0.0, nrm2));
  return out;
}

ErrorNorms error_norms(const MacroSolution& coarse, const MacroSolution& ref) {
  if (std::abs(coarse.k - ref.k) > 1e-12)
    throw ConfigError("error norms: solutions were computed at different wavenumbers");
  EdgeField diff = transfer_edge_field(*ref.space, coarse.u);
  for (int i = 0; i < ref.space->n_dofs; ++i) diff.coeffs[i] -= ref.u.coeffs[i];
  const Norms n = weighted_norms(diff, ref.k);
  const ThetaField th = helmholtz_theta(diff);
  return {n.l2, n.curl_semi, th.l2};
}

std::vector<double> eoc(const std::vector<std::pair<double, double>>& rows) {
  std::vector<double> out(rows.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto [H0, e0] = rows[i - 1];
    const auto [H1, e1] = rows[i];
    if (!(e0 > 0.0) || !(e1 > 0.0) || !(H0 > 0.0) || !(H1 > 0.0)) continue;
    const double lh = std::log(H0 / H1);
    if (std::abs(lh) < 1e-14) continue;
    out[i] = std::log(e0 / e1) / lh;
  }
  return out;
}

void StudyConfig::validate() const {
  if (ns.empty()) throw ConfigError("study: resolution ladder must not be empty");
  if (ref_macro_n < 2 || ref_micro_n < 2)
    throw ConfigError("study: reference grids need at least 2 cells per axis");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 2) throw ConfigError("study: ladder resolutions must be at least 2");
    if (i > 0 && ns[i] <= ns[i - 1])
      throw ConfigError("study: ladder resolutions must be increasing");
    if (ns[i] >= ref_macro_n || ref_macro_n % ns[i] != 0)
      throw ConfigError("study: reference grid must be a proper multiple of every ladder grid");
  }
}

namespace {

// everything the reference solve depends on, in fixed full precision
std::string reference_cache_key(const StudyConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  const auto box = [&os](const AxisBox& b) {
    for (int a = 0; a < 3; ++a) os << b.lo[a] << ' ';
    for (int a = 0; a < 3; ++a) os << b.hi[a] << ' ';
  };
  const ScatterConfig& sc = cfg.base.scatter;
  os << "ref " << cfg.ref_macro_n << ' ' << cfg.ref_micro_n << ' ';
  box(sc.domain);
  box(sc.scatterer);
  box(cfg.base.inclusion);
  os << sc.k << ' ';
  for (int a = 0; a < 3; ++a) os << sc.incident.direction[a] << ' ';
  for (int a = 0; a < 3; ++a) os << sc.incident.polarization[a] << ' ';
  os << sc.incident.amplitude.real() << ' ' << sc.incident.amplitude.imag() << ' ';
  os << cfg.base.coeffs.eps1_inv.real() << ' ' << cfg.base.coeffs.eps1_inv.imag() << ' ';
  for (double v : cfg.base.coeffs.eps0_inv) os << v << ' ';
  return os.str();
}

bool try_load_reference(const std::filesystem::path& path, const std::string& key,
                        const HmmConfig& refc, MacroSolution& out) {
  std::ifstream f(path);
  if (!f) return false;
  std::string line;
  if (!std::getline(f, line) || line != "maxhmm reference v1") return false;
  if (!std::getline(f, line) || line != key) return false;
  std::size_t n_dofs = 0;
  f >> n_dofs;
  if (!f) return false;

  auto mesh = std::make_shared<const StructuredTetMesh>(
      build_box_mesh(refc.scatter.domain, refc.scatter.mesh_n, refc.scatter.scatterer));
  auto space = std::make_shared<const EdgeSpace>(*mesh, EdgeFlavor::Unconstrained);
  if (n_dofs != static_cast<std::size_t>(space->n_dofs)) return false;

  CVector coeffs(n_dofs);
  for (std::size_t i = 0; i < n_dofs; ++i) {
    double re = 0.0, im = 0.0;
    f >> re >> im;
    if (!f) return false;
    coeffs[i] = Complex(re, im);
  }
  out.mesh = mesh;
  out.space = space;
  out.u.space = space.get();
  out.u.coeffs = std::move(coeffs);
  out.k = refc.scatter.k;
  return true;
}

void save_reference(const std::filesystem::path& path, const std::string& key,
                    const MacroSolution& ref) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw ConfigError("study cache: cannot write " + tmp.string());
    f << "maxhmm reference v1\n" << key << '\n' << ref.u.coeffs.size() << '\n';
    f.precision(17);
    for (const Complex& c : ref.u.coeffs) f << c.real() << ' ' << c.imag() << '\n';
    if (!f) throw ConfigError("study cache: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

StudyReport convergence_study(const StudyConfig& cfg, std::ostream* log) {
  cfg.validate();

  HmmConfig refc = cfg.base;
  refc.scatter.mesh_n = cfg.ref_macro_n;
  refc.micro_n = cfg.ref_micro_n;

  const std::string key = reference_cache_key(cfg);
  std::filesystem::path cpath;
  if (!cfg.cache_dir.empty()) {
    char name[32];
    std::snprintf(name, sizeof name, "ref_%016llx.txt",
                  static_cast<unsigned long long>(fnv1a(key)));
    cpath = cfg.cache_dir / name;
  }

  MacroSolution ref;
  bool from_cache = !cpath.empty() && try_load_reference(cpath, key, refc, ref);
  if (!from_cache) {
    if (log)
      *log << "reference solve: macro n=" << cfg.ref_macro_n << ", micro n=" << cfg.ref_micro_n
           << std::endl;
    ref = hmm_solve(refc).macro;
    if (!cpath.empty()) save_reference(cpath, key, ref);
  } else if (log) {
    *log << "reference loaded from cache: " << cpath.string() << std::endl;
  }

  StudyReport rep;
  rep.ref_H = ref.mesh->h_max();
  rep.ref_h = std::sqrt(3.0) / cfg.ref_micro_n;
  rep.ref_from_cache = from_cache;

  std::vector<std::pair<double, double>> l2r, cur, thr;
  for (int n : cfg.ns) {
    if (log) *log << "ladder solve: macro n=" << n << ", micro n=" << n << std::endl;
    HmmConfig c = cfg.base;
    c.scatter.mesh_n = n;
    c.micro_n = n;
    const HmmSolution sol = hmm_solve(c);
    const ErrorNorms err = error_norms(sol.macro, ref);

    StudyRow row;
    row.H = sol.macro.mesh->h_max();
    row.h = sol.micro_mesh->h_max();
    row.k = cfg.base.scatter.k;
    row.l2_err = err.l2;
    row.curl_err = err.curl;
    row.theta_l2 = err.theta_l2;
    rep.rows.push_back(row);
    l2r.push_back({row.H, row.l2_err});
    cur.push_back({row.H, row.curl_err});
    thr.push_back({row.H, row.theta_l2});
  }

  const auto e1 = eoc(l2r), e2 = eoc(cur), e3 = eoc(thr);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    rep.rows[i].eoc_l2 = e1[i];
    rep.rows[i].eoc_curl = e2[i];
    rep.rows[i].eoc_theta = e3[i];
  }
  return rep;
}

void write_study_csv(const std::filesystem::path& path, const StudyReport& report) {
  std::ofstream f(path);
  if (!f) throw ConfigError("study csv: cannot open " + path.string());
  f << "H,h,k,l2_err,curl_err,theta_l2,eoc_l2,eoc_curl,eoc_theta\n";
  for (const StudyRow& r : report.rows)
    f << fmt_g9(r.H) << ',' << fmt_g9(r.h) << ',' << fmt_g9(r.k) << ',' << fmt_g9(r.l2_err)
      << ',' << fmt_g9(r.curl_err) << ',' << fmt_g9(r.theta_l2) << ',' << fmt_g9(r.eoc_l2)
      << ',' << fmt_g9(r.eoc_curl) << ',' << fmt_g9(r.eoc_theta) << '\n';
  if (!f) throw ConfigError("study csv: write failed for " + path.string());
}

std::string format_study_table(const StudyReport& report) {
  const auto eoc_str = [](double v) {
    if (std::isnan(v)) return std::string("     -");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.2f", v);
    return std::string(buf);
  };
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%9s %9s  %11s %6s  %11s %6s  %11s %6s\n", "H", "h",
                "l2_err", "eoc", "curl_err", "eoc", "theta_l2", "eoc");
  out += line;
  for (const StudyRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%9.4g %9.4g  %11.4e %s  %11.4e %s  %11.4e %s\n", r.H,
                  r.h, r.l2_err, eoc_str(r.eoc_l2).c_str(), r.curl_err,
                  eoc_str(r.eoc_curl).c_str(), r.theta_l2, eoc_str(r.eoc_theta).c_str());
    out += line;
  }
  return out;
}

CVector monolithic_twoscale_macro(const HmmConfig& cfg) {
  cfg.validate();
  const ScatterConfig& sc = cfg.scatter;
  const double k = sc.k;

  const StructuredTetMesh macro_mesh = build_box_mesh(sc.domain, sc.mesh_n, sc.scatterer);

  const auto built =
      build_periodic_cell_mesh(cfg.micro_n, cfg.inclusion, cfg.inclusion_boundary_contact);
  const StructuredTetMesh& ym = built.first;
  const PeriodicIdentification& ident = built.second;
  cfg.coeffs.validate(ym.tets.size());

  const EdgeSpace A1(ym, EdgeFlavor::PeriodicQuotient, Region::Outside, &ident);
  const NodalSpace W2(ym, NodalFlavor::PeriodicZeroMean, Region::Outside, &ident);
  const EdgeSpace V3(ym, EdgeFlavor::ZeroTangentialTrace, Region::Inside);
  const int n1 = A1.n_dofs, n2 = W2.n_dofs, n3 = V3.n_dofs;

  const EdgeSpace VH(macro_mesh, EdgeFlavor::Unconstrained);
  std::vector<int> inside;
  for (std::size_t t = 0; t < macro_mesh.tets.size(); ++t)
    if (macro_mesh.subdomain_tag[t] == SubdomainTag::Inside) inside.push_back(static_cast<int>(t));
  const int nH = VH.n_dofs;
  const int nt = static_cast<int>(inside.size());
  const auto& rule = tet_rule_degree2();
  const int nq = static_cast<int>(rule.points.size());
  const std::size_t N = static_cast<std::size_t>(nH) + static_cast<std::size_t>(nt) * n1 +
                        static_cast<std::size_t>(nt) * nq * (n2 + n3);
  if (N > 5000)
    throw ConfigError("two-scale oracle: dense coupled system would be too large; "
                      "this path exists for toy meshes only");

  std::vector<Complex> eps0(ym.tets.size());
  for (std::size_t t = 0; t < ym.tets.size(); ++t) eps0[t] = cfg.coeffs.eps0_at(t);
  const CoeffField eps0f = CoeffField::per_tet_scalar(eps0);
  const CoeffField unit = CoeffField::uniform(Complex(1.0));

  const Eigen::MatrixXcd K1 = to_dense(assemble_curlcurl(A1, eps0f));
  const Eigen::MatrixXcd S2 = to_dense(assemble_p1_stiffness(W2, unit));
  const Eigen::MatrixXcd K3 = to_dense(assemble_curlcurl(V3, CoeffField::uniform(cfg.coeffs.eps1_inv)));
  const Eigen::MatrixXcd M3 = to_dense(assemble_mass(V3, unit));

  std::array<CVector, 3> C1, G2, F3;
  for (int j = 0; j < 3; ++j) {
    C1[j] = curl_moment(A1, eps0f, Vec3::Unit(j));
    G2[j] = grad_moment(W2, unit, Vec3::Unit(j));
    F3[j] = field_moment(V3, Vec3::Unit(j));
  }

  // plain matrix-part average of the electric coefficient; the corrector
  // unknowns supply the reduction to the homogenized tensor
  Complex c0 = 0.0;
  for (std::size_t t = 0; t < ym.tets.size(); ++t)
    if (ym.subdomain_tag[t] == SubdomainTag::Outside) c0 += ym.tet_volume[t] * eps0[t];

  std::vector<Mat3c> ceps(macro_mesh.tets.size());
  for (std::size_t t = 0; t < macro_mesh.tets.size(); ++t) {
    const bool in = macro_mesh.subdomain_tag[t] == SubdomainTag::Inside;
    ceps[t] = (in ? c0 : Complex(1.0)) * Mat3c::Identity();
  }
  const SparseMatrix KG = assemble_curlcurl(VH, CoeffField::per_tet(std::move(ceps)));
  const SparseMatrix MG = assemble_mass(VH, unit);
  const SparseMatrix BG = assemble_boundary_tangential_mass(VH);
  const SparseMatrix SG = matrix_sum(Complex(1.0), linear_combination(1.0, KG, -k * k, MG),
                                     Complex(0.0, -k), BG);
  const IncidentWave wave = sc.incident;
  const CVector rhsH = boundary_load(VH, [&wave, k](const Vec3& x, const Vec3& n) {
    return impedance_trace_g(wave, k, x, n);
  });

  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(N, N);
  for (int i = 0; i < SG.rows; ++i)
    for (int p = SG.row_ptr[i]; p < SG.row_ptr[i + 1]; ++p) M(i, SG.col[p]) += SG.val[p];

  const int o1 = nH;
  const int o2 = nH + nt * n1;
  const int o3 = o2 + nt * nq * n2;

  for (int ti = 0; ti < nt; ++ti) {
    const int t = inside[ti];
    const double vol = macro_mesh.tet_volume[t];
    std::array<std::pair<int, double>, 6> ed;
    for (int le = 0; le < 6; ++le) ed[le] = VH.dof(t, le);

    // one-point rule for the curl terms: the macro curl is constant per tet
    const int b1 = o1 + ti * n1;
    M.block(b1, b1, n1, n1) += vol * K1;
    for (int le = 0; le < 6; ++le) {
      const auto [dH, s] = ed[le];
      const Vec3 cH = edge_basis_curl(macro_mesh, t, le, s);
      for (int a = 0; a < n1; ++a) {
        Complex v = 0.0;
        for (int j = 0; j < 3; ++j) v += cH[j] * C1[j][a];
        v *= vol;
        M(dH, b1 + a) += v;
        M(b1 + a, dH) += v;
      }
    }

    // second-order rule for the identity terms: one corrector per point
    for (int l = 0; l < nq; ++l) {
      const auto& qp = rule.points[l];
      Vec3 xl = Vec3::Zero();
      for (int v = 0; v < 4; ++v) xl += qp.bary[v] * macro_mesh.vertices[macro_mesh.tets[t][v]];
      const double wl = qp.weight * 6.0 * vol;
      const int b2 = o2 + (ti * nq + l) * n2;
      const int b3 = o3 + (ti * nq + l) * n3;
      M.block(b2, b2, n2, n2) += (-k * k * wl) * S2;
      M.block(b3, b3, n3, n3) += wl * (K3 - k * k * M3);
      for (int le = 0; le < 6; ++le) {
        const auto [dH, s] = ed[le];
        const Vec3 phi = edge_basis_value(macro_mesh, t, le, s, xl);
        for (int i = 0; i < n2; ++i) {
          Complex v = 0.0;
          for (int j = 0; j < 3; ++j) v += phi[j] * G2[j][i];
          v *= -k * k * wl;
          M(dH, b2 + i) += v;
          M(b2 + i, dH) += v;
        }
        for (int a = 0; a < n3; ++a) {
          Complex v = 0.0;
          for (int j = 0; j < 3; ++j) v += phi[j] * F3[j][a];
          v *= -k * k * wl;
          M(dH, b3 + a) += v;
          M(b3 + a, dH) += v;
        }
      }
    }
  }

  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N);
  for (int i = 0; i < nH; ++i) rhs[i] = rhsH[i];

  // corrector gauge freedom (gradient fields in the curl block, constants in
  // the potential block) makes the system singular but consistent; the
  // minimum-norm solution leaves the macro component untouched
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(M);
  const Eigen::VectorXcd x = cod.solve(rhs);

  CVector uH(nH);
  for (int i = 0; i < nH; ++i) uH[i] = x[i];
  return uH;
}

}  // namespace maxhmm
