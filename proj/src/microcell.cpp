#include "maxhmm/microcell.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

namespace maxhmm {

namespace {

Complex sym_dot_vec(const CVector& a, const CVector& b) {
  Complex s(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> real_diagonal(const SparseMatrix& A) {
  std::vector<double> d(A.rows, 1.0);
  for (int i = 0; i < A.rows; ++i)
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p)
      if (A.col[p] == i && A.val[p].real() > 0.0) d[i] = A.val[p].real();
  return d;
}

CoeffField eps0_field(const MicroCoefficients& coeffs, std::size_t n_tets) {
  if (coeffs.eps0_inv.size() == 1)
    return CoeffField::uniform(Complex(coeffs.eps0_inv[0]));
  std::vector<Complex> vals(n_tets);
  for (std::size_t t = 0; t < n_tets; ++t) vals[t] = Complex(coeffs.eps0_inv[t]);
  return CoeffField::per_tet_scalar(vals);
}

}  // namespace

void MicroCoefficients::validate(std::size_t n_tets) const {
  if (eps0_inv.empty() || (eps0_inv.size() != 1 && eps0_inv.size() != n_tets))
    throw ConfigError("micro coefficients: eps0_inv must hold one value or one per tet");
  for (double v : eps0_inv)
    if (!(v > 0.0))
      throw ConfigError("micro coefficients: eps0_inv must be uniformly positive");
  if (!(std::abs(eps1_inv) > 0.0))
    throw ConfigError("micro coefficients: eps1_inv must be nonzero");
  if (eps1_inv.imag() > 0.0)
    throw ConfigError("micro coefficients: Im(eps1_inv) must be non-positive "
                      "(absorbing inclusion)");
}

Cell1Solution solve_cell1(const StructuredTetMesh& mesh,
                          const PeriodicIdentification& ident,
                          const MicroCoefficients& coeffs) {
  coeffs.validate(mesh.tets.size());
  Cell1Solution out;
  out.space = std::make_shared<EdgeSpace>(mesh, EdgeFlavor::PeriodicQuotient,
                                          Region::Outside, &ident);
  const EdgeSpace& S = *out.space;
  const auto eps = eps0_field(coeffs, mesh.tets.size());
  const auto K = assemble_curlcurl(S, eps);
  const auto jacobi = real_diagonal(K);

  // constant fields are curl-free and periodic: they span the part of the
  // kernel that is not pure gradient gauge, so keep iterates orthogonal to it
  std::vector<CVector> kernel;
  for (int j = 0; j < 3; ++j) {
    const Vec3 dir = Vec3::Unit(j);
    kernel.push_back(
        interpolate_edge(S, [dir](const Vec3&) { return dir.cast<Complex>(); }).coeffs);
  }
  const auto projector = make_orthogonal_projector(std::move(kernel));

  for (int l = 0; l < 3; ++l) {
    CVector b = curl_moment(S, eps, Vec3::Unit(l));
    for (auto& v : b) v = -v;
    SolverReport rep;
    CVector x = cg_projected(K, b, projector, 1e-11, 20000, &rep, &jacobi);
    if (!rep.converged)
      throw SolverError("cell problem 1: cg stalled at relative residual " +
                        std::to_string(rep.residual));
    EdgeField w;
    w.space = out.space.get();
    w.coeffs = std::move(x);
    out.curl_w1[l].assign(mesh.tets.size(), Vec3c::Zero());
    for (std::size_t t = 0; t < mesh.tets.size(); ++t)
      out.curl_w1[l][t] = eval_edge_curl(w, static_cast<int>(t));
  }

  out.eps_inv_hom.setZero();
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    if (!tet_in_region(mesh, static_cast<int>(t), Region::Outside)) continue;
    const double w = mesh.tet_volume[t] * coeffs.eps0_at(t);
    for (int l = 0; l < 3; ++l) {
      const Vec3c field = Vec3::Unit(l).cast<Complex>() + out.curl_w1[l][t];
      for (int j = 0; j < 3; ++j) out.eps_inv_hom(j, l) += w * field(j).real();
    }
  }
  return out;
}

Cell2Solution solve_cell2(const StructuredTetMesh& mesh,
                          const PeriodicIdentification& ident) {
  Cell2Solution out;
  out.space = std::make_shared<NodalSpace>(mesh, NodalFlavor::PeriodicZeroMean,
                                           Region::Outside, &ident);
  const NodalSpace& N = *out.space;
  const auto one = CoeffField::uniform(Complex(1.0));
  const auto A = assemble_p1_stiffness(N, one);
  const auto jacobi = real_diagonal(A);
  const auto projector =
      make_orthogonal_projector({CVector(N.n_dofs, Complex(1.0))});
  const auto lumped = nodal_lumped_mass(N);
  const double total_weight = [&] {
    double s = 0.0;
    for (double v : lumped) s += v;
    return s;
  }();

  for (int l = 0; l < 3; ++l) {
    CVector b = grad_moment(N, one, Vec3::Unit(l));
    for (auto& v : b) v = -v;
    SolverReport rep;
    CVector x = cg_projected(A, b, projector, 1e-11, 20000, &rep, &jacobi);
    if (!rep.converged)
      throw SolverError("cell problem 2: cg stalled at relative residual " +
                        std::to_string(rep.residual));
    Complex mean(0.0);
    for (int i = 0; i < N.n_dofs; ++i) mean += lumped[i] * x[i];
    mean /= total_weight;
    for (auto& v : x) v -= mean;
    out.p[l].space = out.space.get();
    out.p[l].coeffs = std::move(x);
  }
  return out;
}

Cell3Solution solve_cell3(const StructuredTetMesh& mesh, const MicroCoefficients& coeffs,
                          double k) {
  coeffs.validate(mesh.tets.size());
  if (!(k >= 0.0)) throw ConfigError("cell problem 3: wavenumber must be non-negative");
  Cell3Solution out;
  out.k = k;
  out.space = std::make_shared<EdgeSpace>(mesh, EdgeFlavor::ZeroTangentialTrace,
                                          Region::Inside);
  const EdgeSpace& S = *out.space;
  for (int l = 0; l < 3; ++l) {
    out.w3[l].space = out.space.get();
    out.w3[l].coeffs.assign(S.n_dofs, Complex(0.0));
  }
  if (S.n_dofs == 0) return out;  // no inclusion: correctors vanish

  const auto K = assemble_curlcurl(S, CoeffField::uniform(coeffs.eps1_inv));
  const auto M = assemble_mass(S, CoeffField::uniform(Complex(1.0)));
  const auto A = linear_combination(Complex(1.0), K, Complex(-k * k), M);

  std::vector<Vec3> midpoints(S.n_dofs);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    const int d = S.edge_dof[e];
    if (d >= 0)
      midpoints[d] =
          0.5 * (mesh.vertices[mesh.edges[e][0]] + mesh.vertices[mesh.edges[e][1]]);
  }
  const Vec3 h = (mesh.box.hi - mesh.box.lo) / mesh.n_per_axis;
  const auto perm = nested_dissection_order(midpoints, h);

  try {
    const SymmetricDirectSolver solver(A, &perm);
    for (int l = 0; l < 3; ++l) {
      SolverReport rep;
      out.w3[l].coeffs = solver.solve(field_moment(S, Vec3::Unit(l)), &rep);
      if (!rep.converged)
        throw SolverError("cell problem 3: direct solve left relative residual " +
                          std::to_string(rep.residual));
    }
  } catch (const SingularMatrixError& e) {
    throw SolverError(std::string("cell problem 3 at k=") + std::to_string(k) +
                      ": singular system (interior resonance); " + e.what());
  }
  return out;
}

Mat3c mu_from_parts(const Cell2Solution& c2, const Cell3Solution& c3, double k) {
  if (std::abs(c3.k - k) > 1e-12 * std::max(1.0, std::abs(k)))
    throw ConfigError("effective permeability: inclusion correctors were solved at a "
                      "different wavenumber");
  Mat3c mu = Mat3c::Identity();

  const StructuredTetMesh& mesh = *c2.space->mesh;
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    if (!tet_in_region(mesh, static_cast<int>(t), Region::Outside)) continue;
    const double V = mesh.tet_volume[t];
    for (int l = 0; l < 3; ++l) {
      const Vec3c g = eval_nodal_gradient(c2.p[l], static_cast<int>(t));
      for (int j = 0; j < 3; ++j) mu(j, l) += V * g(j);
    }
  }

  if (c3.space && c3.space->n_dofs > 0) {
    std::array<CVector, 3> moments;
    for (int j = 0; j < 3; ++j) moments[j] = field_moment(*c3.space, Vec3::Unit(j));
    for (int l = 0; l < 3; ++l)
      for (int j = 0; j < 3; ++j)
        mu(j, l) += k * k * sym_dot_vec(c3.w3[l].coeffs, moments[j]);
  }
  return mu;
}

EffectiveTensors compute_mu_hom(const CellSolutions& cells, double k) {
  return {cells.cell1.eps_inv_hom, mu_from_parts(cells.cell2, cells.cell3, k), k};
}

std::vector<MuSweepRow> sweep_mu(const StructuredTetMesh& mesh,
                                 const PeriodicIdentification& ident,
                                 const MicroCoefficients& coeffs,
                                 const std::vector<double>& k_grid, int n_threads) {
  coeffs.validate(mesh.tets.size());
  for (std::size_t i = 1; i < k_grid.size(); ++i)
    if (!(k_grid[i] > k_grid[i - 1]))
      throw ConfigError("permeability sweep: wavenumber grid must be increasing");

  const auto c2 = solve_cell2(mesh, ident);
  std::vector<MuSweepRow> rows(k_grid.size());

  auto compute_row = [&](std::size_t i) {
    rows[i].k = k_grid[i];
    try {
      const auto c3 = solve_cell3(mesh, coeffs, k_grid[i]);
      rows[i].mu = mu_from_parts(c2, c3, k_grid[i]);
      rows[i].ok = true;
    } catch (const SolverError& e) {
      rows[i].ok = false;
      rows[i].note = e.what();
    }
  };

  if (n_threads <= 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) compute_row(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int used = static_cast<int>(
        std::min(static_cast<std::size_t>(n_threads), rows.size()));
    for (int t = 0; t < used; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < rows.size(); i = next.fetch_add(1))
          compute_row(i);
      });
    for (auto& th : pool) th.join();
  }
  return rows;
}

std::vector<ResonanceInterval> detect_resonance_intervals(
    const std::vector<MuSweepRow>& rows) {
  std::vector<const MuSweepRow*> ok;
  for (const auto& r : rows)
    if (r.ok) ok.push_back(&r);
  const std::size_t m = ok.size();
  if (m < 3) return {};

  std::vector<double> spacings;
  for (std::size_t i = 1; i < m; ++i) spacings.push_back(ok[i]->k - ok[i - 1]->k);
  std::nth_element(spacings.begin(), spacings.begin() + spacings.size() / 2,
                   spacings.end());
  const double dk = spacings[spacings.size() / 2];

  // dissipation peaks anchor the resonances; an isolated sign change of the
  // real part (the return to positive values between two resonances) is not
  // a resonance of its own, so sign flips only count near an anchor
  std::set<std::size_t> anchors;
  for (int d = 0; d < 3; ++d) {
    std::vector<double> im(m);
    for (std::size_t i = 0; i < m; ++i) im[i] = ok[i]->mu(d, d).imag();
    std::vector<double> sorted = im;
    std::nth_element(sorted.begin(), sorted.begin() + m / 2, sorted.end());
    const double median = sorted[m / 2];
    for (std::size_t i = 1; i + 1 < m; ++i)
      if (im[i] > im[i - 1] && im[i] > im[i + 1] && im[i] > 3.0 * median)
        anchors.insert(i);
  }

  std::set<std::size_t> flagged = anchors;
  for (int d = 0; d < 3; ++d) {
    for (std::size_t i = 0; i + 1 < m; ++i) {
      const double a = ok[i]->mu(d, d).real();
      const double b = ok[i + 1]->mu(d, d).real();
      if (a * b >= 0.0) continue;
      for (std::size_t anchor : anchors) {
        const double dist = std::min(std::abs(ok[i]->k - ok[anchor]->k),
                                     std::abs(ok[i + 1]->k - ok[anchor]->k));
        if (dist <= 5.0 * dk + 1e-12) {
          flagged.insert(i);
          flagged.insert(i + 1);
          break;
        }
      }
    }
  }

  std::vector<ResonanceInterval> intervals;
  for (auto it = flagged.begin(); it != flagged.end();) {
    const std::size_t first = *it;
    std::size_t last = first;
    ++it;
    while (it != flagged.end() && ok[*it]->k - ok[last]->k <= 5.0 * dk + 1e-12) {
      last = *it;
      ++it;
    }
    intervals.push_back({ok[first]->k, ok[last]->k});
  }
  return intervals;
}

}  // namespace maxhmm
