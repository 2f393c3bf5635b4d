#include "maxhmm/fem.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace maxhmm {

namespace {

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

// unconjugated bilinear dot product (the forms here are complex symmetric)
Complex sym_dot(const Vec3c& x, const Vec3c& y) {
  return x(0) * y(0) + x(1) * y(1) + x(2) * y(2);
}
Complex sym_dot(const Vec3c& x, const Vec3& y) {
  return x(0) * y(0) + x(1) * y(1) + x(2) * y(2);
}

// barycentric coordinate of x with respect to vertex lv of tet t
double lambda_at(const StructuredTetMesh& m, int t, int lv, const Vec3& x) {
  return 0.25 + m.grad_lambda[t][lv].dot(x - m.barycenter(t));
}

// Whitney basis function of local edge le at x (ascending global orientation)
Vec3 whitney_at(const StructuredTetMesh& m, int t, int le, double sign, const Vec3& x) {
  const int a = LOCAL_EDGES[le][0], b = LOCAL_EDGES[le][1];
  return sign * (lambda_at(m, t, a, x) * m.grad_lambda[t][b] -
                 lambda_at(m, t, b, x) * m.grad_lambda[t][a]);
}

Vec3 whitney_curl(const StructuredTetMesh& m, int t, int le, double sign) {
  const int a = LOCAL_EDGES[le][0], b = LOCAL_EDGES[le][1];
  return sign * 2.0 * m.grad_lambda[t][a].cross(m.grad_lambda[t][b]);
}

std::vector<char> active_tets(const StructuredTetMesh& m, Region r) {
  std::vector<char> act(m.tets.size(), 0);
  for (std::size_t t = 0; t < m.tets.size(); ++t)
    act[t] = tet_in_region(m, static_cast<int>(t), r);
  return act;
}

// faces of the active region contained in exactly one active tet
std::vector<std::array<int, 3>> region_boundary_faces(const StructuredTetMesh& m,
                                                      const std::vector<char>& active) {
  constexpr std::array<std::array<int, 3>, 4> LOCAL_FACES = {
      {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};
  std::map<std::array<int, 3>, int> count;
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!active[t]) continue;
    for (const auto& lf : LOCAL_FACES) {
      std::array<int, 3> f = {m.tets[t][lf[0]], m.tets[t][lf[1]], m.tets[t][lf[2]]};
      std::sort(f.begin(), f.end());
      ++count[f];
    }
  }
  std::vector<std::array<int, 3>> out;
  for (const auto& [f, c] : count)
    if (c == 1) out.push_back(f);
  return out;
}

}  // namespace

bool tet_in_region(const StructuredTetMesh& mesh, int t, Region r) {
  switch (r) {
    case Region::All: return true;
    case Region::Outside: return mesh.subdomain_tag[t] == SubdomainTag::Outside;
    case Region::Inside: return mesh.subdomain_tag[t] == SubdomainTag::Inside;
  }
  return false;
}

EdgeSpace::EdgeSpace(const StructuredTetMesh& m, EdgeFlavor f, Region r,
                     const PeriodicIdentification* ident)
    : mesh(&m), periodic(ident), flavor(f), region(r) {
  if (flavor == EdgeFlavor::PeriodicQuotient && ident == nullptr)
    throw ConfigError("EdgeSpace: periodic quotient flavor needs an identification");

  tet_active = active_tets(m, r);

  std::vector<char> adjacent(m.edges.size(), 0);
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!tet_active[t]) continue;
    for (int le = 0; le < 6; ++le) adjacent[m.tet_edges[t][le]] = 1;
  }

  std::vector<char> candidate = adjacent;
  if (flavor == EdgeFlavor::PeriodicQuotient) {
    // a representative carries a dof when any member of its class is adjacent
    candidate.assign(m.edges.size(), 0);
    for (std::size_t e = 0; e < m.edges.size(); ++e)
      if (adjacent[e]) candidate[periodic->edge_map[e]] = 1;
  }

  if (flavor == EdgeFlavor::ZeroTangentialTrace) {
    std::unordered_map<std::uint64_t, int> edge_of;
    edge_of.reserve(m.edges.size() * 2);
    for (std::size_t e = 0; e < m.edges.size(); ++e)
      edge_of[pair_key(m.edges[e][0], m.edges[e][1])] = static_cast<int>(e);
    for (const auto& fverts : region_boundary_faces(m, tet_active)) {
      for (const auto& le :
           std::array<std::array<int, 2>, 3>{{{0, 1}, {0, 2}, {1, 2}}}) {
        candidate[edge_of.at(pair_key(fverts[le[0]], fverts[le[1]]))] = 0;
      }
    }
  }

  edge_dof.assign(m.edges.size(), -1);
  for (std::size_t e = 0; e < m.edges.size(); ++e)
    if (candidate[e]) edge_dof[e] = n_dofs++;
}

NodalSpace::NodalSpace(const StructuredTetMesh& m, NodalFlavor f, Region r,
                       const PeriodicIdentification* ident)
    : mesh(&m), periodic(ident), flavor(f), region(r) {
  if (flavor == NodalFlavor::PeriodicZeroMean && ident == nullptr)
    throw ConfigError("NodalSpace: periodic flavor needs an identification");

  tet_active = active_tets(m, r);

  std::vector<char> adjacent(m.vertices.size(), 0);
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!tet_active[t]) continue;
    for (int v : m.tets[t]) adjacent[v] = 1;
  }

  std::vector<char> candidate = adjacent;
  if (flavor == NodalFlavor::PeriodicZeroMean) {
    candidate.assign(m.vertices.size(), 0);
    for (std::size_t v = 0; v < m.vertices.size(); ++v)
      if (adjacent[v]) candidate[periodic->vertex_map[v]] = 1;
  }
  if (flavor == NodalFlavor::ZeroBoundary) {
    for (const auto& fverts : region_boundary_faces(m, tet_active))
      for (int v : fverts) candidate[v] = 0;
  }

  vertex_dof.assign(m.vertices.size(), -1);
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    if (candidate[v]) vertex_dof[v] = n_dofs++;
}

SparseMatrix assemble_curlcurl(const EdgeSpace& S, const CoeffField& coeff) {
  const auto& m = *S.mesh;
  std::vector<Triplet> ts;
  ts.reserve(36 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const Mat3c& C = coeff.at(t);
    std::array<Vec3c, 6> curls;
    std::array<int, 6> dofs;
    for (int le = 0; le < 6; ++le) {
      const auto [d, s] = S.dof(static_cast<int>(t), le);
      dofs[le] = d;
      curls[le] = whitney_curl(m, static_cast<int>(t), le, s).cast<Complex>();
    }
    const double V = m.tet_volume[t];
    for (int b = 0; b < 6; ++b) {
      if (dofs[b] < 0) continue;
      const Vec3c Cb = C * curls[b];
      for (int a = 0; a < 6; ++a) {
        if (dofs[a] < 0) continue;
        ts.push_back({dofs[a], dofs[b], V * sym_dot(Cb, curls[a])});
      }
    }
  }
  return SparseMatrix::from_triplets(S.n_dofs, S.n_dofs, ts, true);
}

SparseMatrix assemble_mass(const EdgeSpace& S, const CoeffField& coeff) {
  const auto& m = *S.mesh;
  const auto& rule = tet_rule_degree2();
  std::vector<Triplet> ts;
  ts.reserve(36 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const Mat3c& C = coeff.at(t);
    std::array<int, 6> dofs;
    std::array<double, 6> signs;
    for (int le = 0; le < 6; ++le) {
      const auto [d, s] = S.dof(static_cast<int>(t), le);
      dofs[le] = d;
      signs[le] = s;
    }
    const double jac = 6.0 * m.tet_volume[t];
    std::array<std::array<Complex, 6>, 6> loc{};
    for (const auto& qp : rule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 4; ++v) x += qp.bary[v] * m.vertices[m.tets[t][v]];
      std::array<Vec3c, 6> w;
      for (int le = 0; le < 6; ++le)
        w[le] = whitney_at(m, static_cast<int>(t), le, signs[le], x).cast<Complex>();
      for (int b = 0; b < 6; ++b) {
        const Vec3c Cb = C * w[b];
        for (int a = 0; a < 6; ++a) loc[a][b] += qp.weight * jac * sym_dot(Cb, w[a]);
      }
    }
    for (int a = 0; a < 6; ++a) {
      if (dofs[a] < 0) continue;
      for (int b = 0; b < 6; ++b)
        if (dofs[b] >= 0) ts.push_back({dofs[a], dofs[b], loc[a][b]});
    }
  }
  return SparseMatrix::from_triplets(S.n_dofs, S.n_dofs, ts, true);
}

SparseMatrix assemble_boundary_tangential_mass(const EdgeSpace& S) {
  const auto& m = *S.mesh;
  const auto& rule = tri_rule_degree2();
  std::vector<Triplet> ts;
  for (const auto& face : m.boundary_faces) {
    const int t = face.parent_tet;
    if (!S.tet_active[t]) continue;
    std::array<int, 6> dofs;
    std::array<double, 6> signs;
    for (int le = 0; le < 6; ++le) {
      const auto [d, s] = S.dof(t, le);
      dofs[le] = d;
      signs[le] = s;
    }
    const double jac = 2.0 * face.area;
    for (const auto& qp : rule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 3; ++v) x += qp.bary[v] * m.vertices[face.vertices[v]];
      std::array<Vec3, 6> wt;
      for (int le = 0; le < 6; ++le) {
        const Vec3 w = whitney_at(m, t, le, signs[le], x);
        wt[le] = w - w.dot(face.normal) * face.normal;
      }
      for (int a = 0; a < 6; ++a) {
        if (dofs[a] < 0) continue;
        for (int b = 0; b < 6; ++b)
          if (dofs[b] >= 0)
            ts.push_back({dofs[a], dofs[b], Complex(qp.weight * jac * wt[a].dot(wt[b]))});
      }
    }
  }
  return SparseMatrix::from_triplets(S.n_dofs, S.n_dofs, ts, true);
}

SparseMatrix assemble_p1_stiffness(const NodalSpace& S, const CoeffField& coeff) {
  const auto& m = *S.mesh;
  std::vector<Triplet> ts;
  ts.reserve(16 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const Mat3c& C = coeff.at(t);
    const double V = m.tet_volume[t];
    for (int b = 0; b < 4; ++b) {
      const int db = S.dof(static_cast<int>(t), b);
      if (db < 0) continue;
      const Vec3c Cb = C * m.grad_lambda[t][b].cast<Complex>();
      for (int a = 0; a < 4; ++a) {
        const int da = S.dof(static_cast<int>(t), a);
        if (da < 0) continue;
        ts.push_back({da, db, V * sym_dot(Cb, m.grad_lambda[t][a])});
      }
    }
  }
  return SparseMatrix::from_triplets(S.n_dofs, S.n_dofs, ts, true);
}

SparseMatrix assemble_p1_mass(const NodalSpace& S) {
  const auto& m = *S.mesh;
  std::vector<Triplet> ts;
  ts.reserve(16 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const double V = m.tet_volume[t];
    for (int a = 0; a < 4; ++a) {
      const int da = S.dof(static_cast<int>(t), a);
      if (da < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int db = S.dof(static_cast<int>(t), b);
        if (db < 0) continue;
        ts.push_back({da, db, Complex(V * (a == b ? 0.1 : 0.05))});
      }
    }
  }
  return SparseMatrix::from_triplets(S.n_dofs, S.n_dofs, ts, true);
}

CVector boundary_load(const EdgeSpace& S, const BoundaryFieldFn& g) {
  const auto& m = *S.mesh;
  const auto& rule = tri_rule_degree5();
  CVector b(S.n_dofs, Complex(0.0));
  for (const auto& face : m.boundary_faces) {
    const int t = face.parent_tet;
    if (!S.tet_active[t]) continue;
    const double jac = 2.0 * face.area;
    for (const auto& qp : rule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 3; ++v) x += qp.bary[v] * m.vertices[face.vertices[v]];
      const Vec3c gval = g(x, face.normal);
      for (int le = 0; le < 6; ++le) {
        const auto [d, s] = S.dof(t, le);
        if (d < 0) continue;
        Vec3 w = whitney_at(m, t, le, s, x);
        w -= w.dot(face.normal) * face.normal;
        b[d] += qp.weight * jac * sym_dot(gval, w);
      }
    }
  }
  return b;
}

CVector volume_load_edge(const EdgeSpace& S, const VectorFieldFn& f,
                         const QuadratureRule& rule) {
  const auto& m = *S.mesh;
  CVector b(S.n_dofs, Complex(0.0));
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const double jac = 6.0 * m.tet_volume[t];
    for (const auto& qp : rule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 4; ++v) x += qp.bary[v] * m.vertices[m.tets[t][v]];
      const Vec3c fval = f(x);
      for (int le = 0; le < 6; ++le) {
        const auto [d, s] = S.dof(static_cast<int>(t), le);
        if (d < 0) continue;
        b[d] += qp.weight * jac * sym_dot(fval, whitney_at(m, static_cast<int>(t), le, s, x));
      }
    }
  }
  return b;
}

CVector volume_load_p1_grad(const NodalSpace& S, const VectorFieldFn& f,
                            const QuadratureRule& rule) {
  const auto& m = *S.mesh;
  CVector b(S.n_dofs, Complex(0.0));
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const double jac = 6.0 * m.tet_volume[t];
    for (const auto& qp : rule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 4; ++v) x += qp.bary[v] * m.vertices[m.tets[t][v]];
      const Vec3c fval = f(x);
      for (int lv = 0; lv < 4; ++lv) {
        const int d = S.dof(static_cast<int>(t), lv);
        if (d < 0) continue;
        b[d] += qp.weight * jac * sym_dot(fval, m.grad_lambda[t][lv]);
      }
    }
  }
  return b;
}

CVector curl_moment(const EdgeSpace& S, const CoeffField& coeff, const Vec3& dir) {
  const auto& m = *S.mesh;
  CVector b(S.n_dofs, Complex(0.0));
  const Vec3c dirc = dir.cast<Complex>();
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const Mat3c& C = coeff.at(t);
    const double V = m.tet_volume[t];
    for (int le = 0; le < 6; ++le) {
      const auto [d, s] = S.dof(static_cast<int>(t), le);
      if (d < 0) continue;
      const Vec3c c = whitney_curl(m, static_cast<int>(t), le, s).cast<Complex>();
      b[d] += V * sym_dot(dirc, (C * c).eval());
    }
  }
  return b;
}

CVector grad_moment(const NodalSpace& S, const CoeffField& coeff, const Vec3& dir) {
  const auto& m = *S.mesh;
  CVector b(S.n_dofs, Complex(0.0));
  const Vec3c dirc = dir.cast<Complex>();
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const Mat3c& C = coeff.at(t);
    const double V = m.tet_volume[t];
    for (int lv = 0; lv < 4; ++lv) {
      const int d = S.dof(static_cast<int>(t), lv);
      if (d < 0) continue;
      b[d] += V * sym_dot(dirc, (C * m.grad_lambda[t][lv].cast<Complex>()).eval());
    }
  }
  return b;
}

CVector field_moment(const EdgeSpace& S, const Vec3& dir) {
  const auto& m = *S.mesh;
  CVector b(S.n_dofs, Complex(0.0));
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    const double V = m.tet_volume[t];
    for (int le = 0; le < 6; ++le) {
      const auto [d, s] = S.dof(static_cast<int>(t), le);
      if (d < 0) continue;
      const int a = LOCAL_EDGES[le][0], bb = LOCAL_EDGES[le][1];
      // int_T psi = |T| (grad lambda_b - grad lambda_a) / 4
      const Vec3 integral = s * 0.25 * V * (m.grad_lambda[t][bb] - m.grad_lambda[t][a]);
      b[d] += Complex(dir.dot(integral));
    }
  }
  return b;
}

Vec3 edge_basis_value(const StructuredTetMesh& m, int t, int le, double sign, const Vec3& x) {
  return whitney_at(m, t, le, sign, x);
}

Vec3 edge_basis_curl(const StructuredTetMesh& m, int t, int le, double sign) {
  return whitney_curl(m, t, le, sign);
}

EdgeField interpolate_edge(const EdgeSpace& S, const VectorFieldFn& f) {
  const auto& m = *S.mesh;
  EdgeField u;
  u.space = &S;
  u.coeffs.assign(S.n_dofs, Complex(0.0));
  for (std::size_t e = 0; e < m.edges.size(); ++e) {
    const int d = S.edge_dof[e];
    if (d < 0) continue;
    const Vec3 p0 = m.vertices[m.edges[e][0]];
    const Vec3 p1 = m.vertices[m.edges[e][1]];
    const Vec3 tangent = p1 - p0;
    Complex val = 0.0;
    for (const auto& [t, w] : segment_gauss2()) {
      const Vec3 x = p0 + t * tangent;
      val += w * sym_dot(f(x), tangent);
    }
    u.coeffs[d] = val;
  }
  return u;
}

Vec3c eval_edge_field(const EdgeField& u, int t, const Vec3& x) {
  const EdgeSpace& S = *u.space;
  if (!S.tet_active[t]) return Vec3c::Zero();
  Vec3c out = Vec3c::Zero();
  for (int le = 0; le < 6; ++le) {
    const auto [d, s] = S.dof(t, le);
    if (d < 0) continue;
    out += u.coeffs[d] * whitney_at(*S.mesh, t, le, s, x).cast<Complex>();
  }
  return out;
}

Vec3c eval_edge_curl(const EdgeField& u, int t) {
  const EdgeSpace& S = *u.space;
  if (!S.tet_active[t]) return Vec3c::Zero();
  Vec3c out = Vec3c::Zero();
  for (int le = 0; le < 6; ++le) {
    const auto [d, s] = S.dof(t, le);
    if (d < 0) continue;
    out += u.coeffs[d] * whitney_curl(*S.mesh, t, le, s).cast<Complex>();
  }
  return out;
}

Complex eval_nodal(const NodalField& p, int t, const Vec3& x) {
  const NodalSpace& S = *p.space;
  if (!S.tet_active[t]) return Complex(0.0);
  Complex out = 0.0;
  for (int lv = 0; lv < 4; ++lv) {
    const int d = S.dof(t, lv);
    if (d < 0) continue;
    out += p.coeffs[d] * lambda_at(*S.mesh, t, lv, x);
  }
  return out;
}

Vec3c eval_nodal_gradient(const NodalField& p, int t) {
  const NodalSpace& S = *p.space;
  if (!S.tet_active[t]) return Vec3c::Zero();
  Vec3c out = Vec3c::Zero();
  for (int lv = 0; lv < 4; ++lv) {
    const int d = S.dof(t, lv);
    if (d < 0) continue;
    out += p.coeffs[d] * S.mesh->grad_lambda[t][lv].cast<Complex>();
  }
  return out;
}

Norms weighted_norms(const EdgeField& u, double /*k*/, Region region) {
  const EdgeSpace& S = *u.space;
  const auto& m = *S.mesh;
  const auto& rule = tet_rule_degree2();
  double l2 = 0.0, curl = 0.0, bnd = 0.0;

  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t] || !tet_in_region(m, static_cast<int>(t), region)) continue;
    const Vec3c c = eval_edge_curl(u, static_cast<int>(t));
    curl += m.tet_volume[t] * c.squaredNorm();
    const double jac = 6.0 * m.tet_volume[t];
    for (const auto& qp : rule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 4; ++v) x += qp.bary[v] * m.vertices[m.tets[t][v]];
      l2 += qp.weight * jac * eval_edge_field(u, static_cast<int>(t), x).squaredNorm();
    }
  }

  const auto& trule = tri_rule_degree2();
  for (const auto& face : m.boundary_faces) {
    const int t = face.parent_tet;
    if (!S.tet_active[t] || !tet_in_region(m, t, region)) continue;
    const double jac = 2.0 * face.area;
    for (const auto& qp : trule.points) {
      Vec3 x = Vec3::Zero();
      for (int v = 0; v < 3; ++v) x += qp.bary[v] * m.vertices[face.vertices[v]];
      const Vec3c w = eval_edge_field(u, t, x);
      const Vec3c wt = w - sym_dot(w, face.normal) * face.normal.cast<Complex>();
      bnd += qp.weight * jac * wt.squaredNorm();
    }
  }

  return {std::sqrt(l2), std::sqrt(curl), std::sqrt(bnd)};
}

std::vector<double> nodal_lumped_mass(const NodalSpace& S) {
  const auto& m = *S.mesh;
  std::vector<double> w(S.n_dofs, 0.0);
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    if (!S.tet_active[t]) continue;
    for (int lv = 0; lv < 4; ++lv) {
      const int d = S.dof(static_cast<int>(t), lv);
      if (d >= 0) w[d] += 0.25 * m.tet_volume[t];
    }
  }
  return w;
}

}  // namespace maxhmm
