#pragma once

#include "maxhmm/geometry.hpp"
#include "maxhmm/quadrature.hpp"
#include "maxhmm/sparse.hpp"

#include <functional>

namespace maxhmm {

enum class EdgeFlavor { Unconstrained, ZeroTangentialTrace, PeriodicQuotient };
enum class NodalFlavor { Unconstrained, PeriodicZeroMean, ZeroBoundary };
enum class Region { All, Outside, Inside };

bool tet_in_region(const StructuredTetMesh& mesh, int t, Region r);

// Lowest-order edge (Whitney) space on the tets of a region.  Basis functions
// are oriented along the ascending global vertex pair of their edge; dofs are
// line integrals along that orientation.
struct EdgeSpace {
  const StructuredTetMesh* mesh = nullptr;
  const PeriodicIdentification* periodic = nullptr;
  EdgeFlavor flavor = EdgeFlavor::Unconstrained;
  Region region = Region::All;
  int n_dofs = 0;
  std::vector<int> edge_dof;  // per (representative) edge; -1 when constrained/absent
  std::vector<char> tet_active;

  EdgeSpace(const StructuredTetMesh& m, EdgeFlavor f, Region r = Region::All,
            const PeriodicIdentification* ident = nullptr);

  // dof index (or -1) and orientation sign of local edge le in tet t
  std::pair<int, double> dof(int t, int le) const {
    const int e = mesh->tet_edges[t][le];
    double s = mesh->tet_edge_signs[t][le];
    int r = e;
    if (periodic != nullptr && flavor == EdgeFlavor::PeriodicQuotient) {
      s *= periodic->edge_sign[e];
      r = periodic->edge_map[e];
    }
    return {edge_dof[r], s};
  }
};

// Continuous piecewise-linear nodal space on the tets of a region.
struct NodalSpace {
  const StructuredTetMesh* mesh = nullptr;
  const PeriodicIdentification* periodic = nullptr;
  NodalFlavor flavor = NodalFlavor::Unconstrained;
  Region region = Region::All;
  int n_dofs = 0;
  std::vector<int> vertex_dof;
  std::vector<char> tet_active;

  NodalSpace(const StructuredTetMesh& m, NodalFlavor f, Region r = Region::All,
             const PeriodicIdentification* ident = nullptr);

  int dof(int t, int lv) const {
    int v = mesh->tets[t][lv];
    if (periodic != nullptr && flavor == NodalFlavor::PeriodicZeroMean)
      v = periodic->vertex_map[v];
    return vertex_dof[v];
  }
};

template <class Space>
struct FieldFunction {
  const Space* space = nullptr;
  CVector coeffs;
};
using EdgeField = FieldFunction<EdgeSpace>;
using NodalField = FieldFunction<NodalSpace>;

// Per-tet material coefficient: a complex 3x3 tensor (scalars are isotropic).
struct CoeffField {
  std::vector<Mat3c> tensors;  // size 1 (uniform) or one per tet

  static CoeffField uniform(Complex s) { return {{s * Mat3c::Identity()}}; }
  static CoeffField uniform(const Mat3c& m) { return {{m}}; }
  static CoeffField per_tet_scalar(const std::vector<Complex>& s) {
    CoeffField c;
    c.tensors.reserve(s.size());
    for (const auto& v : s) c.tensors.push_back(v * Mat3c::Identity());
    return c;
  }
  static CoeffField per_tet(std::vector<Mat3c> m) { return {std::move(m)}; }
  const Mat3c& at(std::size_t t) const { return tensors.size() == 1 ? tensors[0] : tensors[t]; }
};

using VectorFieldFn = std::function<Vec3c(const Vec3&)>;
using BoundaryFieldFn = std::function<Vec3c(const Vec3&, const Vec3&)>;  // (point, outward normal)

// stiffness of the curl-curl form over the space's region (piecewise-constant
// integrand, integrated exactly with the one-point rule)
SparseMatrix assemble_curlcurl(const EdgeSpace& S, const CoeffField& coeff);

// mass matrix with the 4-point second-order rule (exact for Whitney products)
SparseMatrix assemble_mass(const EdgeSpace& S, const CoeffField& coeff);

// tangential-tangential mass on the mesh boundary faces of active tets
SparseMatrix assemble_boundary_tangential_mass(const EdgeSpace& S);

SparseMatrix assemble_p1_stiffness(const NodalSpace& S, const CoeffField& coeff);
SparseMatrix assemble_p1_mass(const NodalSpace& S);

// load vectors
CVector boundary_load(const EdgeSpace& S, const BoundaryFieldFn& g);  // int g . psi_T
CVector volume_load_edge(const EdgeSpace& S, const VectorFieldFn& f,
                         const QuadratureRule& rule);  // int f . psi
CVector volume_load_p1_grad(const NodalSpace& S, const VectorFieldFn& f,
                            const QuadratureRule& rule);  // int f . grad phi

// moment vectors used by the cell problems (dir is a constant direction):
//   curl_moment[a]  = int_region dir . (C curl psi_a)
//   grad_moment[i]  = int_region dir . (C grad phi_i)
//   field_moment[a] = int_region dir . psi_a            (exact closed form)
CVector curl_moment(const EdgeSpace& S, const CoeffField& coeff, const Vec3& dir);
CVector grad_moment(const NodalSpace& S, const CoeffField& coeff, const Vec3& dir);
CVector field_moment(const EdgeSpace& S, const Vec3& dir);

// interpolation by edge integrals (two-point Gauss along each edge)
EdgeField interpolate_edge(const EdgeSpace& S, const VectorFieldFn& f);

// single edge basis function of tet t; sign comes from the space's dof lookup
Vec3 edge_basis_value(const StructuredTetMesh& m, int t, int le, double sign, const Vec3& x);
Vec3 edge_basis_curl(const StructuredTetMesh& m, int t, int le, double sign);

// pointwise evaluation (returns zero on tets outside the space's region)
Vec3c eval_edge_field(const EdgeField& u, int t, const Vec3& x);
Vec3c eval_edge_curl(const EdgeField& u, int t);
Complex eval_nodal(const NodalField& p, int t, const Vec3& x);
Vec3c eval_nodal_gradient(const NodalField& p, int t);

struct Norms {
  double l2 = 0.0;
  double curl_semi = 0.0;
  double imp_boundary = 0.0;  // tangential trace on the mesh boundary
};
Norms weighted_norms(const EdgeField& u, double k, Region region = Region::All);

// lumped-mass weights (per dof) of the nodal space; used for weighted means
std::vector<double> nodal_lumped_mass(const NodalSpace& S);

}  // namespace maxhmm
