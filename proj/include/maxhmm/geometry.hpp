#pragma once

#include "maxhmm/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

namespace maxhmm {

// Axis-aligned box given by two corners with lo < hi componentwise.
struct AxisBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();

  double volume() const { return (hi - lo).prod(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool strictly_contains(const Vec3& p) const {
    return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
  }
  void validate() const;
};

enum class SubdomainTag : std::uint8_t { Outside = 0, Inside = 1 };

struct BoundaryFace {
  std::array<int, 3> vertices;
  Vec3 normal;  // outward unit normal
  double area;
  int parent_tet;
};

// Local edges of a tetrahedron as pairs of local vertex numbers.
inline constexpr std::array<std::array<int, 2>, 6> LOCAL_EDGES = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

// Conforming tetrahedral mesh of an axis-aligned box: n^3 cubes, each split
// into six tetrahedra sharing the cube's low-to-high body diagonal.  Tets are
// stored cube-major with a fixed subdivision order inside each cube, which
// makes point location arithmetic instead of a search.
struct StructuredTetMesh {
  AxisBox box;
  int n_per_axis = 0;

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<std::array<int, 2>> edges;  // ascending pairs, lexicographically sorted
  std::vector<std::array<int, 6>> tet_edges;
  std::vector<std::array<std::int8_t, 6>> tet_edge_signs;
  std::vector<BoundaryFace> boundary_faces;
  std::vector<SubdomainTag> subdomain_tag;  // per tet

  // cached per-tet geometry
  std::vector<double> tet_volume;
  std::vector<std::array<Vec3, 4>> grad_lambda;

  int vertex_index(int i, int j, int k) const {
    const int m = n_per_axis + 1;
    return (i * m + j) * m + k;
  }
  std::array<int, 3> vertex_coords(int v) const {
    const int m = n_per_axis + 1;
    return {v / (m * m), (v / m) % m, v % m};
  }
  Vec3 barycenter(int t) const {
    const auto& T = tets[t];
    return 0.25 * (vertices[T[0]] + vertices[T[1]] + vertices[T[2]] + vertices[T[3]]);
  }
  std::size_t n_inside_tets() const;
  double h_max() const;

  // Index of the tet containing p (ties on faces broken deterministically),
  // or -1 if p lies outside the box.
  int locate(const Vec3& p) const;

  std::string stats_summary() const;
};

// Identification of mesh entities on opposite faces of the unit cell by
// integer translation.  Maps send every vertex/edge to its representative;
// entities away from the high faces map to themselves.
struct PeriodicIdentification {
  std::vector<int> vertex_map;
  std::vector<int> edge_map;
  std::vector<std::int8_t> edge_sign;
  std::size_t n_vertex_classes = 0;
  std::size_t n_edge_classes = 0;
};

// Meshes the box with n subdivisions per axis.  If an inclusion box is given
// it must be resolved by the mesh planes (else AlignmentError); tets whose
// barycenter falls inside it are tagged Inside.
StructuredTetMesh build_box_mesh(const AxisBox& box, int n,
                                 const std::optional<AxisBox>& inclusion = {});

// Meshes the unit cell [0,1]^3 and builds the periodic identification.  The
// inclusion, when present, must not touch the cell boundary (GeometryError)
// unless boundary contact is explicitly allowed (toy setups).
std::pair<StructuredTetMesh, PeriodicIdentification> build_periodic_cell_mesh(
    int n, const std::optional<AxisBox>& inclusion = {},
    bool allow_boundary_contact = false);

const std::vector<BoundaryFace>& boundary_outward_normals(const StructuredTetMesh& mesh);

}  // namespace maxhmm
