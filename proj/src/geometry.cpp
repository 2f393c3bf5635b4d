#include "maxhmm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace maxhmm {

namespace {

// The six axis permutations in lexicographic order; tet r of a cube covers the
// points whose cube-local coordinates satisfy u[perm[r][0]] >= u[perm[r][1]] >= u[perm[r][2]].
constexpr std::array<std::array<int, 3>, 6> KUHN_PERMS = {
    {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
constexpr std::array<int, 6> KUHN_PARITY = {+1, -1, -1, +1, +1, -1};

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

// Grid index of an aligned coordinate, or -1 if it does not sit on a mesh plane.
int aligned_plane(double c, double lo, double h, int n) {
  const double r = (c - lo) / h;
  const double i = std::round(r);
  if (std::abs(r - i) > 1e-9 || i < 0 || i > n) return -1;
  return static_cast<int>(i);
}

}  // namespace

void AxisBox::validate() const {
  if (!((hi.array() - lo.array()) > 0.0).all()) {
    throw GeometryError("AxisBox: hi must exceed lo on every axis");
  }
}

std::size_t StructuredTetMesh::n_inside_tets() const {
  std::size_t c = 0;
  for (auto t : subdomain_tag) c += (t == SubdomainTag::Inside);
  return c;
}

double StructuredTetMesh::h_max() const {
  double h = 0.0;
  for (const auto& T : tets) {
    for (const auto& e : LOCAL_EDGES) {
      h = std::max(h, (vertices[T[e[0]]] - vertices[T[e[1]]]).norm());
    }
  }
  return h;
}

int StructuredTetMesh::locate(const Vec3& p) const {
  const int n = n_per_axis;
  const Vec3 ext = box.hi - box.lo;
  std::array<int, 3> cube;
  Vec3 u;
  for (int d = 0; d < 3; ++d) {
    const double s = (p[d] - box.lo[d]) / ext[d] * n;
    if (s < -1e-12 * n || s > n * (1.0 + 1e-12)) return -1;
    int c = static_cast<int>(std::floor(s));
    c = std::clamp(c, 0, n - 1);
    cube[d] = c;
    u[d] = std::clamp(s - c, 0.0, 1.0);
  }
  std::array<int, 3> ord = {0, 1, 2};
  std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return u[a] > u[b]; });
  int rank = -1;
  for (int r = 0; r < 6; ++r) {
    if (KUHN_PERMS[r] == ord) {
      rank = r;
      break;
    }
  }
  const int cube_linear = (cube[0] * n + cube[1]) * n + cube[2];
  return cube_linear * 6 + rank;
}

std::string StructuredTetMesh::stats_summary() const {
  double vmin = 0.0, vmax = 0.0;
  if (!tet_volume.empty()) {
    const auto [mn, mx] = std::minmax_element(tet_volume.begin(), tet_volume.end());
    vmin = *mn;
    vmax = *mx;
  }
  std::ostringstream os;
  os << "mesh " << n_per_axis << "^3 cubes: " << vertices.size() << " vertices, "
     << tets.size() << " tets, " << edges.size() << " edges, "
     << boundary_faces.size() << " boundary faces\n"
     << "tet volume range [" << vmin << ", " << vmax << "]\n"
     << "tags: inside " << n_inside_tets() << ", outside "
     << (tets.size() - n_inside_tets()) << "\n";
  return os.str();
}

StructuredTetMesh build_box_mesh(const AxisBox& box, int n,
                                 const std::optional<AxisBox>& inclusion) {
  box.validate();
  if (n < 1 || n > 120) throw ConfigError("build_box_mesh: n_per_axis out of range");

  StructuredTetMesh mesh;
  mesh.box = box;
  mesh.n_per_axis = n;

  const Vec3 h = (box.hi - box.lo) / n;

  if (inclusion) {
    inclusion->validate();
    for (int d = 0; d < 3; ++d) {
      const int ilo = aligned_plane(inclusion->lo[d], box.lo[d], h[d], n);
      const int ihi = aligned_plane(inclusion->hi[d], box.lo[d], h[d], n);
      if (ilo < 0 || ihi < 0 || ilo >= ihi) {
        throw AlignmentError("build_box_mesh: inclusion is not aligned to the mesh "
                             "planes at this subdivision");
      }
    }
  }

  const int m = n + 1;
  mesh.vertices.resize(static_cast<std::size_t>(m) * m * m);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k)
        mesh.vertices[mesh.vertex_index(i, j, k)] =
            box.lo + Vec3(i * h[0], j * h[1], k * h[2]);

  mesh.tets.reserve(static_cast<std::size_t>(n) * n * n * 6);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const std::array<int, 3> base = {i, j, k};
        for (int r = 0; r < 6; ++r) {
          std::array<int, 4> tet;
          std::array<int, 3> c = base;
          tet[0] = mesh.vertex_index(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            c[KUHN_PERMS[r][s]] += 1;
            tet[s + 1] = mesh.vertex_index(c[0], c[1], c[2]);
          }
          if (KUHN_PARITY[r] < 0) std::swap(tet[2], tet[3]);
          mesh.tets.push_back(tet);
        }
      }

  // global edge list: ascending pairs, lexicographically sorted
  std::vector<std::array<int, 2>> pairs;
  pairs.reserve(mesh.tets.size() * 6);
  for (const auto& T : mesh.tets)
    for (const auto& e : LOCAL_EDGES) {
      int a = T[e[0]], b = T[e[1]];
      if (a > b) std::swap(a, b);
      pairs.push_back({a, b});
    }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  mesh.edges = std::move(pairs);

  std::unordered_map<std::uint64_t, int> edge_of;
  edge_of.reserve(mesh.edges.size() * 2);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e)
    edge_of[edge_key(mesh.edges[e][0], mesh.edges[e][1])] = static_cast<int>(e);

  mesh.tet_edges.resize(mesh.tets.size());
  mesh.tet_edge_signs.resize(mesh.tets.size());
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& T = mesh.tets[t];
    for (int le = 0; le < 6; ++le) {
      int a = T[LOCAL_EDGES[le][0]], b = T[LOCAL_EDGES[le][1]];
      std::int8_t sign = 1;
      if (a > b) {
        std::swap(a, b);
        sign = -1;
      }
      mesh.tet_edges[t][le] = edge_of.at(edge_key(a, b));
      mesh.tet_edge_signs[t][le] = sign;
    }
  }

  // boundary faces: those contained in exactly one tet
  struct FaceInfo {
    int count = 0;
    int parent = -1;
    std::array<int, 3> verts;
  };
  std::unordered_map<std::uint64_t, FaceInfo> faces;
  faces.reserve(mesh.tets.size() * 2);
  constexpr std::array<std::array<int, 3>, 4> LOCAL_FACES = {
      {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& T = mesh.tets[t];
    for (const auto& lf : LOCAL_FACES) {
      std::array<int, 3> f = {T[lf[0]], T[lf[1]], T[lf[2]]};
      std::sort(f.begin(), f.end());
      const std::uint64_t key = (static_cast<std::uint64_t>(f[0]) << 42) |
                                (static_cast<std::uint64_t>(f[1]) << 21) |
                                static_cast<std::uint64_t>(f[2]);
      auto& info = faces[key];
      ++info.count;
      info.parent = static_cast<int>(t);
      info.verts = f;
    }
  }
  for (const auto& [key, info] : faces) {
    if (info.count != 1) continue;
    const Vec3 a = mesh.vertices[info.verts[0]];
    const Vec3 b = mesh.vertices[info.verts[1]];
    const Vec3 c = mesh.vertices[info.verts[2]];
    Vec3 nrm = (b - a).cross(c - a);
    const double area = 0.5 * nrm.norm();
    nrm.normalize();
    const Vec3 centroid = (a + b + c) / 3.0;
    if (nrm.dot(centroid - mesh.barycenter(info.parent)) < 0.0) nrm = -nrm;
    mesh.boundary_faces.push_back({info.verts, nrm, area, info.parent});
  }
  std::sort(mesh.boundary_faces.begin(), mesh.boundary_faces.end(),
            [](const BoundaryFace& x, const BoundaryFace& y) { return x.vertices < y.vertices; });

  // per-tet geometry
  mesh.tet_volume.resize(mesh.tets.size());
  mesh.grad_lambda.resize(mesh.tets.size());
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& T = mesh.tets[t];
    Mat3 J;
    for (int c = 0; c < 3; ++c) J.col(c) = mesh.vertices[T[c + 1]] - mesh.vertices[T[0]];
    const double det = J.determinant();
    if (det <= 0.0) throw GeometryError("build_box_mesh: non-positive tet volume");
    mesh.tet_volume[t] = det / 6.0;
    const Mat3 Jinv = J.inverse();
    for (int c = 0; c < 3; ++c) mesh.grad_lambda[t][c + 1] = Jinv.row(c);
    mesh.grad_lambda[t][0] = -(mesh.grad_lambda[t][1] + mesh.grad_lambda[t][2] +
                               mesh.grad_lambda[t][3]);
  }

  mesh.subdomain_tag.assign(mesh.tets.size(), SubdomainTag::Outside);
  if (inclusion) {
    for (std::size_t t = 0; t < mesh.tets.size(); ++t)
      if (inclusion->strictly_contains(mesh.barycenter(static_cast<int>(t))))
        mesh.subdomain_tag[t] = SubdomainTag::Inside;
  }

  return mesh;
}

std::pair<StructuredTetMesh, PeriodicIdentification> build_periodic_cell_mesh(
    int n, const std::optional<AxisBox>& inclusion, bool allow_boundary_contact) {
  const AxisBox unit{Vec3::Zero(), Vec3::Ones()};
  if (inclusion) {
    inclusion->validate();
    const bool inside = allow_boundary_contact
                            ? (inclusion->lo.array() >= 0.0).all() &&
                                  (inclusion->hi.array() <= 1.0).all()
                            : (inclusion->lo.array() > 0.0).all() &&
                                  (inclusion->hi.array() < 1.0).all();
    if (!inside) {
      throw GeometryError("build_periodic_cell_mesh: inclusion must not touch the "
                          "cell boundary");
    }
  }
  StructuredTetMesh mesh = build_box_mesh(unit, n, inclusion);

  PeriodicIdentification ident;
  ident.vertex_map.resize(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    auto c = mesh.vertex_coords(static_cast<int>(v));
    ident.vertex_map[v] = mesh.vertex_index(c[0] % n, c[1] % n, c[2] % n);
  }

  std::unordered_map<std::uint64_t, int> edge_of;
  edge_of.reserve(mesh.edges.size() * 2);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e)
    edge_of[edge_key(mesh.edges[e][0], mesh.edges[e][1])] = static_cast<int>(e);

  ident.edge_map.resize(mesh.edges.size());
  ident.edge_sign.assign(mesh.edges.size(), 1);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    auto ca = mesh.vertex_coords(mesh.edges[e][0]);
    auto cb = mesh.vertex_coords(mesh.edges[e][1]);
    // translate the edge as a whole off every high face it lies in; this keeps
    // the endpoint order, so the identification never flips orientation
    for (int d = 0; d < 3; ++d) {
      if (ca[d] == n && cb[d] == n) {
        ca[d] = 0;
        cb[d] = 0;
      }
    }
    const int a = mesh.vertex_index(ca[0], ca[1], ca[2]);
    const int b = mesh.vertex_index(cb[0], cb[1], cb[2]);
    ident.edge_map[e] = edge_of.at(edge_key(a, b));
  }

  std::vector<char> seen_v(mesh.vertices.size(), 0), seen_e(mesh.edges.size(), 0);
  for (int v : ident.vertex_map) seen_v[v] = 1;
  for (int e : ident.edge_map) seen_e[e] = 1;
  ident.n_vertex_classes = std::count(seen_v.begin(), seen_v.end(), 1);
  ident.n_edge_classes = std::count(seen_e.begin(), seen_e.end(), 1);

  return {std::move(mesh), std::move(ident)};
}

const std::vector<BoundaryFace>& boundary_outward_normals(const StructuredTetMesh& mesh) {
  return mesh.boundary_faces;
}

}  // namespace maxhmm
