#pragma once

#include <array>
#include <utility>
#include <vector>

namespace maxhmm {

// Quadrature on the reference tetrahedron, in barycentric coordinates.
// Weights sum to the reference volume 1/6; assembly multiplies by |det J|.
struct TetQuadPoint {
  std::array<double, 4> bary;
  double weight;
};
struct QuadratureRule {
  std::vector<TetQuadPoint> points;
  int degree;
};

const QuadratureRule& tet_rule_degree1();  // barycenter
const QuadratureRule& tet_rule_degree2();  // 4 points
const QuadratureRule& tet_rule_degree4();  // 11 points, one negative weight

// Triangle rules in barycentric coordinates; weights sum to 1/2.
struct TriQuadPoint {
  std::array<double, 3> bary;
  double weight;
};
struct TriQuadRule {
  std::vector<TriQuadPoint> points;
  int degree;
};

const TriQuadRule& tri_rule_degree2();  // edge midpoints
const TriQuadRule& tri_rule_degree5();  // 7 points

// Two-point Gauss rule on [0,1]: (position, weight).
const std::array<std::pair<double, double>, 2>& segment_gauss2();

}  // namespace maxhmm
