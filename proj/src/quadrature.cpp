#include "maxhmm/quadrature.hpp"

#include <cmath>

namespace maxhmm {

const QuadratureRule& tet_rule_degree1() {
  static const QuadratureRule rule = {{{{0.25, 0.25, 0.25, 0.25}, 1.0 / 6.0}}, 1};
  return rule;
}

const QuadratureRule& tet_rule_degree2() {
  static const QuadratureRule rule = [] {
    const double a = (5.0 + 3.0 * std::sqrt(5.0)) / 20.0;
    const double b = (5.0 - std::sqrt(5.0)) / 20.0;
    QuadratureRule r;
    r.degree = 2;
    for (int i = 0; i < 4; ++i) {
      std::array<double, 4> p = {b, b, b, b};
      p[i] = a;
      r.points.push_back({p, 1.0 / 24.0});
    }
    return r;
  }();
  return rule;
}

const QuadratureRule& tet_rule_degree4() {
  static const QuadratureRule rule = [] {
    QuadratureRule r;
    r.degree = 4;
    r.points.push_back({{0.25, 0.25, 0.25, 0.25}, -74.0 / 5625.0});
    const double a = 11.0 / 14.0, b = 1.0 / 14.0;
    for (int i = 0; i < 4; ++i) {
      std::array<double, 4> p = {b, b, b, b};
      p[i] = a;
      r.points.push_back({p, 343.0 / 45000.0});
    }
    const double c = 0.25 * (1.0 + std::sqrt(5.0 / 14.0));
    const double d = 0.25 * (1.0 - std::sqrt(5.0 / 14.0));
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 4; ++j) {
        std::array<double, 4> p = {d, d, d, d};
        p[i] = c;
        p[j] = c;
        r.points.push_back({p, 56.0 / 2250.0});
      }
    return r;
  }();
  return rule;
}

const TriQuadRule& tri_rule_degree2() {
  static const TriQuadRule rule = {{{{0.5, 0.5, 0.0}, 1.0 / 6.0},
                                    {{0.5, 0.0, 0.5}, 1.0 / 6.0},
                                    {{0.0, 0.5, 0.5}, 1.0 / 6.0}},
                                   2};
  return rule;
}

const TriQuadRule& tri_rule_degree5() {
  static const TriQuadRule rule = [] {
    TriQuadRule r;
    r.degree = 5;
    r.points.push_back({{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 9.0 / 80.0});
    const double a1 = 0.797426985353087, b1 = 0.101286507323456, w1 = 0.125939180544827 / 2.0;
    const double a2 = 0.059715871789770, b2 = 0.470142064105115, w2 = 0.132394152788506 / 2.0;
    for (int i = 0; i < 3; ++i) {
      std::array<double, 3> p = {b1, b1, b1};
      p[i] = a1;
      r.points.push_back({p, w1});
      std::array<double, 3> q = {b2, b2, b2};
      q[i] = a2;
      r.points.push_back({q, w2});
    }
    return r;
  }();
  return rule;
}

const std::array<std::pair<double, double>, 2>& segment_gauss2() {
  static const std::array<std::pair<double, double>, 2> pts = {
      std::pair<double, double>{0.5 - 0.5 / std::sqrt(3.0), 0.5},
      std::pair<double, double>{0.5 + 0.5 / std::sqrt(3.0), 0.5}};
  return pts;
}

}  // namespace maxhmm
