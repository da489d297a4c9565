#pragma once

#include <vector>

namespace vstar {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;
};

// Gauss-Legendre rule with n points, 1 <= n <= 32.
const GaussRule& gauss_legendre(int n);

// Integral over [a, b] of f with a composite n-point rule on `pieces` equal panels.
template <class F>
double integrate_gauss(F&& f, double a, double b, int n = 8, int pieces = 1) {
  const GaussRule& g = gauss_legendre(n);
  double h = (b - a) / pieces, sum = 0.0;
  for (int p = 0; p < pieces; ++p) {
    double lo = a + p * h;
    for (std::size_t q = 0; q < g.nodes.size(); ++q)
      sum += g.weights[q] * f(lo + 0.5 * h * (1.0 + g.nodes[q]));
  }
  return 0.5 * h * sum;
}

}  // namespace vstar
