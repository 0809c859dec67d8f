#include "fehmm/fem.hpp"

#include <cmath>
#include <numbers>

namespace fehmm {

QuadratureRule gauss_legendre_1d(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_1d: n must be >= 1");
  QuadratureRule r;
  r.degree = 2 * n - 1;
  r.points.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Newton on P_n starting from the Chebyshev-like guess
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? x : p1;
      const double pnm1 = n == 1 ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double pn = n == 1 ? x : p1;
    const double pnm1 = n == 1 ? 1.0 : p0;
    dp = n * (x * pn - pnm1) / (x * x - 1.0);
    // ascending order
    r.points[n - 1 - i] = Point(x, 0.0);
    r.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

QuadratureRule gauss_rule(int n) {
  const QuadratureRule g = gauss_legendre_1d(n);
  QuadratureRule r;
  r.degree = g.degree;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      r.points.emplace_back(g.points[i].x(), g.points[j].x());
      r.weights.push_back(g.weights[i] * g.weights[j]);
    }
  return r;
}

QuadratureRule default_rule(int order) {
  if (order == 1) return gauss_rule(2);
  if (order == 2) return gauss_rule(3);
  throw std::invalid_argument("default_rule: order must be 1 or 2");
}

}  // namespace fehmm
