#include "fehmm/fem.hpp"

#include <cmath>

namespace fehmm {

namespace {

// Integrates f(u, grad u, x) over the mesh with the default rule.
template <class F>
double integrate(const StructuredQuadMesh& mesh, const Vec& d, F&& f) {
  if (d.size() != 2 * mesh.num_nodes())
    throw std::invalid_argument("norm: field size does not match the mesh");
  const QuadratureRule rule = default_rule(mesh.order);
  double sum = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    const auto conn = mesh.element(e);
    Eigen::Matrix<double, 2, Eigen::Dynamic> de(2, conn.size());
    for (std::size_t a = 0; a < conn.size(); ++a) de.col(a) = d.segment<2>(2 * conn[a]);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(mesh.order, c, rule.points[q]);
      const Eigen::Vector2d u = de * g.N;
      const Eigen::Matrix2d grad = de * g.dNdx;  // grad(i, j) = du_i/dx_j
      sum += rule.weights[q] * g.detJ * f(u, grad, g.x);
    }
  }
  return sum;
}

}  // namespace

double norm_L2(const StructuredQuadMesh& mesh, const Vec& d) {
  return std::sqrt(integrate(mesh, d, [](const Eigen::Vector2d& u, const Eigen::Matrix2d&,
                                         const Point&) { return u.squaredNorm(); }));
}

double norm_H1(const StructuredQuadMesh& mesh, const Vec& d) {
  return std::sqrt(integrate(mesh, d, [](const Eigen::Vector2d& u, const Eigen::Matrix2d& g,
                                         const Point&) {
    return u.squaredNorm() + g.squaredNorm();
  }));
}

double norm_energy(const StructuredQuadMesh& mesh, const Vec& d, const MaterialFn& material) {
  return std::sqrt(integrate(mesh, d, [&](const Eigen::Vector2d&, const Eigen::Matrix2d& g,
                                          const Point& x) {
    const Eigen::Vector3d eps(g(0, 0), g(1, 1), g(0, 1) + g(1, 0));
    return eps.dot(material(x) * eps);
  }));
}

}  // namespace fehmm
