#include "fehmm/fem.hpp"
#include "fehmm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fehmm {

namespace {

constexpr int kQ9Index[9][2] = {{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 0},
                                {2, 1}, {1, 2}, {0, 1}, {1, 1}};

inline void lagrange3(double t, double* L, double* dL) {
  L[0] = 0.5 * t * (t - 1.0);
  L[1] = 1.0 - t * t;
  L[2] = 0.5 * t * (t + 1.0);
  dL[0] = t - 0.5;
  dL[1] = -2.0 * t;
  dL[2] = t + 0.5;
}

}  // namespace

ShapeEval shape_functions(int order, const Point& xi) {
  ShapeEval s;
  if (order == 1) {
    static const double sx[4] = {-1, 1, 1, -1};
    static const double sy[4] = {-1, -1, 1, 1};
    s.N.resize(4);
    s.dN.resize(4, 2);
    for (int a = 0; a < 4; ++a) {
      const double fx = 1.0 + sx[a] * xi.x();
      const double fy = 1.0 + sy[a] * xi.y();
      s.N(a) = 0.25 * fx * fy;
      s.dN(a, 0) = 0.25 * sx[a] * fy;
      s.dN(a, 1) = 0.25 * sy[a] * fx;
    }
  } else if (order == 2) {
    double Lx[3], dLx[3], Ly[3], dLy[3];
    lagrange3(xi.x(), Lx, dLx);
    lagrange3(xi.y(), Ly, dLy);
    s.N.resize(9);
    s.dN.resize(9, 2);
    for (int a = 0; a < 9; ++a) {
      const int i = kQ9Index[a][0], j = kQ9Index[a][1];
      s.N(a) = Lx[i] * Ly[j];
      s.dN(a, 0) = dLx[i] * Ly[j];
      s.dN(a, 1) = Lx[i] * dLy[j];
    }
  } else {
    throw std::invalid_argument("shape_functions: order must be 1 or 2");
  }
  return s;
}

std::vector<Point> reference_nodes(int order) {
  if (order == 1) return {Point(-1, -1), Point(1, -1), Point(1, 1), Point(-1, 1)};
  std::vector<Point> r;
  for (const auto& ij : kQ9Index) r.emplace_back(ij[0] - 1.0, ij[1] - 1.0);
  return r;
}

ShapeGeom shape_geometry(int order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                         const Point& xi) {
  const ShapeEval s = shape_functions(order, xi);
  ShapeGeom g;
  // J_ij = dx_i / dxi_j
  const Eigen::Matrix2d J = coords * s.dN;
  g.detJ = J.determinant();
  if (!(g.detJ > 0.0)) {
    std::ostringstream os;
    os << "non-positive Jacobian determinant " << g.detJ << " at xi = (" << xi.x() << ", "
       << xi.y() << ")";
    throw GeometryError(os.str());
  }
  g.N = s.N;
  g.dNdx = s.dN * J.inverse();
  g.x = coords * s.N;
  return g;
}

Eigen::Matrix<double, 3, Eigen::Dynamic> strain_operator(
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& dNdx) {
  const int n = static_cast<int>(dNdx.rows());
  Eigen::Matrix<double, 3, Eigen::Dynamic> B = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, 2 * n);
  for (int a = 0; a < n; ++a) {
    B(0, 2 * a) = dNdx(a, 0);
    B(1, 2 * a + 1) = dNdx(a, 1);
    B(2, 2 * a) = dNdx(a, 1);
    B(2, 2 * a + 1) = dNdx(a, 0);
  }
  return B;
}

Mat element_stiffness(int order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                      const MaterialFn& material, const QuadratureRule& rule) {
  const int n = static_cast<int>(coords.cols());
  Mat k = Mat::Zero(2 * n, 2 * n);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const ShapeGeom g = shape_geometry(order, coords, rule.points[q]);
    const auto B = strain_operator(g.dNdx);
    const Eigen::Matrix3d A = material(g.x);
    k.noalias() += (rule.weights[q] * g.detJ) * (B.transpose() * A * B);
  }
  // exact symmetry
  return 0.5 * (k + k.transpose());
}

std::vector<int> element_dofs(const StructuredQuadMesh& mesh, int e) {
  const auto nodes = mesh.element(e);
  std::vector<int> dofs(2 * nodes.size());
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    dofs[2 * a] = 2 * nodes[a];
    dofs[2 * a + 1] = 2 * nodes[a] + 1;
  }
  return dofs;
}

SpMat assemble(const StructuredQuadMesh& mesh, const ElementMatrixFn& provider, int threads) {
  const int ne = mesh.num_elements();
  std::vector<Mat> ke(ne);
  parallel_for(ne, threads, [&](int e) { ke[e] = provider(e); });
  const int ndof = 2 * mesh.num_nodes();
  std::vector<Eigen::Triplet<double>> trip;
  const int m = 2 * mesh.nodes_per_element();
  trip.reserve(static_cast<std::size_t>(ne) * m * m);
  for (int e = 0; e < ne; ++e) {
    const auto dofs = element_dofs(mesh, e);
    if (ke[e].rows() != m || ke[e].cols() != m)
      throw std::invalid_argument("assemble: element matrix has wrong dimension");
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) trip.emplace_back(dofs[i], dofs[j], ke[e](i, j));
  }
  SpMat K(ndof, ndof);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  return K;
}

SpMat assemble_stiffness(const StructuredQuadMesh& mesh, const MaterialFn& material,
                         const QuadratureRule& rule, int threads) {
  return assemble(
      mesh,
      [&](int e) { return element_stiffness(mesh.order, mesh.element_coords(e), material, rule); },
      threads);
}

}  // namespace fehmm
