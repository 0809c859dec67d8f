#pragma once

#include "fehmm/material.hpp"
#include "fehmm/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fehmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- quadrature ----

struct QuadratureRule {
  std::vector<Point> points;
  std::vector<double> weights;
  int degree = 0;  // exact for tensor polynomials up to this degree per variable
};

QuadratureRule gauss_legendre_1d(int n);  // points stored in x, y = 0
QuadratureRule gauss_rule(int n);         // n x n tensor rule on [-1,1]^2
QuadratureRule default_rule(int order);   // 2x2 for Q4, 3x3 for Q9

// ---- shape functions ----

struct ShapeEval {
  Eigen::VectorXd N;                          // values per node
  Eigen::Matrix<double, Eigen::Dynamic, 2> dN;  // d/dxi, d/deta per node
};

ShapeEval shape_functions(int order, const Point& xi);

// Reference coordinates of the element nodes in element node order.
std::vector<Point> reference_nodes(int order);

// Physical gradients and Jacobian determinant at xi.
struct ShapeGeom {
  Eigen::VectorXd N;
  Eigen::Matrix<double, Eigen::Dynamic, 2> dNdx;
  double detJ = 0.0;
  Point x;
};

ShapeGeom shape_geometry(int order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                         const Point& xi);

// 3 x 2n strain operator, rows (11, 22, 12) with engineering shear.
Eigen::Matrix<double, 3, Eigen::Dynamic> strain_operator(
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& dNdx);

// ---- element and assembly ----

using MaterialFn = std::function<Eigen::Matrix3d(const Point&)>;

Mat element_stiffness(int order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                      const MaterialFn& material, const QuadratureRule& rule);

using ElementMatrixFn = std::function<Mat(int element)>;

// Scatter-add in ascending element order; the provider may be evaluated in any
// order (optionally on several threads) without changing the result.
SpMat assemble(const StructuredQuadMesh& mesh, const ElementMatrixFn& provider, int threads = 1);

SpMat assemble_stiffness(const StructuredQuadMesh& mesh, const MaterialFn& material,
                         const QuadratureRule& rule, int threads = 1);

std::vector<int> element_dofs(const StructuredQuadMesh& mesh, int e);

// ---- solvers ----

// Sparse Cholesky of the reduced matrix after eliminating fixed dofs.
class SpdSolver {
 public:
  SpdSolver(const SpMat& K, std::vector<int> fixed_dofs);
  ~SpdSolver();
  SpdSolver(const SpdSolver&) = delete;
  SpdSolver& operator=(const SpdSolver&) = delete;

  // Solve K d = F with d[fixed] = values. F and values may have several columns.
  Mat solve(const Mat& F, const Mat& fixed_values) const;
  int reduced_dimension() const { return static_cast<int>(free_.size()); }
  const std::vector<int>& free_dofs() const { return free_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  SpMat K_;
  std::vector<int> fixed_, free_;
};

Vec solve_spd(const SpMat& K, const Vec& F, const std::vector<std::pair<int, double>>& fixed);

struct ConstrainedSystem {
  SpMat K;
  SpMat G;
  Mat rhs_primal;
  Mat rhs_constraint;
};

// LU factorization of [[K, G^T], [G, 0]], built once and reused.
class SaddleSolver {
 public:
  SaddleSolver(const SpMat& K, const SpMat& G, bool check_rank = true);
  ~SaddleSolver();
  SaddleSolver(const SaddleSolver&) = delete;
  SaddleSolver& operator=(const SaddleSolver&) = delete;

  // Returns (d, lambda); columns correspond to right-hand sides.
  std::pair<Mat, Mat> solve(const Mat& rhs_primal, const Mat& rhs_constraint) const;
  int dimension() const { return n_ + m_; }
  int primal_dimension() const { return n_; }
  int constraint_rows() const { return m_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  SpMat K_, G_;
  int n_ = 0, m_ = 0;
};

std::pair<Mat, Mat> solve_saddle(const ConstrainedSystem& system);

// Row indices of G that are linearly dependent on earlier rows (empty if full rank).
std::vector<int> dependent_rows(const SpMat& G);

// ---- norms ----

double norm_L2(const StructuredQuadMesh& mesh, const Vec& d);
double norm_H1(const StructuredQuadMesh& mesh, const Vec& d);
double norm_energy(const StructuredQuadMesh& mesh, const Vec& d, const MaterialFn& material);

}  // namespace fehmm
