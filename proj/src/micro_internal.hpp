#pragma once

#include "fehmm/micro.hpp"

#include <array>

namespace fehmm {

struct MicroSolver::Impl {
  std::unique_ptr<SaddleSolver> saddle;
  std::unique_ptr<SpdSolver> spd;
  // DirichletDirect
  std::vector<int> boundary_dofs;
  // PeriodicDirect: full dof -> reduced dof
  std::vector<int> reduce;
  int reduced_dim = 0;
  // Neumann
  SpMat Gs;  // strain rows only
  SpMat P;   // semi-Dirichlet point rows (A_x, A_y, B_y)
  std::array<int, 2> nodes_AB{-1, -1};
  Eigen::Matrix4d J = Eigen::Matrix4d::Zero();  // d(R)/d(sigma, eta)
  double sigma_scale = 1.0;
};

// Default node roles for semi-Dirichlet point constraints.
std::array<int, 2> semi_dirichlet_nodes(const StructuredQuadMesh& mesh, int A, int B);

// Point rows A_x, A_y, B_y.
SpMat point_rows(int n, int A, int B);

}  // namespace fehmm
