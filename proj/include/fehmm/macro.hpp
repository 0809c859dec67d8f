#pragma once

#include "fehmm/fem.hpp"
#include "fehmm/micro.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fehmm {

struct DirichletBC {
  int node = 0;
  int dir = 0;
  double value = 0.0;
};

using LoadFn = std::function<Eigen::Vector2d(const Point&)>;

// Constant traction on one boundary edge (0 bottom, 1 right, 2 top, 3 left).
struct LineLoad {
  int edge = 1;
  Eigen::Vector2d traction = Eigen::Vector2d(0.0, -1.0);
};

LoadFn constant_load(const Eigen::Vector2d& f);

struct MacroProblem {
  StructuredQuadMesh mesh;
  LoadFn volume_load = constant_load(Eigen::Vector2d(0.0, -10.0));
  std::optional<LineLoad> line_load;
  std::vector<DirichletBC> dirichlet;
  MicroProblem micro;
  CouplingSpec coupling;
  int threads = 1;
};

// Both components fixed to zero on the left edge.
std::vector<DirichletBC> clamp_left_edge(const StructuredQuadMesh& mesh);

// Unit square clamped at x = 0.
StructuredQuadMesh square_cantilever_mesh(int n, int order);
// Tapered cantilever: left height 1, length 0.5, taper half-angle 30.4 degrees.
struct TaperedGeometry {
  double left_height = 1.0;
  double length = 0.5;
  double alpha_deg = 30.4;
};
StructuredQuadMesh tapered_cantilever_mesh(int n, int order, const TaperedGeometry& g = {});

struct QpState {
  int element = 0;
  int qp = 0;
  Point xi = Point::Zero();
  Point x = Point::Zero();
  double weight = 0.0;  // quadrature weight times det J
  Eigen::Vector3d strain = Eigen::Vector3d::Zero();
  Eigen::Vector3d stress = Eigen::Vector3d::Zero();
};

struct MacroSolution {
  StructuredQuadMesh mesh;
  Vec u_H;
  ElasticityTensor A0;
  std::shared_ptr<const MicroSolver> micro;  // null for single-scale solves
  std::vector<QpState> per_qp;               // element-major, rule order
  SpMat K;                                   // macro stiffness before BC
  Vec F;
  double solve_seconds = 0.0;
  double micro_seconds = 0.0;
};

// Literal k = sum_l (w_l / |K_l|) T_l^T K^mic T_l.
Mat macro_element_stiffness(const std::vector<MicroOperator>& ops);

// Same quantity through the basis energy of a shared micro solver.
Mat macro_element_stiffness(int order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                            const MicroSolver& micro);

// Consistent nodal loads from the volume load and the optional line load.
Vec load_vector(const StructuredQuadMesh& mesh, const LoadFn& volume_load,
                const std::optional<LineLoad>& line_load);

MacroSolution assemble_and_solve(const MacroProblem& problem);

// Same pipeline with an already factorized micro problem.
MacroSolution assemble_and_solve(const MacroProblem& problem,
                                 std::shared_ptr<const MicroSolver> micro);

MacroSolution single_scale_solve(const StructuredQuadMesh& mesh, const ElasticityTensor& A0,
                                 const LoadFn& volume_load,
                                 const std::optional<LineLoad>& line_load,
                                 const std::vector<DirichletBC>& dirichlet, int threads = 1);

struct MicroRecovery {
  Vec d;
  // perturbation responses already carry the macro translation and rotation
  bool rigid_body_enriched = false;
};

// d^h = T d^H_element at (element, qp).
MicroRecovery recover_micro(const MacroSolution& solution, int element, int qp);

// Index into per_qp of the quadrature point closest to x.
int nearest_qp(const MacroSolution& solution, const Point& x);

// Sum over quadrature points of (w / |K|) d^hT K^mic d^h.
double micro_energy_sum(const MacroSolution& solution);

void export_vtk(const std::string& path, const MacroSolution& solution);
void export_qp_csv(const std::string& path, const MacroSolution& solution);

}  // namespace fehmm
