#pragma once

#include "fehmm/fem.hpp"
#include "fehmm/material.hpp"
#include "fehmm/mesh.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace fehmm {

enum class CouplingKind {
  DirichletLagrange,
  DirichletDirect,
  PeriodicLagrange,
  PeriodicDirect,
  NeumannSemiDirichlet,
  NeumannPerturbation
};

std::string to_string(CouplingKind kind);
CouplingKind coupling_kind_from_string(const std::string& s);
bool is_neumann(CouplingKind kind);

struct CouplingSpec {
  CouplingKind kind = CouplingKind::PeriodicLagrange;
  // NeumannPerturbation: kappa drawn uniformly from (0, kappa_max] per diagonal
  // entry, or kappa_max everywhere when kappa_random is false.
  double kappa_max = 1e-5;
  bool kappa_random = true;
  std::uint64_t seed = 1;
  // NeumannSemiDirichlet: node A fixed in x1 and x2, node B fixed in x2 and
  // slid by eta. -1 selects the lower-left / lower-right corner.
  int node_A = -1;
  int node_B = -1;
  double newton_tol = 1e-8;
  int newton_max_iter = 10;
  // Jacobian of the stress iteration from unit-size differences (exact for
  // the affine residual); false uses 1e-6 relative steps and the full
  // four-unknown Newton update.
  bool affine_shortcut = true;
  // StressIteration: outer unknowns (sigma, eta), strain rows enforced by the
  // outer loop. Constrained: strain rows in the saddle system, eta the only
  // outer unknown.
  enum class SemiDirichletReading { StressIteration, Constrained };
  SemiDirichletReading reading = SemiDirichletReading::StressIteration;
};

struct MicroProblem {
  StructuredQuadMesh rve_mesh;  // covers [0, delta]^2
  MicrostructureField field;    // period field.epsilon
  double delta = 0.005;
  double epsilon = 0.005;
  // RVE point y sees the field at y + sample_offset
  Point sample_offset = Point::Zero();

  Eigen::Matrix3d material(const Point& y) const { return sample_field(field, y + sample_offset).voigt; }
};

// RVE of side delta = delta_over_epsilon * epsilon meshed with h <= epsilon / n_per_cell.
// The window is centered on a unit cell, so delta = epsilon samples exactly [0, epsilon]^2.
MicroProblem make_micro_problem(const MicrostructureField& field, int n_per_cell, int order,
                                double delta_over_epsilon = 1.0);

// Affine macro state u(y) = c + H (y - y_center) on the RVE.
struct AffineState {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
};

AffineState strain_state(const Eigen::Vector3d& voigt_strain);

// ---- constraint construction ----

struct DirichletConstraints {
  SpMat G;                 // one unit row per boundary dof
  std::vector<int> dofs;   // constrained dof per row
};
DirichletConstraints build_constraints_dirichlet(const StructuredQuadMesh& rve_mesh);

// Two normalization rows (b_m = integral of N_m) followed by +1/-1 pair rows.
SpMat build_constraints_periodic(const StructuredQuadMesh& rve_mesh, const PeriodicPairs& pairs);

// Integrals of N_m over the mesh.
Vec node_integrals(const StructuredQuadMesh& mesh);

// Boundary-integrated nodal normals (equal to the discrete normals for Q4).
std::vector<std::pair<int, Point>> neumann_nodal_normals(const StructuredQuadMesh& mesh);

// 3 x 2 block (1/|K|) [[n1, 0], [0, n2], [n2, n1]].
Eigen::Matrix<double, 3, 2> neumann_node_block(const Point& n, double volume);

// Three average-strain rows; with semi-Dirichlet roles, three point rows follow
// (A_x, A_y, B_y).
SpMat build_constraints_neumann(const StructuredQuadMesh& rve_mesh, int node_A = -2,
                                int node_B = -2);

// ---- micro solver ----

struct StateSolution {
  Mat d;                    // micro displacements, one column per state
  Mat lambda;               // multipliers (empty for direct methods)
  Eigen::Matrix<double, 3, Eigen::Dynamic> stress;  // volume-average stress per state
  std::vector<int> iterations;                      // semi-Dirichlet only
};

struct SemiDirichletResult {
  Vec d;
  Eigen::Vector3d sigma = Eigen::Vector3d::Zero();
  double eta = 0.0;
  int iterations = 0;
  Eigen::Vector2d zeta_A = Eigen::Vector2d::Zero();
  double zeta_B = 0.0;
  std::vector<double> residual_history;
};

// Assembles K^mic and the coupling, factorizes once, solves any number of
// affine macro states against the stored factorization.
class MicroSolver {
 public:
  MicroSolver(const MicroProblem& problem, const CouplingSpec& coupling);
  ~MicroSolver();

  StateSolution solve_states(const std::vector<AffineState>& states) const;
  // NeumannSemiDirichlet only: per-state iteration details.
  std::vector<SemiDirichletResult> solve_semi_dirichlet_states(
      const std::vector<AffineState>& states) const;

  const MicroProblem& problem() const { return problem_; }
  const CouplingSpec& coupling() const { return coupling_; }
  const SpMat& K() const { return K_; }
  const SpMat& G() const { return G_; }
  double volume() const { return volume_; }
  Point center() const { return center_; }
  // dimension of the factorized system
  int system_dimension() const { return system_dim_; }
  Vec linear_field(const AffineState& s) const;

  // Responses to the six basis states (t1, t2, H11, H12, H21, H22).
  const Mat& basis() const { return basis_; }
  // basis()^T K basis() / |K|
  const Eigen::Matrix<double, 6, 6>& basis_energy() const { return basis_energy_; }
  // basis_energy with the exactly vanishing rigid-mode entries removed
  const Eigen::Matrix<double, 6, 6>& strain_energy() const { return strain_energy_; }
  const ElasticityTensor& homogenized() const { return A0_; }
  double setup_seconds() const { return setup_seconds_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  MicroProblem problem_;
  CouplingSpec coupling_;
  SpMat K_, G_;
  double volume_ = 0.0;
  Point center_;
  int system_dim_ = 0;
  Mat basis_;
  Eigen::Matrix<double, 6, 6> basis_energy_;
  Eigen::Matrix<double, 6, 6> strain_energy_;
  ElasticityTensor A0_;
  double setup_seconds_ = 0.0;

  void init_semi_dirichlet();
};

// Micro stiffness of the RVE.
SpMat micro_stiffness(const MicroProblem& problem);

// Volume-average Voigt stress of a micro displacement field.
Eigen::Vector3d average_stress(const MicroProblem& problem, const Vec& d);
// Volume-average Voigt strain (engineering shear).
Eigen::Vector3d average_strain(const MicroProblem& problem, const Vec& d);

// ---- micro operator at a macro quadrature point ----

struct MicroOperator {
  SpMat K_mic;
  SpMat G;
  Mat T;       // (2 M_mic) x (2 N_node)
  Mat Lambda;  // one column per macro unit state
  ElasticityTensor A0;
  std::shared_ptr<const MicroSolver> factorization;
  double weight = 0.0;  // quadrature weight times det J at the macro point
};

// 6 x 2N_node map from macro element dofs to the basis-state amplitudes at xi.
Mat linearization_map(int macro_order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                      const Point& xi);

// Solves every macro unit state (I, x_i) of the element at xi against the
// shared factorization.
MicroOperator solve_micro_unit_states(std::shared_ptr<const MicroSolver> solver, int macro_order,
                                      const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                                      const Point& xi);

MicroOperator solve_micro_unit_states(const MicroProblem& problem, const CouplingSpec& coupling,
                                      int macro_order,
                                      const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                                      const Point& xi);

// ---- Neumann techniques ----

SemiDirichletResult solve_semi_dirichlet(const MicroProblem& problem,
                                         const Eigen::Vector3d& target_strain,
                                         const CouplingSpec& spec);

Vec solve_perturbed(const MicroProblem& problem, const Eigen::Vector3d& target_strain,
                    const CouplingSpec& spec);

// Adds a translation and an infinitesimal rotation about center.
Vec enrich_rigid_body(const StructuredQuadMesh& mesh, const Vec& d, const Point& center,
                      const Eigen::Vector2d& translation, double rotation);

// Per-dof perturbation values, uniform in (0, kappa_max].
Vec perturbation_diagonal(int n, double kappa_max, bool random, std::uint64_t seed);

// ---- homogenized tensor and direct methods ----

ElasticityTensor homogenized_tensor(const MicroProblem& problem, const CouplingSpec& coupling);

Vec direct_dirichlet_solve(const MicroProblem& problem, const AffineState& state);
Vec direct_periodic_solve(const MicroProblem& problem, const AffineState& state);

enum class SolveMethod { Direct, Lagrange };

// Closed-form system dimensions for N nodes per edge.
int dof_count(CouplingKind kind, SolveMethod method, int N);

}  // namespace fehmm
