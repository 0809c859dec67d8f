#include "fehmm/micro.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fehmm;

namespace {

MicrostructureField inclusion50() {
  MicrostructureField f;
  f.kind = FieldKind::MatrixInclusion;
  f.E_inclusion = 2.0e6;
  return f;
}

MicrostructureField sine() {
  MicrostructureField f;
  f.kind = FieldKind::SineWave;
  return f;
}

CouplingSpec spec(CouplingKind k) {
  CouplingSpec c;
  c.kind = k;
  return c;
}

const CouplingKind kAll[] = {CouplingKind::DirichletLagrange,  CouplingKind::DirichletDirect,
                             CouplingKind::PeriodicLagrange,   CouplingKind::PeriodicDirect,
                             CouplingKind::NeumannSemiDirichlet, CouplingKind::NeumannPerturbation};

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

double min_eig(const Eigen::Matrix3d& A) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(A).eigenvalues().minCoeff();
}

// fluctuation with its weighted mean removed
Vec centered_fluctuation(const MicroProblem& p, const Vec& d, const Vec& linear) {
  const Vec b = node_integrals(p.rve_mesh);
  Vec w = d - linear;
  for (int i = 0; i < 2; ++i) {
    double m = 0.0;
    for (int n = 0; n < b.size(); ++n) m += b(n) * w(2 * n + i);
    m /= b.sum();
    for (int n = 0; n < b.size(); ++n) w(2 * n + i) -= m;
  }
  return w;
}

}  // namespace

TEST(Micro, CouplingNames) {
  for (auto k : kAll) EXPECT_EQ(coupling_kind_from_string(to_string(k)), k);
  EXPECT_THROW(coupling_kind_from_string("robin"), std::invalid_argument);
  EXPECT_TRUE(is_neumann(CouplingKind::NeumannPerturbation));
  EXPECT_FALSE(is_neumann(CouplingKind::PeriodicDirect));
}

TEST(Micro, DofCountClosedForms) {
  // N nodes per edge
  EXPECT_EQ(dof_count(CouplingKind::DirichletDirect, SolveMethod::Direct, 5), 18);
  EXPECT_EQ(dof_count(CouplingKind::DirichletLagrange, SolveMethod::Lagrange, 5), 82);
  EXPECT_EQ(dof_count(CouplingKind::PeriodicDirect, SolveMethod::Direct, 5), 32);
  EXPECT_EQ(dof_count(CouplingKind::PeriodicLagrange, SolveMethod::Lagrange, 5), 68);
  EXPECT_THROW(dof_count(CouplingKind::DirichletDirect, SolveMethod::Direct, 1), std::invalid_argument);
  EXPECT_THROW(dof_count(CouplingKind::NeumannPerturbation, SolveMethod::Lagrange, 4),
               std::invalid_argument);
}

TEST(Micro, DofCountMatchesConstructedSystems) {
  const MicrostructureField f;
  for (int N = 3; N <= 12; ++N) {
    const auto p = make_micro_problem(f, N - 1, 1);
    EXPECT_EQ(MicroSolver(p, spec(CouplingKind::DirichletDirect)).system_dimension(),
              dof_count(CouplingKind::DirichletDirect, SolveMethod::Direct, N));
    EXPECT_EQ(MicroSolver(p, spec(CouplingKind::DirichletLagrange)).system_dimension(),
              dof_count(CouplingKind::DirichletLagrange, SolveMethod::Lagrange, N));
    EXPECT_EQ(MicroSolver(p, spec(CouplingKind::PeriodicDirect)).system_dimension(),
              dof_count(CouplingKind::PeriodicDirect, SolveMethod::Direct, N));
    // the periodic saddle also carries the two normalization rows the closed form leaves out
    EXPECT_EQ(MicroSolver(p, spec(CouplingKind::PeriodicLagrange)).system_dimension(),
              2 * (N * N + 2 * N));
  }
}

TEST(Micro, HomogeneousIsExact) {
  const MicrostructureField f;
  const Eigen::Matrix3d A = voigt_tensor(f.E, f.nu).voigt;
  for (int q : {1, 2})
    for (auto k : kAll) {
      const auto p = make_micro_problem(f, 4, q);
      EXPECT_LT(rel(homogenized_tensor(p, spec(k)).voigt, A), 1e-10) << to_string(k) << " q=" << q;
    }
}

TEST(Micro, StiffnessHierarchy) {
  const auto p = make_micro_problem(inclusion50(), 16, 1);
  const Eigen::Matrix3d D = homogenized_tensor(p, spec(CouplingKind::DirichletLagrange)).voigt;
  const Eigen::Matrix3d P = homogenized_tensor(p, spec(CouplingKind::PeriodicLagrange)).voigt;
  const double slack = -1e-10 * D.norm();
  for (auto nk : {CouplingKind::NeumannSemiDirichlet, CouplingKind::NeumannPerturbation}) {
    const Eigen::Matrix3d N = homogenized_tensor(p, spec(nk)).voigt;
    EXPECT_GE(min_eig(P - N), slack) << to_string(nk);
    EXPECT_GT((P - N).norm(), 1e-3 * D.norm());
  }
  EXPECT_GE(min_eig(D - P), slack);
  EXPECT_GT((D - P).norm(), 1e-3 * D.norm());
  for (const auto* A : {&D, &P}) {
    EXPECT_LT((*A - A->transpose()).norm(), 1e-10 * D.norm());
    EXPECT_GT(min_eig(*A), 0.0);
  }
}

TEST(Micro, DirectMatchesLagrange) {
  for (const auto& f : {inclusion50(), sine()}) {
    const auto p = make_micro_problem(f, 8, 1);
    AffineState s;
    s.c << 1e-4, -2e-4;
    s.H << 1e-3, 4e-4, -2e-4, -5e-4;
    const MicroSolver dl(p, spec(CouplingKind::DirichletLagrange));
    const Vec a = dl.solve_states({s}).d.col(0);
    EXPECT_LT((direct_dirichlet_solve(p, s) - a).norm() / a.norm(), 1e-10);

    const MicroSolver pl(p, spec(CouplingKind::PeriodicLagrange));
    const Vec lin = pl.linear_field(s);
    const Vec b = centered_fluctuation(p, pl.solve_states({s}).d.col(0), lin);
    const Vec c = centered_fluctuation(p, direct_periodic_solve(p, s), lin);
    EXPECT_LT((c - b).norm() / b.norm(), 1e-10);
  }
}

TEST(Micro, DirichletResponseMatchesLinearFieldOnBoundary) {
  const auto p = make_micro_problem(sine(), 6, 2);
  const MicroSolver m(p, spec(CouplingKind::DirichletLagrange));
  const AffineState s = strain_state({1e-3, -2e-3, 5e-4});
  const Vec d = m.solve_states({s}).d.col(0);
  const Vec lin = m.linear_field(s);
  for (int n : boundary_nodes(p.rve_mesh))
    EXPECT_LT((d.segment<2>(2 * n) - lin.segment<2>(2 * n)).norm(), 1e-14);
}

TEST(Micro, PeriodicFluctuationIsPeriodicWithZeroMean) {
  const auto p = make_micro_problem(inclusion50(), 8, 1);
  const MicroSolver m(p, spec(CouplingKind::PeriodicLagrange));
  const AffineState s = strain_state({1e-3, 2e-4, -7e-4});
  const Vec w = m.solve_states({s}).d.col(0) - m.linear_field(s);
  for (const auto& [a, b] : periodic_pairs(p.rve_mesh).pairs)
    EXPECT_LT((w.segment<2>(2 * a) - w.segment<2>(2 * b)).norm(), 1e-12 * w.norm());
  const Vec bm = node_integrals(p.rve_mesh);
  for (int i = 0; i < 2; ++i) {
    double mean = 0.0;
    for (int n = 0; n < bm.size(); ++n) mean += bm(n) * w(2 * n + i);
    EXPECT_LT(std::abs(mean) / bm.sum(), 1e-12 * w.norm());
  }
}

TEST(Micro, NodeIntegralsSumToArea) {
  for (int q : {1, 2}) {
    const auto p = make_micro_problem(MicrostructureField{}, 5, q, 5.0 / 3.0);
    EXPECT_NEAR(node_integrals(p.rve_mesh).sum(), p.delta * p.delta, 1e-18);
  }
}

TEST(Micro, NeumannRowsReturnAverageStrainOfLinearFields) {
  for (int q : {1, 2}) {
    const auto p = make_micro_problem(sine(), 5, q);
    const MicroSolver m(p, spec(CouplingKind::DirichletDirect));
    const Eigen::Vector3d e(1e-3, -4e-4, 6e-4);
    const SpMat G = build_constraints_neumann(p.rve_mesh);
    ASSERT_EQ(G.rows(), 3);
    const Eigen::Vector3d g = G * m.linear_field(strain_state(e));
    EXPECT_LT((g - e).norm(), 1e-12 * e.norm()) << "q=" << q;
    // rigid modes are invisible to the strain rows
    AffineState r;
    r.c << 1.0, -2.0;
    r.H << 0.0, -0.3, 0.3, 0.0;
    EXPECT_LT((G * m.linear_field(r)).norm(), 1e-12);
  }
}

TEST(Micro, NeumannBlockWithoutFactorTwo) {
  // A doubled normal diagonal would return twice the imposed normal strain;
  // the shear row keeps (n2, n1) in both readings.
  const Point n(0.3, -0.4);
  const auto B = neumann_node_block(n, 2.0);
  EXPECT_DOUBLE_EQ(B(0, 0), 0.15);
  EXPECT_DOUBLE_EQ(B(1, 1), -0.2);
  EXPECT_DOUBLE_EQ(B(2, 0), -0.2);
  EXPECT_DOUBLE_EQ(B(2, 1), 0.15);
  EXPECT_EQ(B(0, 1), 0.0);
  EXPECT_EQ(B(1, 0), 0.0);
}

TEST(Micro, NeumannNormalsAreSelfEquilibrated) {
  for (int q : {1, 2}) {
    const auto p = make_micro_problem(MicrostructureField{}, 4, q);
    Point sum = Point::Zero();
    Eigen::Matrix2d xn = Eigen::Matrix2d::Zero();
    for (const auto& [node, n] : neumann_nodal_normals(p.rve_mesh)) {
      sum += n;
      xn += p.rve_mesh.nodes[node] * n.transpose();
    }
    EXPECT_LT(sum.norm(), 1e-16);
    EXPECT_LT((xn - p.delta * p.delta * Eigen::Matrix2d::Identity()).norm(), 1e-16);
  }
}

TEST(Micro, AverageStrainAndHillMandelPerCoupling) {
  const auto p = make_micro_problem(inclusion50(), 8, 1);
  const Eigen::Vector3d e(1e-3, -3e-4, 8e-4);
  for (auto k : kAll) {
    const MicroSolver m(p, spec(k));
    const Vec d = m.solve_states({strain_state(e)}).d.col(0);
    EXPECT_LT((average_strain(p, d) - e).norm(), 1e-10 * e.norm()) << to_string(k);
    const double energy = d.dot(m.K() * d) / m.volume();
    // with the perturbation the stored K is the unperturbed stiffness
    EXPECT_NEAR(average_stress(p, d).dot(e), energy, 1e-8 * energy) << to_string(k);
  }
}

TEST(Micro, BasisRouteEqualsLiteralUnitStates) {
  const auto p = make_micro_problem(sine(), 6, 1);
  Eigen::Matrix<double, 2, Eigen::Dynamic> coords(2, 4);
  coords << 0.0, 0.125, 0.13, -0.01, 0.0, 0.01, 0.125, 0.12;
  for (auto k : {CouplingKind::DirichletLagrange, CouplingKind::PeriodicDirect,
                 CouplingKind::NeumannPerturbation}) {
    auto m = std::make_shared<const MicroSolver>(p, spec(k));
    const Point xi(0.3, -0.6);
    const MicroOperator shared = solve_micro_unit_states(m, 1, coords, xi);
    const MicroOperator fresh = solve_micro_unit_states(p, spec(k), 1, coords, xi);
    ASSERT_EQ(shared.T.cols(), 8);
    EXPECT_LT(rel(shared.T, fresh.T), 1e-10) << to_string(k);
    const Mat T = m->basis() * linearization_map(1, coords, xi);
    // the perturbed system has condition ~E / kappa, so its roundoff is larger
    const double tol = k == CouplingKind::NeumannPerturbation ? 1e-7 : 1e-12;
    EXPECT_LT(rel(shared.T, T), tol) << to_string(k);
  }
}

TEST(Micro, LinearizationMapReproducesAffineFields) {
  Eigen::Matrix<double, 2, Eigen::Dynamic> coords(2, 9);
  coords << 0, 1, 1.1, 0, 0.5, 1.05, 0.55, 0, 0.52, 0, 0, 1.2, 1, 0, 0.6, 1.1, 0.5, 0.55;
  Eigen::Vector2d c(0.3, -0.1);
  Eigen::Matrix2d H;
  H << 0.2, -0.7, 0.4, 1.3;
  for (int order : {1, 2}) {
    const int nn = order == 1 ? 4 : 9;
    const auto X = coords.leftCols(nn);
    Vec d(2 * nn);
    for (int I = 0; I < nn; ++I) d.segment<2>(2 * I) = c + H * X.col(I);
    const Point xi(-0.2, 0.45);
    const Vec a = linearization_map(order, X, xi) * d;
    const Point x = shape_geometry(order, X, xi).x;
    EXPECT_LT((a.head<2>() - (c + H * x)).norm(), 1e-13);
    EXPECT_NEAR(a(2), H(0, 0), 1e-13);
    EXPECT_NEAR(a(3), H(0, 1), 1e-13);
    EXPECT_NEAR(a(4), H(1, 0), 1e-13);
    EXPECT_NEAR(a(5), H(1, 1), 1e-13);
  }
}

TEST(Micro, StrainEnergyDropsRigidEntries) {
  const auto p = make_micro_problem(sine(), 6, 1);
  const MicroSolver m(p, spec(CouplingKind::PeriodicLagrange));
  const auto& S = m.strain_energy();
  EXPECT_EQ(S.topRows<2>().norm(), 0.0);
  EXPECT_EQ(S.leftCols<2>().norm(), 0.0);
  // skew part of H carries no energy
  Eigen::Matrix<double, 6, 1> w = Eigen::Matrix<double, 6, 1>::Zero();
  w(3) = 1.0;
  w(4) = -1.0;
  EXPECT_LT(std::abs(w.dot(m.basis_energy() * w)), 1e-8 * m.basis_energy().norm());
}

TEST(Micro, SemiDirichletConvergesInTwoIterations) {
  for (const auto& f : {inclusion50(), sine()}) {
    const auto p = make_micro_problem(f, 16, 1);
    const Eigen::Vector3d e(1e-3, -2e-4, 5e-4);
    const CouplingSpec c = spec(CouplingKind::NeumannSemiDirichlet);
    const auto r = solve_semi_dirichlet(p, e, c);
    EXPECT_LE(r.iterations, 2);
    EXPECT_LT((average_strain(p, r.d) - e).norm(), 1e-8 * e.norm());
    const double scale = r.sigma.norm() * p.delta;
    EXPECT_LT(r.zeta_A.norm(), 1e-8 * scale);
    EXPECT_LT(std::abs(r.zeta_B), 1e-8 * scale);
    ASSERT_FALSE(r.residual_history.empty());
    EXPECT_LE(r.residual_history.back(), c.newton_tol);
  }
}

TEST(Micro, SemiDirichletReadingsAgree) {
  const auto p = make_micro_problem(inclusion50(), 8, 1);
  CouplingSpec a = spec(CouplingKind::NeumannSemiDirichlet);
  CouplingSpec b = a;
  b.reading = CouplingSpec::SemiDirichletReading::Constrained;
  CouplingSpec c = a;
  c.affine_shortcut = false;
  const Eigen::Matrix3d A = homogenized_tensor(p, a).voigt;
  EXPECT_LT(rel(homogenized_tensor(p, b).voigt, A), 1e-8);
  EXPECT_LT(rel(homogenized_tensor(p, c).voigt, A), 1e-6);
}

TEST(Micro, PerturbationInsensitiveToKappa) {
  const auto p = make_micro_problem(inclusion50(), 8, 1);
  CouplingSpec c = spec(CouplingKind::NeumannPerturbation);
  c.kappa_max = 1e-5;
  const Eigen::Matrix3d ref = homogenized_tensor(p, c).voigt;
  for (double k : {1e-8, 1e-7, 1e-6}) {
    c.kappa_max = k;
    EXPECT_LT(rel(homogenized_tensor(p, c).voigt, ref), 1e-6) << k;
  }
  const Eigen::Matrix3d S = homogenized_tensor(p, spec(CouplingKind::NeumannSemiDirichlet)).voigt;
  EXPECT_LT(rel(ref, S), 1e-6);
}

TEST(Micro, PerturbationDiagonal) {
  const Vec a = perturbation_diagonal(1000, 1e-5, true, 7);
  EXPECT_EQ(a, perturbation_diagonal(1000, 1e-5, true, 7));
  EXPECT_NE(a, perturbation_diagonal(1000, 1e-5, true, 8));
  EXPECT_GT(a.minCoeff(), 0.0);
  EXPECT_LE(a.maxCoeff(), 1e-5);
  EXPECT_NEAR(a.mean(), 0.5e-5, 0.05e-5);
  EXPECT_EQ(perturbation_diagonal(5, 2.0, false, 1), Vec::Constant(5, 2.0));
}

TEST(Micro, EnrichRigidBody) {
  const auto p = make_micro_problem(MicrostructureField{}, 3, 1);
  const Vec z = Vec::Zero(2 * p.rve_mesh.num_nodes());
  const Point c(0.001, 0.002);
  const Vec d = enrich_rigid_body(p.rve_mesh, z, c, Eigen::Vector2d(1.0, 2.0), 0.5);
  for (int n = 0; n < p.rve_mesh.num_nodes(); ++n) {
    const Point r = p.rve_mesh.nodes[n] - c;
    EXPECT_NEAR(d(2 * n), 1.0 - 0.5 * r.y(), 1e-15);
    EXPECT_NEAR(d(2 * n + 1), 2.0 + 0.5 * r.x(), 1e-15);
  }
}

TEST(Micro, WindowGeometry) {
  const auto p = make_micro_problem(sine(), 4, 2, 5.0 / 3.0);
  EXPECT_NEAR(p.delta, 5.0 / 3.0 * p.epsilon, 1e-15);
  EXPECT_NEAR(p.sample_offset.x(), (p.epsilon - p.delta) / 2, 1e-15);
  EXPECT_EQ(p.rve_mesh.order, 2);
  // mesh width never exceeds epsilon / n_per_cell
  EXPECT_LE(p.delta / p.rve_mesh.nx, p.epsilon / 4 * (1 + 1e-12));
  const auto u = make_micro_problem(sine(), 4, 1);
  EXPECT_EQ(u.rve_mesh.nx, 4);
  EXPECT_EQ(u.sample_offset, Point::Zero());
}

TEST(Micro, SolveStatesMultipleColumns) {
  const auto p = make_micro_problem(inclusion50(), 6, 1);
  const MicroSolver m(p, spec(CouplingKind::PeriodicLagrange));
  const AffineState a = strain_state({1e-3, 0, 0}), b = strain_state({0, 0, 1e-3});
  AffineState ab;
  ab.H = a.H + 2.0 * b.H;
  const auto sol = m.solve_states({a, b, ab});
  ASSERT_EQ(sol.d.cols(), 3);
  EXPECT_LT((sol.d.col(0) + 2.0 * sol.d.col(1) - sol.d.col(2)).norm(), 1e-12 * sol.d.col(2).norm());
  EXPECT_EQ(sol.stress.cols(), 3);
}
