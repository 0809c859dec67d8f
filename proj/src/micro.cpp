#include "fehmm/micro.hpp"

#include "micro_internal.hpp"

#include <chrono>
#include <cmath>
#include <map>

namespace fehmm {

std::string to_string(CouplingKind kind) {
  switch (kind) {
    case CouplingKind::DirichletLagrange: return "dirichlet_lagrange";
    case CouplingKind::DirichletDirect: return "dirichlet_direct";
    case CouplingKind::PeriodicLagrange: return "periodic_lagrange";
    case CouplingKind::PeriodicDirect: return "periodic_direct";
    case CouplingKind::NeumannSemiDirichlet: return "neumann_semi_dirichlet";
    case CouplingKind::NeumannPerturbation: return "neumann_perturbation";
  }
  return "unknown";
}

CouplingKind coupling_kind_from_string(const std::string& s) {
  for (auto k : {CouplingKind::DirichletLagrange, CouplingKind::DirichletDirect,
                 CouplingKind::PeriodicLagrange, CouplingKind::PeriodicDirect,
                 CouplingKind::NeumannSemiDirichlet, CouplingKind::NeumannPerturbation})
    if (to_string(k) == s) return k;
  // short aliases
  if (s == "dirichlet") return CouplingKind::DirichletLagrange;
  if (s == "periodic") return CouplingKind::PeriodicLagrange;
  if (s == "neumann") return CouplingKind::NeumannPerturbation;
  throw std::invalid_argument("unknown coupling kind '" + s + "'");
}

bool is_neumann(CouplingKind kind) {
  return kind == CouplingKind::NeumannSemiDirichlet || kind == CouplingKind::NeumannPerturbation;
}

MicroProblem make_micro_problem(const MicrostructureField& field, int n_per_cell, int order,
                                double delta_over_epsilon) {
  if (n_per_cell < 1) throw std::invalid_argument("make_micro_problem: n_per_cell must be >= 1");
  if (!(delta_over_epsilon >= 1.0))
    throw std::invalid_argument("make_micro_problem: delta must be >= epsilon");
  MicroProblem p;
  p.field = field;
  p.epsilon = field.epsilon;
  p.delta = delta_over_epsilon * field.epsilon;
  const int n = static_cast<int>(std::ceil(n_per_cell * delta_over_epsilon - 1e-9));
  p.rve_mesh = build_rect_mesh(n, n, p.delta, p.delta, order);
  const double shift = 0.5 * (p.epsilon - p.delta);
  p.sample_offset = Point(shift, shift);
  return p;
}

AffineState strain_state(const Eigen::Vector3d& e) {
  AffineState s;
  s.H << e(0), 0.5 * e(2), 0.5 * e(2), e(1);
  return s;
}

SpMat micro_stiffness(const MicroProblem& problem) {
  return assemble_stiffness(
      problem.rve_mesh, [&problem](const Point& x) { return problem.material(x); },
      default_rule(problem.rve_mesh.order));
}

DirichletConstraints build_constraints_dirichlet(const StructuredQuadMesh& mesh) {
  DirichletConstraints c;
  for (int node : boundary_nodes(mesh)) {
    c.dofs.push_back(2 * node);
    c.dofs.push_back(2 * node + 1);
  }
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t r = 0; r < c.dofs.size(); ++r) t.emplace_back(r, c.dofs[r], 1.0);
  c.G.resize(static_cast<Eigen::Index>(c.dofs.size()), 2 * mesh.num_nodes());
  c.G.setFromTriplets(t.begin(), t.end());
  return c;
}

Vec node_integrals(const StructuredQuadMesh& mesh) {
  Vec b = Vec::Zero(mesh.num_nodes());
  const QuadratureRule rule = default_rule(mesh.order);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    const auto conn = mesh.element(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(mesh.order, c, rule.points[q]);
      for (std::size_t a = 0; a < conn.size(); ++a)
        b(conn[a]) += rule.weights[q] * g.detJ * g.N(a);
    }
  }
  return b;
}

SpMat build_constraints_periodic(const StructuredQuadMesh& mesh, const PeriodicPairs& pairs) {
  const int n = 2 * mesh.num_nodes();
  const Vec b = node_integrals(mesh);
  std::vector<Eigen::Triplet<double>> t;
  for (int m = 0; m < mesh.num_nodes(); ++m) {
    t.emplace_back(0, 2 * m, b(m));
    t.emplace_back(1, 2 * m + 1, b(m));
  }
  int row = 2;
  for (const auto& [plus, minus] : pairs.pairs)
    for (int i = 0; i < 2; ++i, ++row) {
      t.emplace_back(row, 2 * plus + i, 1.0);
      t.emplace_back(row, 2 * minus + i, -1.0);
    }
  SpMat G(row, n);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

std::vector<std::pair<int, Point>> neumann_nodal_normals(const StructuredQuadMesh& mesh) {
  // integral of N_q n ds along straight element edges
  std::map<int, Point> acc;
  const auto add = [&acc](int node, const Point& v) {
    acc.try_emplace(node, Point::Zero()).first->second += v;
  };
  const int step = mesh.order;
  for (const auto& edge : mesh.boundary_edges) {
    for (std::size_t s = 0; s + step < edge.size(); s += step) {
      const Point t = mesh.nodes[edge[s + step]] - mesh.nodes[edge[s]];
      const Point nl(t.y(), -t.x());  // outward normal times length (counterclockwise edges)
      if (step == 1) {
        add(edge[s], 0.5 * nl);
        add(edge[s + 1], 0.5 * nl);
      } else {
        add(edge[s], nl / 6.0);
        add(edge[s + 1], nl * (4.0 / 6.0));
        add(edge[s + 2], nl / 6.0);
      }
    }
  }
  return {acc.begin(), acc.end()};
}

Eigen::Matrix<double, 3, 2> neumann_node_block(const Point& n, double volume) {
  Eigen::Matrix<double, 3, 2> g;
  g << n.x(), 0.0, 0.0, n.y(), n.y(), n.x();
  return g / volume;
}

std::array<int, 2> semi_dirichlet_nodes(const StructuredQuadMesh& mesh, int A, int B) {
  if (A == -1) A = mesh.corner_nodes[0];
  if (B == -1) B = mesh.corner_nodes[1];
  if (A < 0 || A >= mesh.num_nodes() || B < 0 || B >= mesh.num_nodes() || A == B)
    throw std::invalid_argument("semi-Dirichlet: invalid node roles A/B");
  // B must not lie on the vertical through A, or rotation stays free
  if (std::abs(mesh.nodes[B].x() - mesh.nodes[A].x()) <= 1e-12 * std::sqrt(mesh.area()))
    throw std::invalid_argument("semi-Dirichlet: nodes A and B share an x1 coordinate");
  return {A, B};
}

SpMat point_rows(int n, int A, int B) {
  std::vector<Eigen::Triplet<double>> t{{0, 2 * A, 1.0}, {1, 2 * A + 1, 1.0}, {2, 2 * B + 1, 1.0}};
  SpMat P(3, n);
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

SpMat build_constraints_neumann(const StructuredQuadMesh& mesh, int node_A, int node_B) {
  const int n = 2 * mesh.num_nodes();
  const double vol = mesh.area();
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& [q, nq] : neumann_nodal_normals(mesh)) {
    const auto g = neumann_node_block(nq, vol);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c)
        if (g(r, c) != 0.0) t.emplace_back(r, 2 * q + c, g(r, c));
  }
  int rows = 3;
  if (node_A != -2 || node_B != -2) {
    const auto ab = semi_dirichlet_nodes(mesh, node_A, node_B);
    t.emplace_back(3, 2 * ab[0], 1.0);
    t.emplace_back(4, 2 * ab[0] + 1, 1.0);
    t.emplace_back(5, 2 * ab[1] + 1, 1.0);
    rows = 6;
  }
  SpMat G(rows, n);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

namespace {

template <class F>
Eigen::Vector3d average_of(const MicroProblem& problem, const Vec& d, F&& f) {
  const auto& mesh = problem.rve_mesh;
  if (d.size() != 2 * mesh.num_nodes())
    throw std::invalid_argument("average: field size does not match the RVE mesh");
  const QuadratureRule rule = default_rule(mesh.order);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  double vol = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    const auto conn = mesh.element(e);
    Vec de(2 * conn.size());
    for (std::size_t a = 0; a < conn.size(); ++a) de.segment<2>(2 * a) = d.segment<2>(2 * conn[a]);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(mesh.order, c, rule.points[q]);
      const Eigen::Vector3d eps = strain_operator(g.dNdx) * de;
      sum += rule.weights[q] * g.detJ * f(eps, g.x);
      vol += rule.weights[q] * g.detJ;
    }
  }
  return sum / vol;
}

}  // namespace

Eigen::Vector3d average_stress(const MicroProblem& problem, const Vec& d) {
  return average_of(problem, d, [&](const Eigen::Vector3d& eps, const Point& x) {
    return Eigen::Vector3d(problem.material(x) * eps);
  });
}

Eigen::Vector3d average_strain(const MicroProblem& problem, const Vec& d) {
  return average_of(problem, d, [](const Eigen::Vector3d& eps, const Point&) { return eps; });
}

// ---- MicroSolver ----

MicroSolver::MicroSolver(const MicroProblem& problem, const CouplingSpec& coupling)
    : impl_(std::make_unique<Impl>()), problem_(problem), coupling_(coupling) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& mesh = problem_.rve_mesh;
  if (mesh.domain.kind != DomainKind::Rectangle)
    throw GeometryError("MicroSolver: RVE mesh must be rectangular");
  if (problem_.delta < problem_.epsilon * (1 - 1e-12))
    throw std::invalid_argument("MicroSolver: delta must be >= epsilon");
  K_ = micro_stiffness(problem_);
  volume_ = mesh.area();
  center_ = 0.5 * (mesh.domain.corners[0] + mesh.domain.corners[2]);
  const int n = static_cast<int>(K_.rows());
  auto& im = *impl_;
  switch (coupling_.kind) {
    case CouplingKind::DirichletLagrange: {
      G_ = build_constraints_dirichlet(mesh).G;
      // unit rows on distinct dofs are independent by construction
      im.saddle = std::make_unique<SaddleSolver>(K_, G_, false);
      system_dim_ = im.saddle->dimension();
      break;
    }
    case CouplingKind::DirichletDirect: {
      auto c = build_constraints_dirichlet(mesh);
      G_ = c.G;
      im.boundary_dofs = c.dofs;
      im.spd = std::make_unique<SpdSolver>(K_, im.boundary_dofs);
      system_dim_ = im.spd->reduced_dimension();
      break;
    }
    case CouplingKind::PeriodicLagrange: {
      G_ = build_constraints_periodic(mesh, periodic_pairs(mesh));
      im.saddle = std::make_unique<SaddleSolver>(K_, G_, true);
      system_dim_ = im.saddle->dimension();
      break;
    }
    case CouplingKind::PeriodicDirect: {
      G_ = build_constraints_periodic(mesh, periodic_pairs(mesh));
      const int Nx = mesh.nodes_x(), Ny = mesh.nodes_y();
      im.reduce.assign(n, -1);
      for (int j = 0; j < Ny; ++j)
        for (int i = 0; i < Nx; ++i) {
          const int mi = i == Nx - 1 ? 0 : i, mj = j == Ny - 1 ? 0 : j;
          const int r = mj * (Nx - 1) + mi;
          im.reduce[2 * mesh.node_id(i, j)] = 2 * r;
          im.reduce[2 * mesh.node_id(i, j) + 1] = 2 * r + 1;
        }
      im.reduced_dim = 2 * (Nx - 1) * (Ny - 1);
      // fluctuation of the master of node (0,0) fixed through identity rows
      std::vector<Eigen::Triplet<double>> t;
      double diag = 0.0;
      for (int c = 0; c < K_.outerSize(); ++c)
        for (SpMat::InnerIterator it(K_, c); it; ++it) {
          const int r = im.reduce[it.row()], cc = im.reduce[c];
          if (r < 2 || cc < 2) continue;
          t.emplace_back(r, cc, it.value());
          if (it.row() == c) diag = std::max(diag, it.value());
        }
      t.emplace_back(0, 0, diag);
      t.emplace_back(1, 1, diag);
      SpMat Kr(im.reduced_dim, im.reduced_dim);
      Kr.setFromTriplets(t.begin(), t.end());
      im.spd = std::make_unique<SpdSolver>(Kr, std::vector<int>{});
      system_dim_ = im.spd->reduced_dimension();
      break;
    }
    case CouplingKind::NeumannPerturbation: {
      im.Gs = build_constraints_neumann(mesh);
      G_ = im.Gs;
      if (!(coupling_.kappa_max > 0))
        throw std::invalid_argument("MicroSolver: kappa_max must be > 0");
      const Vec kappa =
          perturbation_diagonal(n, coupling_.kappa_max, coupling_.kappa_random, coupling_.seed);
      SpMat Kp = K_;
      for (int i = 0; i < n; ++i) Kp.coeffRef(i, i) += kappa(i);
      im.saddle = std::make_unique<SaddleSolver>(Kp, im.Gs, true);
      system_dim_ = im.saddle->dimension();
      break;
    }
    case CouplingKind::NeumannSemiDirichlet: {
      im.Gs = build_constraints_neumann(mesh);
      im.nodes_AB = semi_dirichlet_nodes(mesh, coupling_.node_A, coupling_.node_B);
      G_ = build_constraints_neumann(mesh, im.nodes_AB[0], im.nodes_AB[1]);
      im.P = point_rows(n, im.nodes_AB[0], im.nodes_AB[1]);
      im.sigma_scale = problem_.material(center_)(0, 0);
      im.saddle = std::make_unique<SaddleSolver>(K_, im.P, true);
      system_dim_ = im.saddle->dimension();
      init_semi_dirichlet();
      break;
    }
  }
  // six basis responses: translations t1, t2 and gradients H11, H12, H21, H22
  std::vector<AffineState> basis_states(6);
  basis_states[0].c = Eigen::Vector2d(1, 0);
  basis_states[1].c = Eigen::Vector2d(0, 1);
  basis_states[2].H(0, 0) = 1;
  basis_states[3].H(0, 1) = 1;
  basis_states[4].H(1, 0) = 1;
  basis_states[5].H(1, 1) = 1;
  basis_ = solve_states(basis_states).d;
  basis_energy_ = basis_.transpose() * (K_ * basis_) / volume_;
  basis_energy_ = 0.5 * (basis_energy_ + basis_energy_.transpose()).eval();
  // unit strains e1, e2, e3 (engineering shear) in terms of the basis
  Eigen::Matrix<double, 6, 3> S = Eigen::Matrix<double, 6, 3>::Zero();
  S(2, 0) = 1;
  S(5, 1) = 1;
  S(3, 2) = 0.5;
  S(4, 2) = 0.5;
  A0_.voigt = S.transpose() * basis_energy_ * S;
  // Translations and the rotation carry no energy under any coupling, but the
  // raw product keeps their roundoff (amplified by 1/|K|) and that leaks into
  // ill-conditioned macro systems. Rebuild from the strain part only.
  Eigen::Matrix<double, 3, 6> B = Eigen::Matrix<double, 3, 6>::Zero();
  B(0, 2) = 1;
  B(1, 5) = 1;
  B(2, 3) = 1;
  B(2, 4) = 1;
  strain_energy_ = B.transpose() * A0_.voigt * B;
  const auto t1 = std::chrono::steady_clock::now();
  setup_seconds_ = std::chrono::duration<double>(t1 - t0).count();
}

MicroSolver::~MicroSolver() = default;

Vec MicroSolver::linear_field(const AffineState& s) const {
  const auto& mesh = problem_.rve_mesh;
  Vec d(2 * mesh.num_nodes());
  for (int m = 0; m < mesh.num_nodes(); ++m)
    d.segment<2>(2 * m) = s.c + s.H * (mesh.nodes[m] - center_);
  return d;
}

StateSolution MicroSolver::solve_states(const std::vector<AffineState>& states) const {
  const int n = static_cast<int>(K_.rows());
  const int k = static_cast<int>(states.size());
  Mat dlin(n, k);
  for (int s = 0; s < k; ++s) dlin.col(s) = linear_field(states[s]);
  StateSolution out;
  const auto& im = *impl_;
  switch (coupling_.kind) {
    case CouplingKind::DirichletLagrange:
    case CouplingKind::PeriodicLagrange: {
      auto [d, lambda] = im.saddle->solve(Mat::Zero(n, k), G_ * dlin);
      out.d = std::move(d);
      out.lambda = std::move(lambda);
      break;
    }
    case CouplingKind::DirichletDirect: {
      Mat vals(im.boundary_dofs.size(), k);
      for (std::size_t i = 0; i < im.boundary_dofs.size(); ++i)
        vals.row(i) = dlin.row(im.boundary_dofs[i]);
      out.d = im.spd->solve(Mat::Zero(n, k), vals);
      break;
    }
    case CouplingKind::PeriodicDirect: {
      // K w = -K d_lin on the periodic subspace
      const Mat f = -(K_ * dlin);
      Mat fr = Mat::Zero(im.reduced_dim, k);
      for (int i = 0; i < n; ++i) fr.row(im.reduce[i]) += f.row(i);
      fr.topRows(2).setZero();
      const Mat wr = im.spd->solve(fr, Mat(0, k));
      out.d = dlin;
      for (int i = 0; i < n; ++i) out.d.row(i) += wr.row(im.reduce[i]);
      break;
    }
    case CouplingKind::NeumannPerturbation: {
      auto [d, lambda] = im.saddle->solve(Mat::Zero(n, k), im.Gs * dlin);
      for (int s = 0; s < k; ++s) {
        const double rot = 0.5 * (states[s].H(1, 0) - states[s].H(0, 1));
        d.col(s) = enrich_rigid_body(problem_.rve_mesh, d.col(s), center_, states[s].c, rot);
      }
      out.d = std::move(d);
      out.lambda = std::move(lambda);
      break;
    }
    case CouplingKind::NeumannSemiDirichlet: {
      const auto res = solve_semi_dirichlet_states(states);
      out.d.resize(n, k);
      out.lambda.resize(3, k);
      out.stress.resize(3, k);
      for (int s = 0; s < k; ++s) {
        out.d.col(s) = res[s].d;
        out.lambda.col(s) << res[s].zeta_A, res[s].zeta_B;
        out.stress.col(s) = res[s].sigma;
        out.iterations.push_back(res[s].iterations);
      }
      return out;
    }
  }
  out.stress.resize(3, k);
  for (int s = 0; s < k; ++s) out.stress.col(s) = average_stress(problem_, out.d.col(s));
  return out;
}

// ---- micro operator ----

Mat linearization_map(int macro_order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                      const Point& xi) {
  const ShapeGeom g = shape_geometry(macro_order, coords, xi);
  const int nn = static_cast<int>(g.N.size());
  Mat L = Mat::Zero(6, 2 * nn);
  for (int I = 0; I < nn; ++I)
    for (int i = 0; i < 2; ++i) {
      const int col = 2 * I + i;
      L(i, col) = g.N(I);
      // H_{i b} = dN_I/dx_b, basis order H11, H12, H21, H22
      L(2 + 2 * i, col) = g.dNdx(I, 0);
      L(3 + 2 * i, col) = g.dNdx(I, 1);
    }
  return L;
}

MicroOperator solve_micro_unit_states(std::shared_ptr<const MicroSolver> solver, int macro_order,
                                      const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                                      const Point& xi) {
  const Mat L = linearization_map(macro_order, coords, xi);
  std::vector<AffineState> states(L.cols());
  for (int col = 0; col < L.cols(); ++col) {
    states[col].c = L.col(col).head<2>();
    states[col].H << L(2, col), L(3, col), L(4, col), L(5, col);
  }
  StateSolution sol = solver->solve_states(states);
  MicroOperator op;
  op.K_mic = solver->K();
  op.G = solver->G();
  op.T = std::move(sol.d);
  op.Lambda = std::move(sol.lambda);
  op.A0 = solver->homogenized();
  const QuadratureRule rule = default_rule(macro_order);
  for (std::size_t q = 0; q < rule.points.size(); ++q)
    if ((rule.points[q] - xi).norm() < 1e-14)
      op.weight = rule.weights[q] * shape_geometry(macro_order, coords, xi).detJ;
  op.factorization = std::move(solver);
  return op;
}

MicroOperator solve_micro_unit_states(const MicroProblem& problem, const CouplingSpec& coupling,
                                      int macro_order,
                                      const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                                      const Point& xi) {
  return solve_micro_unit_states(std::make_shared<const MicroSolver>(problem, coupling),
                                 macro_order, coords, xi);
}

ElasticityTensor homogenized_tensor(const MicroProblem& problem, const CouplingSpec& coupling) {
  return MicroSolver(problem, coupling).homogenized();
}

}  // namespace fehmm
