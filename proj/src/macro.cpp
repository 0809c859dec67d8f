#include "fehmm/macro.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace fehmm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec element_values(const StructuredQuadMesh& mesh, const Vec& u, int e) {
  const auto conn = mesh.element(e);
  Vec ue(2 * conn.size());
  for (std::size_t a = 0; a < conn.size(); ++a) ue.segment<2>(2 * a) = u.segment<2>(2 * conn[a]);
  return ue;
}

// true if element e is a translate of element 0
bool same_shape(const StructuredQuadMesh& mesh, int e) {
  const auto c0 = mesh.element_coords(0);
  const auto ce = mesh.element_coords(e);
  const double scale = (c0.col(2) - c0.col(0)).norm();
  for (int a = 1; a < c0.cols(); ++a)
    if (((ce.col(a) - ce.col(0)) - (c0.col(a) - c0.col(0))).norm() > 1e-13 * scale) return false;
  return true;
}

void fill_qp_states(MacroSolution& s) {
  const QuadratureRule rule = default_rule(s.mesh.order);
  s.per_qp.clear();
  s.per_qp.reserve(static_cast<std::size_t>(s.mesh.num_elements()) * rule.points.size());
  for (int e = 0; e < s.mesh.num_elements(); ++e) {
    const auto c = s.mesh.element_coords(e);
    const Vec ue = element_values(s.mesh, s.u_H, e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(s.mesh.order, c, rule.points[q]);
      QpState st;
      st.element = e;
      st.qp = static_cast<int>(q);
      st.xi = rule.points[q];
      st.x = g.x;
      st.weight = rule.weights[q] * g.detJ;
      st.strain = strain_operator(g.dNdx) * ue;
      st.stress = s.A0.voigt * st.strain;
      s.per_qp.push_back(st);
    }
  }
}

MacroSolution solve_with(const StructuredQuadMesh& mesh, const ElementMatrixFn& provider,
                         const LoadFn& volume_load, const std::optional<LineLoad>& line_load,
                         const std::vector<DirichletBC>& dirichlet, int threads) {
  MacroSolution s;
  s.mesh = mesh;
  s.K = assemble(mesh, provider, threads);
  s.F = load_vector(mesh, volume_load, line_load);
  std::vector<std::pair<int, double>> fixed;
  fixed.reserve(dirichlet.size());
  for (const auto& bc : dirichlet) {
    if (bc.node < 0 || bc.node >= mesh.num_nodes() || bc.dir < 0 || bc.dir > 1)
      throw std::invalid_argument("macro: Dirichlet condition out of range");
    fixed.emplace_back(2 * bc.node + bc.dir, bc.value);
  }
  const auto t0 = std::chrono::steady_clock::now();
  s.u_H = solve_spd(s.K, s.F, fixed);
  s.solve_seconds = seconds_since(t0);
  return s;
}

}  // namespace

LoadFn constant_load(const Eigen::Vector2d& f) {
  return [f](const Point&) { return f; };
}

std::vector<DirichletBC> clamp_left_edge(const StructuredQuadMesh& mesh) {
  std::vector<DirichletBC> bc;
  for (int node : mesh.boundary_edges[3]) {
    bc.push_back({node, 0, 0.0});
    bc.push_back({node, 1, 0.0});
  }
  return bc;
}

StructuredQuadMesh square_cantilever_mesh(int n, int order) {
  return build_rect_mesh(n, n, 1.0, 1.0, order);
}

StructuredQuadMesh tapered_cantilever_mesh(int n, int order, const TaperedGeometry& g) {
  return build_tapered_mesh(n, n, tapered_corners(g.left_height, g.length, g.alpha_deg), order);
}

Mat macro_element_stiffness(const std::vector<MicroOperator>& ops) {
  if (ops.empty()) throw std::invalid_argument("macro_element_stiffness: no micro operators");
  const int nd = static_cast<int>(ops.front().T.cols());
  Mat k = Mat::Zero(nd, nd);
  for (const auto& op : ops) {
    if (op.T.cols() != nd || op.T.rows() != op.K_mic.rows())
      throw std::invalid_argument("macro_element_stiffness: T does not match the element dofs");
    if (!op.factorization) throw std::invalid_argument("macro_element_stiffness: missing RVE");
    const double vol = op.factorization->volume();
    k += (op.weight / vol) * (op.T.transpose() * (op.K_mic * op.T));
  }
  return 0.5 * (k + k.transpose());
}

Mat macro_element_stiffness(int order, const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                            const MicroSolver& micro) {
  const QuadratureRule rule = default_rule(order);
  const int nd = 2 * static_cast<int>(coords.cols());
  Mat k = Mat::Zero(nd, nd);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const Mat L = linearization_map(order, coords, rule.points[q]);
    const double w = rule.weights[q] * shape_geometry(order, coords, rule.points[q]).detJ;
    // (w/|K|) L^T (D^T K D) L with D^T K D = |K| * basis_energy
    k += w * (L.transpose() * micro.strain_energy() * L);
  }
  return 0.5 * (k + k.transpose());
}

Vec load_vector(const StructuredQuadMesh& mesh, const LoadFn& volume_load,
                const std::optional<LineLoad>& line_load) {
  Vec F = Vec::Zero(2 * mesh.num_nodes());
  const QuadratureRule rule = default_rule(mesh.order);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    const auto conn = mesh.element(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(mesh.order, c, rule.points[q]);
      const Eigen::Vector2d f = volume_load ? volume_load(g.x) : Eigen::Vector2d::Zero();
      for (std::size_t a = 0; a < conn.size(); ++a)
        F.segment<2>(2 * conn[a]) += rule.weights[q] * g.detJ * g.N(a) * f;
    }
  }
  if (line_load) {
    if (line_load->edge < 0 || line_load->edge > 3)
      throw std::invalid_argument("load_vector: line load edge must be 0..3");
    const auto& edge = mesh.boundary_edges[line_load->edge];
    const QuadratureRule g1 = gauss_legendre_1d(mesh.order + 1);
    const int step = mesh.order;
    for (std::size_t s = 0; s + step < edge.size(); s += step) {
      const double len = (mesh.nodes[edge[s + step]] - mesh.nodes[edge[s]]).norm();
      for (std::size_t q = 0; q < g1.points.size(); ++q) {
        const double t = g1.points[q].x();
        const double w = g1.weights[q] * 0.5 * len;
        if (step == 1) {
          F.segment<2>(2 * edge[s]) += w * 0.5 * (1 - t) * line_load->traction;
          F.segment<2>(2 * edge[s + 1]) += w * 0.5 * (1 + t) * line_load->traction;
        } else {
          F.segment<2>(2 * edge[s]) += w * 0.5 * t * (t - 1) * line_load->traction;
          F.segment<2>(2 * edge[s + 1]) += w * (1 - t * t) * line_load->traction;
          F.segment<2>(2 * edge[s + 2]) += w * 0.5 * t * (t + 1) * line_load->traction;
        }
      }
    }
  }
  return F;
}

MacroSolution assemble_and_solve(const MacroProblem& problem) {
  const auto t0 = std::chrono::steady_clock::now();
  auto micro = std::make_shared<const MicroSolver>(problem.micro, problem.coupling);
  const double tm = seconds_since(t0);
  MacroSolution s = assemble_and_solve(problem, std::move(micro));
  s.micro_seconds = tm;
  return s;
}

MacroSolution assemble_and_solve(const MacroProblem& problem,
                                 std::shared_ptr<const MicroSolver> micro) {
  const auto& mesh = problem.mesh;
  // identical (translated) elements share one element matrix
  const Mat k0 = macro_element_stiffness(mesh.order, mesh.element_coords(0), *micro);
  const ElementMatrixFn provider = [&](int e) -> Mat {
    if (same_shape(mesh, e)) return k0;
    return macro_element_stiffness(mesh.order, mesh.element_coords(e), *micro);
  };
  MacroSolution s = solve_with(mesh, provider, problem.volume_load, problem.line_load,
                               problem.dirichlet, problem.threads);
  s.A0 = micro->homogenized();
  s.micro = std::move(micro);
  fill_qp_states(s);
  return s;
}

MacroSolution single_scale_solve(const StructuredQuadMesh& mesh, const ElasticityTensor& A0,
                                 const LoadFn& volume_load,
                                 const std::optional<LineLoad>& line_load,
                                 const std::vector<DirichletBC>& dirichlet, int threads) {
  const Eigen::Matrix3d A = A0.voigt;
  const MaterialFn mat = [A](const Point&) { return A; };
  const QuadratureRule rule = default_rule(mesh.order);
  const Mat k0 = element_stiffness(mesh.order, mesh.element_coords(0), mat, rule);
  const ElementMatrixFn provider = [&](int e) -> Mat {
    if (same_shape(mesh, e)) return k0;
    return element_stiffness(mesh.order, mesh.element_coords(e), mat, rule);
  };
  MacroSolution s = solve_with(mesh, provider, volume_load, line_load, dirichlet, threads);
  s.A0 = A0;
  fill_qp_states(s);
  return s;
}

MicroRecovery recover_micro(const MacroSolution& solution, int element, int qp) {
  if (!solution.micro) throw std::invalid_argument("recover_micro: single-scale solution");
  const QuadratureRule rule = default_rule(solution.mesh.order);
  if (element < 0 || element >= solution.mesh.num_elements() || qp < 0 ||
      qp >= static_cast<int>(rule.points.size()))
    throw std::out_of_range("recover_micro: element or quadrature point out of range");
  const Mat L =
      linearization_map(solution.mesh.order, solution.mesh.element_coords(element), rule.points[qp]);
  MicroRecovery r;
  r.d = solution.micro->basis() * (L * element_values(solution.mesh, solution.u_H, element));
  r.rigid_body_enriched = solution.micro->coupling().kind == CouplingKind::NeumannPerturbation;
  return r;
}

int nearest_qp(const MacroSolution& solution, const Point& x) {
  int best = -1;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < solution.per_qp.size(); ++i) {
    const double d = (solution.per_qp[i].x - x).norm();
    if (d < dist) {
      dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double micro_energy_sum(const MacroSolution& solution) {
  if (!solution.micro) throw std::invalid_argument("micro_energy_sum: single-scale solution");
  const MicroSolver& m = *solution.micro;
  const Mat& D = m.basis();
  const Mat KD = m.K() * D;
  const QuadratureRule rule = default_rule(solution.mesh.order);
  double sum = 0.0;
  for (const auto& st : solution.per_qp) {
    const Mat L = linearization_map(solution.mesh.order, solution.mesh.element_coords(st.element),
                                    rule.points[st.qp]);
    Vec a = L * element_values(solution.mesh, solution.u_H, st.element);
    // translations lie in the kernel of K^mic; kept, they only add cancellation
    // roundoff of relative size |t| / (|H| delta)
    a.head<2>().setZero();
    const Vec dh = D * a;
    sum += st.weight / m.volume() * dh.dot(KD * a);
  }
  return sum;
}

void export_vtk(const std::string& path, const MacroSolution& s) {
  VtkField u{"u_H", 2, std::vector<double>(s.u_H.data(), s.u_H.data() + s.u_H.size())};
  VtkField stress{"stress", 3, {}}, strain{"strain", 3, {}};
  const int ne = s.mesh.num_elements();
  stress.values.assign(3 * ne, 0.0);
  strain.values.assign(3 * ne, 0.0);
  std::vector<double> wsum(ne, 0.0);
  for (const auto& st : s.per_qp) {
    for (int c = 0; c < 3; ++c) {
      stress.values[3 * st.element + c] += st.weight * st.stress(c);
      strain.values[3 * st.element + c] += st.weight * st.strain(c);
    }
    wsum[st.element] += st.weight;
  }
  for (int e = 0; e < ne; ++e)
    for (int c = 0; c < 3; ++c) {
      stress.values[3 * e + c] /= wsum[e];
      strain.values[3 * e + c] /= wsum[e];
    }
  write_vtk(path, s.mesh, {u}, {stress, strain});
}

void export_qp_csv(const std::string& path, const MacroSolution& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_qp_csv: cannot open " + path);
  out << std::setprecision(12);
  out << "element,qp,x,y,weight,eps11,eps22,gamma12,sig11,sig22,sig12\n";
  for (const auto& st : s.per_qp)
    out << st.element << ',' << st.qp << ',' << st.x.x() << ',' << st.x.y() << ',' << st.weight
        << ',' << st.strain(0) << ',' << st.strain(1) << ',' << st.strain(2) << ','
        << st.stress(0) << ',' << st.stress(1) << ',' << st.stress(2) << '\n';
}

}  // namespace fehmm
