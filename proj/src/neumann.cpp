#include "fehmm/micro.hpp"

#include "micro_internal.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace fehmm {

Vec perturbation_diagonal(int n, double kappa_max, bool random, std::uint64_t seed) {
  Vec k(n);
  if (!random) {
    k.setConstant(kappa_max);
    return k;
  }
  // explicit 53-bit mapping so draws do not depend on the standard library
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    k(i) = kappa_max * (1.0 - u);                                   // (0, kappa_max]
  }
  return k;
}

Vec enrich_rigid_body(const StructuredQuadMesh& mesh, const Vec& d, const Point& center,
                      const Eigen::Vector2d& translation, double rotation) {
  if (d.size() != 2 * mesh.num_nodes())
    throw std::invalid_argument("enrich_rigid_body: field size does not match the mesh");
  Vec out = d;
  for (int m = 0; m < mesh.num_nodes(); ++m) {
    const Point r = mesh.nodes[m] - center;
    out(2 * m) += translation.x() - rotation * r.y();
    out(2 * m + 1) += translation.y() + rotation * r.x();
  }
  return out;
}

void MicroSolver::init_semi_dirichlet() {
  auto& im = *impl_;
  const int n = static_cast<int>(K_.rows());
  const double hs = coupling_.affine_shortcut ? im.sigma_scale : 1e-6 * im.sigma_scale;
  const double he = coupling_.affine_shortcut ? problem_.delta : 1e-6 * problem_.delta;
  if (coupling_.reading == CouplingSpec::SemiDirichletReading::Constrained) {
    im.saddle = std::make_unique<SaddleSolver>(K_, G_, true);
    system_dim_ = im.saddle->dimension();
    Mat g = Mat::Zero(6, 1);
    g(5, 0) = he;
    const auto [d, z] = im.saddle->solve(Mat::Zero(n, 1), g);
    im.J(3, 3) = z(5, 0) / he;
    return;
  }
  // Residual is linear in (sigma, eta) with R(0) = 0, so difference quotients
  // at the origin carry no cancellation.
  Mat f = Mat::Zero(n, 4);
  Mat g = Mat::Zero(3, 4);
  for (int c = 0; c < 3; ++c)
    f.col(c) = volume_ * hs * Vec(im.Gs.transpose().col(c));
  g(2, 3) = he;
  const auto [d, z] = im.saddle->solve(f, g);
  const Mat Gd = im.Gs * d;
  for (int c = 0; c < 4; ++c) {
    const double h = c < 3 ? hs : he;
    im.J.block<3, 1>(0, c) = Gd.col(c) / h;
    im.J(3, c) = z(2, c) / h;
  }
}

std::vector<SemiDirichletResult> MicroSolver::solve_semi_dirichlet_states(
    const std::vector<AffineState>& states) const {
  if (coupling_.kind != CouplingKind::NeumannSemiDirichlet)
    throw std::logic_error("solve_semi_dirichlet_states: coupling is not semi-Dirichlet");
  const auto& im = *impl_;
  const int n = static_cast<int>(K_.rows());
  const int A = im.nodes_AB[0], B = im.nodes_AB[1];
  const bool constrained = coupling_.reading == CouplingSpec::SemiDirichletReading::Constrained;
  std::vector<SemiDirichletResult> res(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    const Vec dlin = linear_field(states[s]);
    const Eigen::Vector3d target = im.Gs * dlin;
    const Eigen::Vector2d pA = dlin.segment<2>(2 * A);
    const double strain_scale =
        std::max({target.norm(), states[s].H.norm(), states[s].c.norm() / problem_.delta});
    const double force_scale = volume_ * im.sigma_scale * strain_scale;
    auto& r = res[s];
    r.eta = dlin(2 * B + 1);
    if (strain_scale == 0.0) {
      r.d = Vec::Zero(n);
      r.iterations = 1;
      r.residual_history.push_back(0.0);
      continue;
    }
    for (int it = 1;; ++it) {
      Vec d, z;
      if (constrained) {
        Vec g(6);
        g << target, pA, r.eta;
        auto sol = im.saddle->solve(Mat::Zero(n, 1), g);
        d = sol.first.col(0);
        z = sol.second.col(0);
        r.sigma = -z.head<3>() / volume_;
        r.zeta_A = z.segment<2>(3);
        r.zeta_B = z(5);
      } else {
        Vec g(3);
        g << pA, r.eta;
        auto sol = im.saddle->solve(volume_ * (im.Gs.transpose() * r.sigma), g);
        d = sol.first.col(0);
        z = sol.second.col(0);
        r.zeta_A = z.head<2>();
        r.zeta_B = z(2);
      }
      Eigen::Vector4d R;
      R.head<3>() = im.Gs * d - target;
      R(3) = r.zeta_B;
      const double strain_res = R.head<3>().norm() / strain_scale;
      const double zeta_res = std::abs(r.zeta_B) / force_scale;
      r.residual_history.push_back(std::max(strain_res, zeta_res));
      r.iterations = it;
      r.d = std::move(d);
      if (strain_res <= coupling_.newton_tol && zeta_res <= coupling_.newton_tol) break;
      if (it >= coupling_.newton_max_iter) {
        std::ostringstream os;
        os << "semi-Dirichlet iteration did not converge in " << it << " iterations; residuals:";
        for (double h : r.residual_history) os << ' ' << h;
        throw SolverError(os.str());
      }
      if (constrained) {
        if (std::abs(im.J(3, 3)) <= 1e-14 * force_scale / problem_.delta)
          throw SolverError("semi-Dirichlet: reaction at B does not depend on eta");
        r.eta -= R(3) / im.J(3, 3);
      } else if (coupling_.affine_shortcut) {
        r.sigma -= im.J.topLeftCorner<3, 3>().lu().solve(R.head<3>());
      } else {
        // the eta column and zeta row vanish for this residual; minimum-norm step
        Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix4d> cod(im.J);
        cod.setThreshold(1e-10);
        const Eigen::Vector4d step = cod.solve(R);
        r.sigma -= step.head<3>();
        r.eta -= step(3);
      }
    }
  }
  return res;
}

SemiDirichletResult solve_semi_dirichlet(const MicroProblem& problem,
                                         const Eigen::Vector3d& target_strain,
                                         const CouplingSpec& spec) {
  CouplingSpec c = spec;
  c.kind = CouplingKind::NeumannSemiDirichlet;
  const MicroSolver solver(problem, c);
  return solver.solve_semi_dirichlet_states({strain_state(target_strain)}).front();
}

Vec solve_perturbed(const MicroProblem& problem, const Eigen::Vector3d& target_strain,
                    const CouplingSpec& spec) {
  CouplingSpec c = spec;
  c.kind = CouplingKind::NeumannPerturbation;
  const MicroSolver solver(problem, c);
  return solver.solve_states({strain_state(target_strain)}).d.col(0);
}

}  // namespace fehmm
