#include "fehmm/postproc.hpp"

#include <algorithm>
#include <cmath>

namespace fehmm {

namespace {

using Vec4 = Eigen::Vector4d;

Vec4 basis(const Point& x, const Point& c, double s) {
  const double u = (x.x() - c.x()) / s, v = (x.y() - c.y()) / s;
  return {1.0, u, v, u * v};
}

struct Fit {
  bool ok = false;
  Eigen::Matrix<double, 4, 3> a;
  Eigen::Vector3d mean;
  Point c;
  double s = 1.0;
  Eigen::Vector3d eval(const Point& x) const {
    if (!ok) return mean;
    return a.transpose() * basis(x, c, s);
  }
};

// Componentwise least squares on P = [1, x, y, xy]; coordinates are
// centered and scaled so the normal matrix stays well conditioned.
Fit fit_patch(const std::vector<Point>& x, const std::vector<Eigen::Vector3d>& v) {
  Fit f;
  f.c = Point::Zero();
  f.mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.c += x[i];
    f.mean += v[i];
  }
  f.c /= static_cast<double>(x.size());
  f.mean /= static_cast<double>(x.size());
  double s = 0.0;
  for (const auto& p : x) s = std::max(s, (p - f.c).cwiseAbs().maxCoeff());
  f.s = s > 0 ? s : 1.0;
  if (x.size() < 4) return f;
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  Eigen::Matrix<double, 4, 3> b = Eigen::Matrix<double, 4, 3>::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec4 P = basis(x[i], f.c, f.s);
    A += P * P.transpose();
    b += P * v[i].transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A);
  const auto sv = svd.singularValues();
  if (!(sv(3) > 1e-10 * sv(0))) return f;
  f.a = A.ldlt().solve(b);
  f.ok = true;
  return f;
}

Eigen::Vector3d voigt_strain(const Eigen::Matrix2d& g) {
  return {g(0, 0), g(1, 1), g(0, 1) + g(1, 0)};
}

Eigen::Vector3d strain_at(const StructuredQuadMesh& mesh, const Vec& u, int e, const Point& xi,
                          Point* x = nullptr) {
  const auto c = mesh.element_coords(e);
  const auto conn = mesh.element(e);
  const ShapeGeom g = shape_geometry(mesh.order, c, xi);
  Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
  for (std::size_t a = 0; a < conn.size(); ++a)
    grad += u.segment<2>(2 * conn[a]) * g.dNdx.row(a);
  if (x) *x = g.x;
  return voigt_strain(grad);
}

}  // namespace

std::vector<Point> superconvergent_sites(int order) {
  if (order == 1) return {Point::Zero()};
  const QuadratureRule r = gauss_rule(2);
  return r.points;
}

SprSamples sample_superconvergent(const StructuredQuadMesh& mesh, const Vec& u,
                                  const Eigen::Matrix3d& A, bool stress) {
  const auto sites = superconvergent_sites(mesh.order);
  SprSamples s;
  s.x.resize(mesh.num_elements());
  s.value.resize(mesh.num_elements());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (const auto& xi : sites) {
      Point x;
      const Eigen::Vector3d eps = strain_at(mesh, u, e, xi, &x);
      s.x[e].push_back(x);
      s.value[e].push_back(stress ? Eigen::Vector3d(A * eps) : eps);
    }
  }
  return s;
}

SprResult spr_recover(const StructuredQuadMesh& mesh, const SprSamples& samples) {
  SprResult r;
  r.nodal.assign(mesh.num_nodes(), Eigen::Vector3d::Zero());
  if (mesh.order == 1) {
    // Patch of the (up to) four elements around a vertex. Boundary and
    // corner nodes borrow the patch of the nearest interior vertex.
    for (int j = 0; j <= mesh.ny; ++j) {
      for (int i = 0; i <= mesh.nx; ++i) {
        const int pi = std::clamp(i, 1, std::max(1, mesh.nx - 1));
        const int pj = std::clamp(j, 1, std::max(1, mesh.ny - 1));
        std::vector<Point> x;
        std::vector<Eigen::Vector3d> v;
        for (int ey = pj - 1; ey <= pj; ++ey)
          for (int ex = pi - 1; ex <= pi; ++ex) {
            if (ex < 0 || ey < 0 || ex >= mesh.nx || ey >= mesh.ny) continue;
            const int e = ey * mesh.nx + ex;
            x.insert(x.end(), samples.x[e].begin(), samples.x[e].end());
            v.insert(v.end(), samples.value[e].begin(), samples.value[e].end());
          }
        const Fit f = fit_patch(x, v);
        if (!f.ok) ++r.degenerate_patches;
        const int n = mesh.node_id(i, j);
        r.nodal[n] = f.eval(mesh.nodes[n]);
      }
    }
    return r;
  }
  // Q9: the four Gauss samples of one element already fill the bilinear
  // basis. Every element recovers its own nine nodes; shared nodes average.
  std::vector<int> count(mesh.num_nodes(), 0);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const Fit f = fit_patch(samples.x[e], samples.value[e]);
    if (!f.ok) ++r.degenerate_patches;
    for (int n : mesh.element(e)) {
      r.nodal[n] += f.eval(mesh.nodes[n]);
      ++count[n];
    }
  }
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (count[n] > 0) r.nodal[n] /= count[n];
  return r;
}

Eigen::Vector3d interpolate_nodal(const StructuredQuadMesh& mesh,
                                  const std::vector<Eigen::Vector3d>& nodal, int e,
                                  const Point& xi) {
  const ShapeEval s = shape_functions(mesh.order, xi);
  const auto conn = mesh.element(e);
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  for (std::size_t a = 0; a < conn.size(); ++a) v += s.N(a) * nodal[conn[a]];
  return v;
}

EnergyEstimate estimate_error_energy(const MacroSolution& solution) {
  const auto& mesh = solution.mesh;
  const Eigen::Matrix3d& A = solution.A0.voigt;
  const SprResult sig = spr_recover(mesh, sample_superconvergent(mesh, solution.u_H, A, true));
  const SprResult eps = spr_recover(mesh, sample_superconvergent(mesh, solution.u_H, A, false));
  EnergyEstimate est;
  est.degenerate_patches = sig.degenerate_patches + eps.degenerate_patches;
  est.per_element.assign(mesh.num_elements(), 0.0);
  const QuadratureRule rule = default_rule(mesh.order);
  double sum = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(mesh.order, c, rule.points[q]);
      const Eigen::Vector3d eH = strain_at(mesh, solution.u_H, e, rule.points[q]);
      const Eigen::Vector3d sH = A * eH;
      const Eigen::Vector3d ds = interpolate_nodal(mesh, sig.nodal, e, rule.points[q]) - sH;
      const Eigen::Vector3d de = interpolate_nodal(mesh, eps.nodal, e, rule.points[q]) - eH;
      est.per_element[e] += rule.weights[q] * g.detJ * ds.dot(de);
    }
    sum += est.per_element[e];
  }
  est.estimate = std::sqrt(std::max(sum, 0.0));
  return est;
}

Effectivity effectivity_bounds(const MacroSolution& solution, const MacroSolution& reference,
                               double estimated, double true_error) {
  const auto& mesh = solution.mesh;
  const Eigen::Matrix3d& A = solution.A0.voigt;
  const Eigen::Matrix3d& Aref = reference.A0.voigt;
  const SprResult sig = spr_recover(mesh, sample_superconvergent(mesh, solution.u_H, A, true));
  const SprResult eps = spr_recover(mesh, sample_superconvergent(mesh, solution.u_H, A, false));
  // ||u* - u_ref|| in the same energy-type pairing, integrated on the reference mesh
  const auto& ref = reference.mesh;
  const QuadratureRule rule = default_rule(ref.order);
  double sum = 0.0;
  for (int e = 0; e < ref.num_elements(); ++e) {
    const auto c = ref.element_coords(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(ref.order, c, rule.points[q]);
      const PointLocation loc = locate_point(mesh, g.x);
      const Eigen::Vector3d er = strain_at(ref, reference.u_H, e, rule.points[q]);
      const Eigen::Vector3d ds = interpolate_nodal(mesh, sig.nodal, loc.element, loc.xi) - Aref * er;
      const Eigen::Vector3d de = interpolate_nodal(mesh, eps.nodal, loc.element, loc.xi) - er;
      sum += rule.weights[q] * g.detJ * ds.dot(de);
    }
  }
  const double gap = std::sqrt(std::max(sum, 0.0)) / true_error;
  return {effectivity(estimated, true_error), 1.0 - gap, 1.0 + gap};
}

}  // namespace fehmm
