#include "fehmm/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fehmm {

std::string to_string(NormKind n) {
  switch (n) {
    case NormKind::L2: return "L2";
    case NormKind::H1: return "H1";
    case NormKind::Energy: return "energy";
  }
  return "unknown";
}

NormKind norm_kind_from_string(const std::string& s) {
  if (s == "L2" || s == "l2") return NormKind::L2;
  if (s == "H1" || s == "h1") return NormKind::H1;
  if (s == "energy" || s == "E") return NormKind::Energy;
  throw std::invalid_argument("unknown norm '" + s + "'");
}

FieldView view(const MacroSolution& s) {
  const Eigen::Matrix3d A = s.A0.voigt;
  return {&s.mesh, &s.u_H, [A](const Point&) { return A; }};
}

FieldView view(const StructuredQuadMesh& mesh, const Vec& d, const MaterialFn& material) {
  return {&mesh, &d, material};
}

namespace {

bool same_mesh(const StructuredQuadMesh& a, const StructuredQuadMesh& b) {
  if (&a == &b) return true;
  if (a.order != b.order || a.nx != b.nx || a.ny != b.ny || a.nodes.size() != b.nodes.size())
    return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i)
    if (a.nodes[i] != b.nodes[i]) return false;
  return true;
}

void check_domains(const StructuredQuadMesh& a, const StructuredQuadMesh& b) {
  const double scale = (a.domain.corners[2] - a.domain.corners[0]).norm();
  for (int c = 0; c < 4; ++c)
    if ((a.domain.corners[c] - b.domain.corners[c]).norm() > 1e-12 * scale)
      throw std::invalid_argument("error norms: solutions live on different domains");
}

struct Eval {
  Eigen::Vector2d u;
  Eigen::Matrix2d grad;
};

Eval evaluate(const StructuredQuadMesh& mesh, const Vec& d, int e, const Point& xi) {
  const auto c = mesh.element_coords(e);
  const auto conn = mesh.element(e);
  const ShapeGeom g = shape_geometry(mesh.order, c, xi);
  Eigen::Matrix<double, 2, Eigen::Dynamic> de(2, conn.size());
  for (std::size_t a = 0; a < conn.size(); ++a) de.col(a) = d.segment<2>(2 * conn[a]);
  return {de * g.N, de * g.dNdx};
}

Eigen::Vector3d voigt_strain(const Eigen::Matrix2d& g) {
  return {g(0, 0), g(1, 1), g(0, 1) + g(1, 0)};
}

// Visits every reference quadrature point with the coarse location.
template <class F>
void for_each_ref_qp(const StructuredQuadMesh& coarse, const StructuredQuadMesh& ref, F&& f) {
  const bool same = same_mesh(coarse, ref);
  if (!same) check_domains(coarse, ref);
  const QuadratureRule rule = default_rule(ref.order);
  for (int e = 0; e < ref.num_elements(); ++e) {
    const auto c = ref.element_coords(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(ref.order, c, rule.points[q]);
      PointLocation loc;
      if (same) {
        loc.element = e;
        loc.xi = rule.points[q];
      } else {
        loc = locate_point(coarse, g.x);
      }
      f(e, rule.points[q], g.x, rule.weights[q] * g.detJ, loc);
    }
  }
}

double pointwise(NormKind which, const Eval& c, const Eval& r, const Eigen::Matrix3d& Ar) {
  switch (which) {
    case NormKind::L2: return (c.u - r.u).squaredNorm();
    case NormKind::H1: return (c.u - r.u).squaredNorm() + (c.grad - r.grad).squaredNorm();
    case NormKind::Energy: {
      // Pairing each field with its own material gives (A_r e_r - A_c e_c).(e_r - e_c),
      // which is sign-indefinite and vanishes by Galerkin orthogonality when only
      // the materials differ on a shared mesh. The error strain is weighed with
      // the reference material instead.
      const Eigen::Vector3d de = voigt_strain(r.grad) - voigt_strain(c.grad);
      return de.dot(Ar * de);
    }
  }
  return 0.0;
}

}  // namespace

ProjectedValues project_to_reference(const StructuredQuadMesh& coarse_mesh, const Vec& coarse_d,
                                     const StructuredQuadMesh& ref_mesh) {
  ProjectedValues p;
  for_each_ref_qp(coarse_mesh, ref_mesh,
                  [&](int, const Point&, const Point& x, double w, const PointLocation& loc) {
                    const Eval v = evaluate(coarse_mesh, coarse_d, loc.element, loc.xi);
                    p.x.push_back(x);
                    p.weight.push_back(w);
                    p.u.push_back(v.u);
                    p.grad.push_back(v.grad);
                  });
  return p;
}

double error_norm(const FieldView& coarse, const FieldView& reference, NormKind which) {
  double sum = 0.0;
  for_each_ref_qp(*coarse.mesh, *reference.mesh,
                  [&](int e, const Point& xi, const Point& x, double w, const PointLocation& loc) {
                    const Eval r = evaluate(*reference.mesh, *reference.d, e, xi);
                    const Eval c = evaluate(*coarse.mesh, *coarse.d, loc.element, loc.xi);
                    Eigen::Matrix3d Ar = Eigen::Matrix3d::Zero();
                    if (which == NormKind::Energy) Ar = reference.material(x);
                    sum += w * pointwise(which, c, r, Ar);
                  });
  return std::sqrt(std::max(sum, 0.0));
}

double field_norm(const FieldView& f, NormKind which) {
  switch (which) {
    case NormKind::L2: return norm_L2(*f.mesh, *f.d);
    case NormKind::H1: return norm_H1(*f.mesh, *f.d);
    case NormKind::Energy: return norm_energy(*f.mesh, *f.d, f.material);
  }
  return 0.0;
}

double error_norm(const MacroSolution& coarse, const MacroSolution& reference, NormKind which) {
  return error_norm(view(coarse), view(reference), which);
}

double relative_error(const MacroSolution& coarse, const MacroSolution& reference,
                      NormKind which) {
  return error_norm(coarse, reference, which) / field_norm(view(reference), which);
}

double convergence_rate(const std::vector<std::pair<double, double>>& samples, int window) {
  std::vector<std::pair<double, double>> s = samples;
  std::sort(s.begin(), s.end());
  if (window > 0 && static_cast<int>(s.size()) > window) s.resize(window);
  if (s.size() < 2) throw std::invalid_argument("convergence_rate: need at least two samples");
  double mx = 0, my = 0;
  for (const auto& [h, e] : s) {
    if (!(h > 0) || !(e > 0)) throw std::invalid_argument("convergence_rate: nonpositive sample");
    mx += std::log(h);
    my += std::log(e);
  }
  mx /= s.size();
  my /= s.size();
  double sxy = 0, sxx = 0;
  for (const auto& [h, e] : s) {
    sxy += (std::log(h) - mx) * (std::log(e) - my);
    sxx += (std::log(h) - mx) * (std::log(h) - mx);
  }
  return sxy / sxx;
}

Decomposition decompose_errors(double e_tot, double e_mac) {
  Decomposition d{e_tot, e_mac, e_tot - e_mac, false};
  if (d.e_mic < 0) {
    d.e_mic = 0.0;
    d.floored = true;
  }
  return d;
}

double effectivity(double estimated, double true_error) {
  if (!(true_error > 0)) throw std::invalid_argument("effectivity: true error must be > 0");
  return estimated / true_error;
}

std::vector<double> relative_element_errors(const std::vector<double>& sq, double total_energy) {
  const double avg = total_energy * total_energy / static_cast<double>(sq.size());
  std::vector<double> r(sq.size());
  for (std::size_t e = 0; e < sq.size(); ++e) r[e] = std::sqrt(std::max(sq[e], 0.0) / avg);
  return r;
}

std::vector<double> relative_element_errors(const MacroSolution& coarse,
                                            const MacroSolution& reference) {
  std::vector<double> sq(coarse.mesh.num_elements(), 0.0);
  const FieldView r = view(reference);
  for_each_ref_qp(coarse.mesh, reference.mesh,
                  [&](int e, const Point& xi, const Point& x, double w, const PointLocation& loc) {
                    const Eval vr = evaluate(reference.mesh, reference.u_H, e, xi);
                    const Eval vc = evaluate(coarse.mesh, coarse.u_H, loc.element, loc.xi);
                    sq[loc.element] +=
                        w * pointwise(NormKind::Energy, vc, vr, r.material(x));
                  });
  return relative_element_errors(sq, field_norm(r, NormKind::Energy));
}

// ---- CSV ----

const char* const kCsvHeader = "level,H,h,N_mac,N_mic,norm,true_error,est_error,theta,rate,config_hash";

std::string format_row(const ErrorRow& r, const std::string& config_hash) {
  std::ostringstream os;
  os << std::setprecision(10);
  auto num = [&os](double v) {
    if (std::isnan(v))
      os << "nan";
    else
      os << v;
  };
  os << r.level << ',';
  num(r.H);
  os << ',';
  num(r.h);
  os << ',' << r.N_mac << ',' << r.N_mic << ',' << r.norm << ',';
  num(r.true_error);
  os << ',';
  num(r.est_error);
  os << ',';
  num(r.theta);
  os << ',';
  num(r.rate);
  os << ',' << config_hash;
  return os.str();
}

void write_error_csv(const std::string& path, const std::vector<ErrorRow>& rows,
                     const std::string& config_hash, const std::string& config_text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_error_csv: cannot open " + path);
  std::istringstream cfg(config_text);
  for (std::string line; std::getline(cfg, line);)
    if (!line.empty()) out << "# " << line << '\n';
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << format_row(r, config_hash) << '\n';
}

}  // namespace fehmm
