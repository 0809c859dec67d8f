#include "fehmm/mesh.hpp"

#include "fehmm/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fehmm {

namespace {

constexpr int kQ9Offset[9][2] = {{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 0},
                                 {2, 1}, {1, 2}, {0, 1}, {1, 1}};
constexpr double kLocateTol = 1e-10;
// taper half-angle below which the clamped corners lose the regularity needed
// for optimal rates
constexpr double kRegularityAngleDeg = 28.4;

void build_topology(StructuredQuadMesh& m) {
  const int Nx = m.nodes_x(), Ny = m.nodes_y();
  const int npe = m.nodes_per_element();
  m.connectivity.resize(static_cast<std::size_t>(m.nx) * m.ny * npe);
  for (int ey = 0; ey < m.ny; ++ey)
    for (int ex = 0; ex < m.nx; ++ex) {
      const int e = ey * m.nx + ex;
      int* c = m.connectivity.data() + static_cast<std::size_t>(e) * npe;
      if (m.order == 1) {
        c[0] = m.node_id(ex, ey);
        c[1] = m.node_id(ex + 1, ey);
        c[2] = m.node_id(ex + 1, ey + 1);
        c[3] = m.node_id(ex, ey + 1);
      } else {
        for (int a = 0; a < 9; ++a)
          c[a] = m.node_id(2 * ex + kQ9Offset[a][0], 2 * ey + kQ9Offset[a][1]);
      }
    }
  auto& b = m.boundary_edges;
  for (auto& edge : b) edge.clear();
  for (int i = 0; i < Nx; ++i) b[0].push_back(m.node_id(i, 0));
  for (int j = 0; j < Ny; ++j) b[1].push_back(m.node_id(Nx - 1, j));
  for (int i = Nx - 1; i >= 0; --i) b[2].push_back(m.node_id(i, Ny - 1));
  for (int j = Ny - 1; j >= 0; --j) b[3].push_back(m.node_id(0, j));
  m.corner_nodes = {m.node_id(0, 0), m.node_id(Nx - 1, 0), m.node_id(Nx - 1, Ny - 1),
                    m.node_id(0, Ny - 1)};
}

void check_counts(int nx, int ny, int order) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("mesh: element counts must be >= 1");
  if (order != 1 && order != 2) throw std::invalid_argument("mesh: order must be 1 or 2");
}

double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

Point DomainMap::map(double s, double t) const {
  return (1 - s) * (1 - t) * corners[0] + s * (1 - t) * corners[1] + s * t * corners[2] +
         (1 - s) * t * corners[3];
}

Eigen::Matrix2d DomainMap::jacobian(double s, double t) const {
  Eigen::Matrix2d J;
  J.col(0) = (1 - t) * (corners[1] - corners[0]) + t * (corners[2] - corners[3]);
  J.col(1) = (1 - s) * (corners[3] - corners[0]) + s * (corners[2] - corners[1]);
  return J;
}

Point DomainMap::inverse(const Point& x) const {
  Point st(0.5, 0.5);
  const double scale = std::max((corners[2] - corners[0]).norm(), (corners[3] - corners[1]).norm());
  for (int it = 0; it < 50; ++it) {
    const Point r = map(st.x(), st.y()) - x;
    if (r.norm() <= 1e-15 * scale) break;
    st -= jacobian(st.x(), st.y()).lu().solve(r);
  }
  return st;
}

Eigen::Matrix<double, 2, Eigen::Dynamic> StructuredQuadMesh::element_coords(int e) const {
  const auto conn = element(e);
  Eigen::Matrix<double, 2, Eigen::Dynamic> c(2, conn.size());
  for (std::size_t a = 0; a < conn.size(); ++a) c.col(a) = nodes[conn[a]];
  return c;
}

Point StructuredQuadMesh::element_map(int e, const Point& xi) const {
  return element_coords(e) * shape_functions(order, xi).N;
}

double StructuredQuadMesh::area() const {
  const QuadratureRule rule = default_rule(order);
  double a = 0.0;
  for (int e = 0; e < num_elements(); ++e) {
    const auto c = element_coords(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q)
      a += rule.weights[q] * shape_geometry(order, c, rule.points[q]).detJ;
  }
  return a;
}

StructuredQuadMesh build_rect_mesh(int nx, int ny, double width, double height, int order,
                                   const Point& origin) {
  check_counts(nx, ny, order);
  if (!(width > 0.0) || !(height > 0.0))
    throw std::invalid_argument("build_rect_mesh: width and height must be positive");
  StructuredQuadMesh m;
  m.order = order;
  m.nx = nx;
  m.ny = ny;
  m.domain.kind = DomainKind::Rectangle;
  m.domain.corners = {origin, origin + Point(width, 0), origin + Point(width, height),
                      origin + Point(0, height)};
  const int Nx = m.nodes_x(), Ny = m.nodes_y();
  m.nodes.resize(static_cast<std::size_t>(Nx) * Ny);
  for (int j = 0; j < Ny; ++j)
    for (int i = 0; i < Nx; ++i)
      m.nodes[m.node_id(i, j)] =
          origin + Point(width * i / double(Nx - 1), height * j / double(Ny - 1));
  build_topology(m);
  return m;
}

StructuredQuadMesh build_tapered_mesh(int nx, int ny, const std::array<Point, 4>& corners,
                                      int order) {
  check_counts(nx, ny, order);
  for (int k = 0; k < 4; ++k) {
    const Point a = corners[(k + 1) % 4] - corners[k];
    const Point b = corners[(k + 2) % 4] - corners[(k + 1) % 4];
    const double scale = a.norm() * b.norm();
    if (!(scale > 0.0) || !(cross(a, b) > 1e-12 * scale))
      throw GeometryError("build_tapered_mesh: corners must form a convex counterclockwise quadrilateral");
  }
  StructuredQuadMesh m;
  m.order = order;
  m.nx = nx;
  m.ny = ny;
  m.domain.kind = DomainKind::Tapered;
  m.domain.corners = corners;
  const int Nx = m.nodes_x(), Ny = m.nodes_y();
  m.nodes.resize(static_cast<std::size_t>(Nx) * Ny);
  for (int j = 0; j < Ny; ++j)
    for (int i = 0; i < Nx; ++i)
      m.nodes[m.node_id(i, j)] = m.domain.map(i / double(Nx - 1), j / double(Ny - 1));
  build_topology(m);

  const Point db = corners[1] - corners[0];
  const Point dt = corners[2] - corners[3];
  const double c = std::clamp(db.dot(dt) / (db.norm() * dt.norm()), -1.0, 1.0);
  m.taper_angle_deg = 0.5 * std::acos(c) * 180.0 / std::numbers::pi;
  m.regularity_marginal =
      m.taper_angle_deg > 1e-9 && m.taper_angle_deg <= kRegularityAngleDeg + 1e-9;

  // every element must be valid at its quadrature points
  const QuadratureRule rule = default_rule(order);
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto cc = m.element_coords(e);
    for (const auto& xi : rule.points) shape_geometry(order, cc, xi);
  }
  return m;
}

std::array<Point, 4> tapered_corners(double left_height, double length, double alpha_deg) {
  const double drop = length * std::tan(alpha_deg * std::numbers::pi / 180.0);
  if (!(2.0 * drop < left_height))
    throw GeometryError("tapered_corners: taper closes before the free end");
  return {Point(0, 0), Point(length, drop), Point(length, left_height - drop),
          Point(0, left_height)};
}

PeriodicPairs periodic_pairs(const StructuredQuadMesh& mesh) {
  if (mesh.domain.kind != DomainKind::Rectangle)
    throw GeometryError("periodic_pairs: mesh must be rectangular");
  const int Nx = mesh.nodes_x(), Ny = mesh.nodes_y();
  const Point period_x = mesh.domain.corners[1] - mesh.domain.corners[0];
  const Point period_y = mesh.domain.corners[3] - mesh.domain.corners[0];
  PeriodicPairs p;
  auto add = [&](int plus, int minus, const Point& period) {
    const Point d = mesh.nodes[plus] - mesh.nodes[minus] - period;
    if (d.norm() > 1e-12 * period.norm())
      throw GeometryError("periodic_pairs: opposite edges do not match");
    p.pairs.emplace_back(plus, minus);
  };
  for (int j = 0; j < Ny; ++j) add(mesh.node_id(Nx - 1, j), mesh.node_id(0, j), period_x);
  for (int i = 1; i < Nx - 1; ++i) add(mesh.node_id(i, Ny - 1), mesh.node_id(i, 0), period_y);
  add(mesh.corner_nodes[3], mesh.corner_nodes[0], period_y);
  p.excluded_corner_policy =
      "upper-right/lower-right couple dropped: implied by lower-right/lower-left, "
      "upper-right/upper-left and upper-left/lower-left";
  return p;
}

PointLocation locate_point(const StructuredQuadMesh& mesh, const Point& x) {
  Point st;
  if (mesh.domain.kind == DomainKind::Rectangle) {
    const Point o = mesh.domain.corners[0];
    const Point ext = mesh.domain.corners[2] - o;
    st = Point((x.x() - o.x()) / ext.x(), (x.y() - o.y()) / ext.y());
  } else {
    st = mesh.domain.inverse(x);
  }
  if (!(st.x() >= -kLocateTol && st.x() <= 1 + kLocateTol && st.y() >= -kLocateTol &&
        st.y() <= 1 + kLocateTol)) {
    std::ostringstream os;
    os << "locate_point: (" << x.x() << ", " << x.y() << ") is outside the domain";
    throw OutOfDomainError(os.str());
  }
  st = st.cwiseMax(0.0).cwiseMin(1.0);
  const double sx = st.x() * mesh.nx, sy = st.y() * mesh.ny;
  const int ex = std::clamp(static_cast<int>(std::ceil(sx)) - 1, 0, mesh.nx - 1);
  const int ey = std::clamp(static_cast<int>(std::ceil(sy)) - 1, 0, mesh.ny - 1);
  PointLocation loc;
  loc.element = ey * mesh.nx + ex;
  loc.xi = Point(2.0 * (sx - ex) - 1.0, 2.0 * (sy - ey) - 1.0);
  if (mesh.domain.kind == DomainKind::Rectangle) return loc;

  // per-element Newton on the isoparametric map
  const auto c = mesh.element_coords(loc.element);
  const double h = (c.col(2) - c.col(0)).norm();
  Point xi = loc.xi;
  for (int it = 0; it < 30; ++it) {
    const ShapeEval s = shape_functions(mesh.order, xi);
    const Point r = c * s.N - x;
    if (r.norm() <= 1e-14 * h) break;
    const Eigen::Matrix2d J = c * s.dN;
    xi -= J.lu().solve(r);
  }
  const Point r = c * shape_functions(mesh.order, xi).N - x;
  if (r.norm() > 1e-10 * h || xi.cwiseAbs().maxCoeff() > 1.0 + 1e-8)
    throw OutOfDomainError("locate_point: element inversion failed");
  loc.xi = xi.cwiseMax(-1.0).cwiseMin(1.0);
  return loc;
}

std::vector<int> boundary_loop(const StructuredQuadMesh& mesh) {
  std::vector<int> loop;
  for (const auto& edge : mesh.boundary_edges)
    loop.insert(loop.end(), edge.begin(), edge.end() - 1);
  return loop;
}

std::vector<Point> discrete_normals(const StructuredQuadMesh& mesh, const std::vector<int>& loop) {
  const std::size_t L = loop.size();
  std::vector<Point> n(L);
  for (std::size_t q = 0; q < L; ++q) {
    const Point a = mesh.nodes[loop[(q + 1) % L]] - mesh.nodes[loop[(q + L - 1) % L]];
    n[q] = 0.5 * Point(a.y(), -a.x());
  }
  return n;
}

std::vector<int> boundary_nodes(const StructuredQuadMesh& mesh) {
  std::vector<int> b = boundary_loop(mesh);
  std::sort(b.begin(), b.end());
  return b;
}

}  // namespace fehmm
