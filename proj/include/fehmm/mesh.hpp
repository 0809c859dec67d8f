#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fehmm {

using Point = Eigen::Vector2d;

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DomainKind { Rectangle, Tapered };

// Bilinear image of the unit square. Corners are lower-left, lower-right,
// upper-right, upper-left (counterclockwise).
struct DomainMap {
  DomainKind kind = DomainKind::Rectangle;
  std::array<Point, 4> corners;

  Point map(double s, double t) const;
  Eigen::Matrix2d jacobian(double s, double t) const;
  // Newton inversion of map(); returns (s, t), possibly slightly outside [0,1].
  Point inverse(const Point& x) const;
};

// Structured Q4/Q9 mesh. Nodes are numbered lexicographically, x fastest.
// Element node order: corners counterclockwise from lower-left; for Q9 then
// mid-edge nodes (bottom, right, top, left) and the center node.
struct StructuredQuadMesh {
  int order = 1;
  int nx = 0, ny = 0;
  std::vector<Point> nodes;
  std::vector<int> connectivity;  // nodes_per_element() entries per element
  // bottom (left to right), right (bottom to top), top (right to left),
  // left (top to bottom)
  std::array<std::vector<int>, 4> boundary_edges;
  std::array<int, 4> corner_nodes{};  // ll, lr, ur, ul
  DomainMap domain;
  double taper_angle_deg = 0.0;
  bool regularity_marginal = false;

  int nodes_per_element() const { return order == 1 ? 4 : 9; }
  int num_elements() const { return nx * ny; }
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int nodes_x() const { return order * nx + 1; }
  int nodes_y() const { return order * ny + 1; }
  int node_id(int i, int j) const { return j * nodes_x() + i; }
  std::span<const int> element(int e) const {
    return {connectivity.data() + static_cast<std::size_t>(e) * nodes_per_element(),
            static_cast<std::size_t>(nodes_per_element())};
  }
  // 2 x nodes_per_element matrix of element node coordinates
  Eigen::Matrix<double, 2, Eigen::Dynamic> element_coords(int e) const;
  // Isoparametric element map x(xi)
  Point element_map(int e, const Point& xi) const;
  double area() const;
};

StructuredQuadMesh build_rect_mesh(int nx, int ny, double width, double height, int order,
                                   const Point& origin = Point::Zero());

StructuredQuadMesh build_tapered_mesh(int nx, int ny, const std::array<Point, 4>& corners,
                                      int order);

// Corners of an isosceles trapezoid clamped on the left edge x = 0.
std::array<Point, 4> tapered_corners(double left_height, double length, double alpha_deg);

struct PeriodicPairs {
  std::vector<std::pair<int, int>> pairs;  // (plus node, minus node)
  std::string excluded_corner_policy;
};

PeriodicPairs periodic_pairs(const StructuredQuadMesh& mesh);

struct PointLocation {
  int element = -1;
  Point xi = Point::Zero();
};

PointLocation locate_point(const StructuredQuadMesh& mesh, const Point& x);

// Counterclockwise cycle of all boundary nodes starting at the lower-left corner.
std::vector<int> boundary_loop(const StructuredQuadMesh& mesh);

// n_q = 1/2 (x_{q+1} - x_{q-1}) x e3 for every node of the loop, in loop order.
std::vector<Point> discrete_normals(const StructuredQuadMesh& mesh, const std::vector<int>& loop);

// Sorted unique list of boundary node ids.
std::vector<int> boundary_nodes(const StructuredQuadMesh& mesh);

// Legacy ASCII VTK unstructured grid export.
struct VtkField {
  std::string name;
  int components = 1;
  std::vector<double> values;  // components * count, interleaved
};

void write_vtk(const std::string& path, const StructuredQuadMesh& mesh,
               const std::vector<VtkField>& point_data = {},
               const std::vector<VtkField>& cell_data = {});

}  // namespace fehmm
