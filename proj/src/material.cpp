#include "fehmm/material.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fehmm {

ElasticityTensor voigt_tensor(double E, double nu) {
  if (!(E > 0.0)) throw std::invalid_argument("voigt_tensor: E must be positive");
  if (!(nu > -1.0 && nu < 0.5))
    throw std::invalid_argument("voigt_tensor: nu must lie in (-1, 0.5)");
  const double f = E / ((1.0 + nu) * (1.0 - 2.0 * nu));
  ElasticityTensor A;
  A.voigt << f * (1.0 - nu), f * nu, 0.0,
             f * nu, f * (1.0 - nu), 0.0,
             0.0, 0.0, E / (2.0 * (1.0 + nu));
  return A;
}

namespace {

// Position inside the unit cell, in [0,1).
double cell_coord(double x, double eps) {
  double t = x / eps;
  t -= std::floor(t);
  if (t >= 1.0) t = 0.0;
  return t;
}

}  // namespace

double youngs_modulus(const MicrostructureField& f, const Eigen::Vector2d& x) {
  const double u = cell_coord(x.x(), f.epsilon);
  const double v = cell_coord(x.y(), f.epsilon);
  switch (f.kind) {
    case FieldKind::Homogeneous:
      return f.E;
    case FieldKind::MatrixInclusion: {
      const double a = 0.5 * (1.0 - f.inclusion_side);
      const double b = a + f.inclusion_side;
      const bool inside = u >= a && u < b && v >= a && v < b;
      return inside ? f.E_inclusion : f.E_matrix;
    }
    case FieldKind::Chessboard: {
      const int i = std::min(static_cast<int>(u * f.tiles), f.tiles - 1);
      const int j = std::min(static_cast<int>(v * f.tiles), f.tiles - 1);
      return (i + j) % 2 == 0 ? f.E_phase1 : f.E_phase2;
    }
    case FieldKind::SineWave: {
      constexpr double two_pi = 2.0 * std::numbers::pi;
      const double s = f.cell == SineCell::Shifted
                           ? std::sin(two_pi * u) * std::sin(two_pi * v)
                           : std::cos(two_pi * u) * std::cos(two_pi * v);
      return f.E_min + (f.E_max - f.E_min) * 0.5 * (1.0 + s);
    }
  }
  return f.E;
}

ElasticityTensor sample_field(const MicrostructureField& field, const Eigen::Vector2d& x) {
  return voigt_tensor(youngs_modulus(field, x), field.nu);
}

std::string to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::Homogeneous: return "homogeneous";
    case FieldKind::MatrixInclusion: return "matrix_inclusion";
    case FieldKind::Chessboard: return "chessboard";
    case FieldKind::SineWave: return "sine_wave";
  }
  return "homogeneous";
}

FieldKind field_kind_from_string(const std::string& s) {
  if (s == "homogeneous") return FieldKind::Homogeneous;
  if (s == "matrix_inclusion") return FieldKind::MatrixInclusion;
  if (s == "chessboard") return FieldKind::Chessboard;
  if (s == "sine_wave") return FieldKind::SineWave;
  throw std::invalid_argument("unknown microstructure field '" + s + "'");
}

}  // namespace fehmm
