#pragma once

#include <Eigen/Dense>

#include <string>

namespace fehmm {

// Plane-strain stiffness in Voigt form, order (11, 22, 12), engineering shear.
struct ElasticityTensor {
  Eigen::Matrix3d voigt = Eigen::Matrix3d::Zero();
};

ElasticityTensor voigt_tensor(double E, double nu);

enum class FieldKind { Homogeneous, MatrixInclusion, Chessboard, SineWave };
enum class SineCell { Shifted, Symmetric };

struct MicrostructureField {
  FieldKind kind = FieldKind::Homogeneous;
  double epsilon = 0.005;
  double nu = 0.2;
  // Homogeneous
  double E = 40000.0;
  // MatrixInclusion: centered square inclusion of side inclusion_side * epsilon
  double E_inclusion = 200000.0;
  double E_matrix = 40000.0;
  double inclusion_side = 0.75;
  // Chessboard: tiles x tiles pattern, phase 1 in the lower-left tile
  double E_phase1 = 2000000.0;
  double E_phase2 = 40000.0;
  int tiles = 2;
  // SineWave
  double E_min = 40000.0;
  double E_max = 50000.0;
  SineCell cell = SineCell::Shifted;
};

// Young's modulus at x (epsilon-periodic extension, half-open tiles).
double youngs_modulus(const MicrostructureField& field, const Eigen::Vector2d& x);

ElasticityTensor sample_field(const MicrostructureField& field, const Eigen::Vector2d& x);

std::string to_string(FieldKind kind);
FieldKind field_kind_from_string(const std::string& s);

}  // namespace fehmm
