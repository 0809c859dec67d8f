#pragma once

#include "fehmm/fem.hpp"
#include "fehmm/macro.hpp"

#include <string>
#include <vector>

namespace fehmm {

enum class NormKind { L2, H1, Energy };
std::string to_string(NormKind n);
NormKind norm_kind_from_string(const std::string& s);

// A displacement field on a mesh with the material used for its stresses.
struct FieldView {
  const StructuredQuadMesh* mesh = nullptr;
  const Vec* d = nullptr;
  MaterialFn material;
};

FieldView view(const MacroSolution& s);
FieldView view(const StructuredQuadMesh& mesh, const Vec& d, const MaterialFn& material);

struct ProjectedValues {
  std::vector<Point> x;              // reference quadrature points
  std::vector<double> weight;        // reference quadrature weights times det J
  std::vector<Eigen::Vector2d> u;    // coarse field values
  std::vector<Eigen::Matrix2d> grad; // coarse gradients, grad(i, j) = du_i/dx_j
};

// Coarse field evaluated at the quadrature points of ref_mesh.
ProjectedValues project_to_reference(const StructuredQuadMesh& coarse_mesh, const Vec& coarse_d,
                                     const StructuredQuadMesh& ref_mesh);

// Norm of coarse - reference integrated on the reference mesh. The energy
// version weighs the error strain with the reference material.
double error_norm(const FieldView& coarse, const FieldView& reference, NormKind which);
double field_norm(const FieldView& f, NormKind which);
double error_norm(const MacroSolution& coarse, const MacroSolution& reference, NormKind which);
double relative_error(const MacroSolution& coarse, const MacroSolution& reference, NormKind which);

// Least-squares slope of log(error) against log(size) over the `window`
// smallest sizes (all when window <= 0).
double convergence_rate(const std::vector<std::pair<double, double>>& samples, int window = 3);

struct Decomposition {
  double e_tot = 0.0, e_mac = 0.0, e_mic = 0.0;
  bool floored = false;
};
Decomposition decompose_errors(double e_tot, double e_mac);

// ---- superconvergent patch recovery ----

// Stresses (or strains) at the superconvergent sites of every element:
// center for Q4, 2x2 Gauss points for Q9.
struct SprSamples {
  std::vector<std::vector<Point>> x;                // per element
  std::vector<std::vector<Eigen::Vector3d>> value;  // per element
};
std::vector<Point> superconvergent_sites(int order);
SprSamples sample_superconvergent(const StructuredQuadMesh& mesh, const Vec& u,
                                  const Eigen::Matrix3d& A, bool stress);

struct SprResult {
  std::vector<Eigen::Vector3d> nodal;
  int degenerate_patches = 0;  // patches that fell back to the sample mean
};
SprResult spr_recover(const StructuredQuadMesh& mesh, const SprSamples& samples);

// Recovered field at a point inside element e (nodal values interpolated).
Eigen::Vector3d interpolate_nodal(const StructuredQuadMesh& mesh, const std::vector<Eigen::Vector3d>& nodal,
                                  int e, const Point& xi);

struct EnergyEstimate {
  double estimate = 0.0;
  std::vector<double> per_element;  // squared element contributions
  int degenerate_patches = 0;
};
EnergyEstimate estimate_error_energy(const MacroSolution& solution);

struct Effectivity {
  double theta = 0.0;
  double lower = 0.0, upper = 0.0;  // 1 -/+ ||s* - s_ref|| / ||s_ref - s_H||
};
double effectivity(double estimated, double true_error);
// Bounds from recovered and reference stresses (energy-type norms).
Effectivity effectivity_bounds(const MacroSolution& solution, const MacroSolution& reference,
                               double estimated, double true_error);

// Element energy error divided by (total energy / element count).
std::vector<double> relative_element_errors(const MacroSolution& coarse,
                                            const MacroSolution& reference);
std::vector<double> relative_element_errors(const std::vector<double>& squared_element_errors,
                                            double total_energy);

// ---- CSV ----

struct ErrorRow {
  int level = 0;
  double H = 0.0, h = 0.0;
  int N_mac = 0, N_mic = 0;
  std::string norm;
  double true_error = 0.0;
  double est_error = 0.0;  // NaN when not estimated
  double theta = 0.0;      // NaN when not estimated
  double rate = 0.0;       // NaN for the first level
};

extern const char* const kCsvHeader;
void write_error_csv(const std::string& path, const std::vector<ErrorRow>& rows,
                     const std::string& config_hash, const std::string& config_text = "");
std::string format_row(const ErrorRow& r, const std::string& config_hash);

}  // namespace fehmm
