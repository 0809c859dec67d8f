#pragma once

#include "fehmm/config.hpp"
#include "fehmm/macro.hpp"
#include "fehmm/postproc.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fehmm {

enum class ProblemKind { SquareCantilever, TaperedCantilever };
std::string to_string(ProblemKind k);
ProblemKind problem_kind_from_string(const std::string& s);

enum class MicroScale { Macroscale, Microscale };

struct StudyConfig {
  ProblemKind problem = ProblemKind::SquareCantilever;
  TaperedGeometry taper;
  Eigen::Vector2d volume_load = Eigen::Vector2d(0.0, -10.0);
  std::optional<LineLoad> line_load;
  int p = 1;  // macro order
  int q = 1;  // micro order

  MicrostructureField field;
  double delta_over_epsilon = 1.0;
  // kind list; the Neumann parameters are shared
  std::vector<CouplingSpec> couplings{CouplingSpec{}};

  std::vector<int> macro_levels{4, 8, 16, 32, 64};  // elements per edge
  std::vector<int> micro_levels{4, 8, 16, 32, 64};  // elements per unit cell edge
  int macro_fixed = 8;
  int micro_fixed = 16;
  int macro_reference = 256;
  int micro_reference = 256;

  std::vector<NormKind> norms{NormKind::L2, NormKind::H1, NormKind::Energy};
  int rate_window = 3;
  MicroScale scale = MicroScale::Macroscale;
  Point probe = Point(0.26, 0.26);

  std::vector<double> kappa_sweep{1e-8, 1e-7, 1e-6, 1e-5, 1e-3, 1e-1, 1.0};
  std::vector<double> dirichlet_ratios{1.1, 5.0 / 3.0, 2.0};
  std::vector<double> periodic_ratios{1.0, 2.0};
  std::vector<int> fixed_micro{4, 8, 16};
  bool vtk = false;

  std::uint64_t seed = 1;
  int threads = 1;
};

// Builds and validates a study config; unknown keys and bad values throw ConfigError.
StudyConfig study_config_from(const Config& c);
// Every field written out, so the effective settings travel with the results.
Config to_config(const StudyConfig& s);
void validate(const StudyConfig& s);

// Macro problem of the config at n elements per edge (without micro data).
MacroProblem macro_problem(const StudyConfig& s, int n);
MicroProblem micro_problem(const StudyConfig& s, int n_per_cell, double delta_over_epsilon);

struct Series {
  std::string label;
  NormKind norm = NormKind::L2;
  std::vector<ErrorRow> rows;
  double rate = 0.0;  // convergence_rate over the config window, NaN if too few rows
};

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::string> labels;  // optional first column
  std::vector<std::vector<double>> rows;
  bool timing = false;              // wall-clock values, not byte-stable
};

struct ElementMap {
  std::string name;
  StructuredQuadMesh mesh;
  std::vector<VtkField> point_data;
  std::vector<VtkField> cell_data;
};

struct StudyResult {
  std::string study;
  std::string config_text;
  std::string config_hash;
  std::vector<Series> series;
  std::vector<Table> tables;
  std::vector<ElementMap> maps;
  std::vector<std::string> notes;

  const Series& find(const std::string& label, NormKind norm) const;
  const Table& table(const std::string& name) const;
};

StudyResult run_micro_convergence(const StudyConfig& s, MicroScale scale);
StudyResult run_macro_convergence(const StudyConfig& s);
StudyResult run_refinement_strategy(const StudyConfig& s);
StudyResult run_neumann_comparison(const StudyConfig& s);
StudyResult run_modeling_error(const StudyConfig& s);
StudyResult run_error_decomposition(const StudyConfig& s);
StudyResult run_estimator_validation(const StudyConfig& s);

// One CSV per (study, label, norm), one per table, VTK per element map.
// Returns the written paths.
std::vector<std::string> write_study(const StudyResult& r, const std::string& dir);

// Fills the per-row rates (NaN on the first row) and the windowed series rate.
void finish_series(Series& s, int window);

// Shifts the translation and the mean rotation of a micro field onto those of
// the linear field; Neumann responses are only defined up to these.
Vec align_rigid(const StructuredQuadMesh& mesh, const Vec& d, const Vec& linear);

}  // namespace fehmm
