#include "fehmm/studies.hpp"

#include "fehmm/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <type_traits>

namespace fehmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// shortest text that reads back to the same double
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, double>)
      out += num(v[i]);
    else if constexpr (std::is_same_v<T, std::string>)
      out += v[i];
    else
      out += std::to_string(v[i]);
  }
  return out;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

template <class F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "threads",
      "macro.problem", "macro.order", "macro.levels", "macro.fixed", "macro.reference",
      "macro.load_x", "macro.load_y", "macro.line_load", "macro.line_load.edge",
      "macro.line_load.tx", "macro.line_load.ty", "macro.taper.left_height",
      "macro.taper.length", "macro.taper.alpha_deg",
      "micro.field", "micro.epsilon", "micro.nu", "micro.e", "micro.e_inclusion", "micro.e_matrix",
      "micro.inclusion_side", "micro.e_phase1", "micro.e_phase2", "micro.tiles", "micro.e_min",
      "micro.e_max", "micro.sine_cell", "micro.order", "micro.levels", "micro.fixed",
      "micro.reference", "micro.delta_over_epsilon",
      "coupling.kinds", "coupling.kappa_max", "coupling.kappa_random", "coupling.node_a",
      "coupling.node_b", "coupling.newton_tol", "coupling.newton_max_iter",
      "coupling.affine_shortcut", "coupling.semi_dirichlet_reading",
      "study.norms", "study.rate_window", "study.scale", "study.probe_x", "study.probe_y",
      "study.kappa_sweep", "study.dirichlet_ratios", "study.periodic_ratios", "study.fixed_micro",
      "study.vtk"};
  return keys;
}

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

double domain_length(const StudyConfig& s) {
  return s.problem == ProblemKind::SquareCantilever ? 1.0 : s.taper.length;
}

std::shared_ptr<const MicroSolver> make_solver(const StudyConfig& s, int n, double ratio,
                                               const CouplingSpec& c) {
  return std::make_shared<const MicroSolver>(micro_problem(s, n, ratio), c);
}

MacroSolution two_scale(const StudyConfig& s, int n, std::shared_ptr<const MicroSolver> micro) {
  MacroProblem P = macro_problem(s, n);
  P.micro = micro->problem();
  P.coupling = micro->coupling();
  return assemble_and_solve(P, std::move(micro));
}

MacroSolution single_scale(const StudyConfig& s, int n, const ElasticityTensor& A0) {
  const MacroProblem P = macro_problem(s, n);
  return single_scale_solve(P.mesh, A0, P.volume_load, P.line_load, P.dirichlet, s.threads);
}

ErrorRow make_row(const StudyConfig& s, int level, int n_mac, int n_mic, NormKind norm, double err) {
  ErrorRow r;
  r.level = level;
  r.H = domain_length(s) / n_mac;
  r.h = s.field.epsilon / n_mic;
  r.N_mac = n_mac;
  r.N_mic = n_mic;
  r.norm = to_string(norm);
  r.true_error = err;
  r.est_error = kNaN;
  r.theta = kNaN;
  return r;
}

StudyResult start(const std::string& study, const StudyConfig& s) {
  validate(s);
  StudyResult r;
  r.study = study;
  const Config c = to_config(s);
  r.config_text = c.canonical();
  r.config_hash = c.hash();
  return r;
}

// Series for every configured norm, errors indexed [level][norm].
void add_series(StudyResult& r, const StudyConfig& s, const std::string& label,
                const std::vector<int>& n_mac, const std::vector<int>& n_mic,
                const std::vector<std::vector<double>>& err) {
  for (std::size_t k = 0; k < s.norms.size(); ++k) {
    Series ser;
    ser.label = label;
    ser.norm = s.norms[k];
    for (std::size_t i = 0; i < err.size(); ++i)
      ser.rows.push_back(make_row(s, static_cast<int>(i), n_mac[i], n_mic[i], s.norms[k], err[i][k]));
    finish_series(ser, s.rate_window);
    r.series.push_back(std::move(ser));
  }
}

std::vector<double> relative_errors(const StudyConfig& s, const MacroSolution& sol,
                                    const MacroSolution& ref) {
  std::vector<double> e;
  for (NormKind k : s.norms) e.push_back(relative_error(sol, ref, k));
  return e;
}

// Affine state at a macro quadrature point from the element values.
AffineState state_at(const MacroSolution& sol, const QpState& st) {
  const Mat L = linearization_map(sol.mesh.order, sol.mesh.element_coords(st.element), st.xi);
  const auto dofs = element_dofs(sol.mesh, st.element);
  Vec ue(dofs.size());
  for (std::size_t i = 0; i < dofs.size(); ++i) ue(i) = sol.u_H(dofs[i]);
  const Vec a = L * ue;
  AffineState s;
  s.c = a.head<2>();
  s.H << a(2), a(3), a(4), a(5);
  return s;
}

Vec micro_field_at(const MacroSolution& sol, const QpState& st) {
  Vec d = recover_micro(sol, st.element, st.qp).d;
  if (is_neumann(sol.micro->coupling().kind))
    d = align_rigid(sol.micro->problem().rve_mesh, d, sol.micro->linear_field(state_at(sol, st)));
  return d;
}

void check_finite(const std::string& what, double v) {
  if (!std::isfinite(v)) throw SolverError(what + ": non-finite result");
}

}  // namespace

std::string to_string(ProblemKind k) {
  return k == ProblemKind::SquareCantilever ? "square_cantilever" : "tapered_cantilever";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "square_cantilever" || s == "square") return ProblemKind::SquareCantilever;
  if (s == "tapered_cantilever" || s == "tapered") return ProblemKind::TaperedCantilever;
  throw std::invalid_argument("unknown problem '" + s + "'");
}

StudyConfig study_config_from(const Config& c) {
  c.require_known(known_keys());
  StudyConfig s;
  s.seed = c.get_u64("seed", s.seed);
  s.threads = c.get_int("threads", s.threads);

  s.problem = wrap("macro.problem", [&] {
    return problem_kind_from_string(c.get_string("macro.problem", to_string(s.problem)));
  });
  s.p = c.get_int("macro.order", s.p);
  s.macro_levels = c.get_ints("macro.levels", s.macro_levels);
  s.macro_fixed = c.get_int("macro.fixed", s.macro_fixed);
  s.macro_reference = c.get_int("macro.reference", s.macro_reference);
  s.volume_load = {c.get_double("macro.load_x", s.volume_load.x()),
                   c.get_double("macro.load_y", s.volume_load.y())};
  if (c.get_bool("macro.line_load", false)) {
    LineLoad l;
    l.edge = c.get_int("macro.line_load.edge", l.edge);
    l.traction = {c.get_double("macro.line_load.tx", l.traction.x()),
                  c.get_double("macro.line_load.ty", l.traction.y())};
    s.line_load = l;
  } else if (c.has("macro.line_load.edge") || c.has("macro.line_load.tx") ||
             c.has("macro.line_load.ty")) {
    throw ConfigError("macro.line_load.* given but macro.line_load is not true");
  }
  s.taper.left_height = c.get_double("macro.taper.left_height", s.taper.left_height);
  s.taper.length = c.get_double("macro.taper.length", s.taper.length);
  s.taper.alpha_deg = c.get_double("macro.taper.alpha_deg", s.taper.alpha_deg);

  auto& f = s.field;
  f.kind = wrap("micro.field",
                [&] { return field_kind_from_string(c.get_string("micro.field", to_string(f.kind))); });
  f.epsilon = c.get_double("micro.epsilon", f.epsilon);
  f.nu = c.get_double("micro.nu", f.nu);
  f.E = c.get_double("micro.e", f.E);
  f.E_inclusion = c.get_double("micro.e_inclusion", f.E_inclusion);
  f.E_matrix = c.get_double("micro.e_matrix", f.E_matrix);
  f.inclusion_side = c.get_double("micro.inclusion_side", f.inclusion_side);
  f.E_phase1 = c.get_double("micro.e_phase1", f.E_phase1);
  f.E_phase2 = c.get_double("micro.e_phase2", f.E_phase2);
  f.tiles = c.get_int("micro.tiles", f.tiles);
  f.E_min = c.get_double("micro.e_min", f.E_min);
  f.E_max = c.get_double("micro.e_max", f.E_max);
  const std::string cell = c.get_string("micro.sine_cell", "shifted");
  if (cell == "shifted")
    f.cell = SineCell::Shifted;
  else if (cell == "symmetric")
    f.cell = SineCell::Symmetric;
  else
    throw ConfigError("micro.sine_cell: expected shifted or symmetric, got '" + cell + "'");
  s.q = c.get_int("micro.order", s.q);
  s.micro_levels = c.get_ints("micro.levels", s.micro_levels);
  s.micro_fixed = c.get_int("micro.fixed", s.micro_fixed);
  s.micro_reference = c.get_int("micro.reference", s.micro_reference);
  s.delta_over_epsilon = c.get_double("micro.delta_over_epsilon", s.delta_over_epsilon);

  CouplingSpec base;
  base.seed = s.seed;
  base.kappa_max = c.get_double("coupling.kappa_max", base.kappa_max);
  base.kappa_random = c.get_bool("coupling.kappa_random", base.kappa_random);
  base.node_A = c.get_int("coupling.node_a", base.node_A);
  base.node_B = c.get_int("coupling.node_b", base.node_B);
  base.newton_tol = c.get_double("coupling.newton_tol", base.newton_tol);
  base.newton_max_iter = c.get_int("coupling.newton_max_iter", base.newton_max_iter);
  base.affine_shortcut = c.get_bool("coupling.affine_shortcut", base.affine_shortcut);
  const std::string reading = c.get_string("coupling.semi_dirichlet_reading", "stress_iteration");
  if (reading == "stress_iteration")
    base.reading = CouplingSpec::SemiDirichletReading::StressIteration;
  else if (reading == "constrained")
    base.reading = CouplingSpec::SemiDirichletReading::Constrained;
  else
    throw ConfigError("coupling.semi_dirichlet_reading: expected stress_iteration or constrained");
  s.couplings.clear();
  for (const auto& k : c.get_strings("coupling.kinds", {to_string(base.kind)})) {
    CouplingSpec cs = base;
    cs.kind = wrap("coupling.kinds", [&] { return coupling_kind_from_string(k); });
    s.couplings.push_back(cs);
  }

  s.norms.clear();
  for (const auto& n : c.get_strings("study.norms", {"L2", "H1", "energy"}))
    s.norms.push_back(wrap("study.norms", [&] { return norm_kind_from_string(n); }));
  s.rate_window = c.get_int("study.rate_window", s.rate_window);
  const std::string scale = c.get_string("study.scale", "macroscale");
  if (scale == "macroscale")
    s.scale = MicroScale::Macroscale;
  else if (scale == "microscale")
    s.scale = MicroScale::Microscale;
  else
    throw ConfigError("study.scale: expected macroscale or microscale, got '" + scale + "'");
  s.probe = {c.get_double("study.probe_x", s.probe.x()), c.get_double("study.probe_y", s.probe.y())};
  s.kappa_sweep = c.get_doubles("study.kappa_sweep", s.kappa_sweep);
  s.dirichlet_ratios = c.get_doubles("study.dirichlet_ratios", s.dirichlet_ratios);
  s.periodic_ratios = c.get_doubles("study.periodic_ratios", s.periodic_ratios);
  s.fixed_micro = c.get_ints("study.fixed_micro", s.fixed_micro);
  s.vtk = c.get_bool("study.vtk", s.vtk);
  validate(s);
  return s;
}

Config to_config(const StudyConfig& s) {
  Config c;
  c.set("seed", std::to_string(s.seed));
  // threads change the schedule, never the numbers, so they stay out of the hash
  c.set("macro.problem", to_string(s.problem));
  c.set("macro.order", std::to_string(s.p));
  c.set("macro.levels", join(s.macro_levels));
  c.set("macro.fixed", std::to_string(s.macro_fixed));
  c.set("macro.reference", std::to_string(s.macro_reference));
  c.set("macro.load_x", num(s.volume_load.x()));
  c.set("macro.load_y", num(s.volume_load.y()));
  c.set("macro.line_load", s.line_load ? "true" : "false");
  if (s.line_load) {
    c.set("macro.line_load.edge", std::to_string(s.line_load->edge));
    c.set("macro.line_load.tx", num(s.line_load->traction.x()));
    c.set("macro.line_load.ty", num(s.line_load->traction.y()));
  }
  c.set("macro.taper.left_height", num(s.taper.left_height));
  c.set("macro.taper.length", num(s.taper.length));
  c.set("macro.taper.alpha_deg", num(s.taper.alpha_deg));

  const auto& f = s.field;
  c.set("micro.field", to_string(f.kind));
  c.set("micro.epsilon", num(f.epsilon));
  c.set("micro.nu", num(f.nu));
  switch (f.kind) {
    case FieldKind::Homogeneous: c.set("micro.e", num(f.E)); break;
    case FieldKind::MatrixInclusion:
      c.set("micro.e_inclusion", num(f.E_inclusion));
      c.set("micro.e_matrix", num(f.E_matrix));
      c.set("micro.inclusion_side", num(f.inclusion_side));
      break;
    case FieldKind::Chessboard:
      c.set("micro.e_phase1", num(f.E_phase1));
      c.set("micro.e_phase2", num(f.E_phase2));
      c.set("micro.tiles", std::to_string(f.tiles));
      break;
    case FieldKind::SineWave:
      c.set("micro.e_min", num(f.E_min));
      c.set("micro.e_max", num(f.E_max));
      c.set("micro.sine_cell", f.cell == SineCell::Shifted ? "shifted" : "symmetric");
      break;
  }
  c.set("micro.order", std::to_string(s.q));
  c.set("micro.levels", join(s.micro_levels));
  c.set("micro.fixed", std::to_string(s.micro_fixed));
  c.set("micro.reference", std::to_string(s.micro_reference));
  c.set("micro.delta_over_epsilon", num(s.delta_over_epsilon));

  std::vector<std::string> kinds;
  for (const auto& cs : s.couplings) kinds.push_back(to_string(cs.kind));
  c.set("coupling.kinds", join(kinds));
  const CouplingSpec& b = s.couplings.front();
  c.set("coupling.kappa_max", num(b.kappa_max));
  c.set("coupling.kappa_random", b.kappa_random ? "true" : "false");
  c.set("coupling.node_a", std::to_string(b.node_A));
  c.set("coupling.node_b", std::to_string(b.node_B));
  c.set("coupling.newton_tol", num(b.newton_tol));
  c.set("coupling.newton_max_iter", std::to_string(b.newton_max_iter));
  c.set("coupling.affine_shortcut", b.affine_shortcut ? "true" : "false");
  c.set("coupling.semi_dirichlet_reading",
        b.reading == CouplingSpec::SemiDirichletReading::Constrained ? "constrained"
                                                                     : "stress_iteration");

  std::vector<std::string> norms;
  for (NormKind n : s.norms) norms.push_back(to_string(n));
  c.set("study.norms", join(norms));
  c.set("study.rate_window", std::to_string(s.rate_window));
  c.set("study.scale", s.scale == MicroScale::Macroscale ? "macroscale" : "microscale");
  c.set("study.probe_x", num(s.probe.x()));
  c.set("study.probe_y", num(s.probe.y()));
  c.set("study.kappa_sweep", join(s.kappa_sweep));
  c.set("study.dirichlet_ratios", join(s.dirichlet_ratios));
  c.set("study.periodic_ratios", join(s.periodic_ratios));
  c.set("study.fixed_micro", join(s.fixed_micro));
  c.set("study.vtk", s.vtk ? "true" : "false");
  return c;
}

void validate(const StudyConfig& s) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (s.p != 1 && s.p != 2) fail("macro.order must be 1 or 2");
  if (s.q != 1 && s.q != 2) fail("micro.order must be 1 or 2");
  if (s.threads < 1) fail("threads must be >= 1");
  if (s.macro_levels.empty() || s.micro_levels.empty()) fail("level lists must not be empty");
  for (int n : s.macro_levels)
    if (n < 1) fail("macro.levels must be positive");
  for (int n : s.micro_levels)
    if (!power_of_two(n)) fail("micro.levels must be powers of two");
  for (int n : s.fixed_micro)
    if (n < 1) fail("study.fixed_micro must be positive");
  if (s.macro_fixed < 1 || s.micro_fixed < 1) fail("fixed levels must be positive");
  const int max_mac = *std::max_element(s.macro_levels.begin(), s.macro_levels.end());
  const int max_mic = *std::max_element(s.micro_levels.begin(), s.micro_levels.end());
  if (s.macro_reference <= max_mac) fail("macro.reference must be finer than every macro level");
  if (s.micro_reference <= max_mic) fail("micro.reference must be finer than every micro level");
  if (s.delta_over_epsilon < 1.0) fail("micro.delta_over_epsilon must be >= 1");
  for (double r : s.dirichlet_ratios)
    if (r < 1.0) fail("study.dirichlet_ratios must be >= 1");
  for (double r : s.periodic_ratios)
    if (r < 1.0) fail("study.periodic_ratios must be >= 1");
  for (double k : s.kappa_sweep)
    if (!(k > 0)) fail("study.kappa_sweep values must be > 0");
  if (s.rate_window == 1 || s.rate_window < 0) fail("study.rate_window must be 0 (all) or >= 2");
  if (s.norms.empty()) fail("study.norms must not be empty");
  if (s.couplings.empty()) fail("coupling.kinds must not be empty");
  const auto& f = s.field;
  if (!(f.epsilon > 0)) fail("micro.epsilon must be > 0");
  if (!(f.nu > -1.0 && f.nu < 0.5)) fail("micro.nu must lie in (-1, 0.5)");
  if (!(f.E > 0 && f.E_inclusion > 0 && f.E_matrix > 0 && f.E_phase1 > 0 && f.E_phase2 > 0 &&
        f.E_min > 0 && f.E_max >= f.E_min))
    fail("micro moduli must be positive with e_max >= e_min");
  if (!(f.inclusion_side > 0 && f.inclusion_side < 1)) fail("micro.inclusion_side must be in (0, 1)");
  if (f.tiles < 1) fail("micro.tiles must be >= 1");
  if (s.line_load && (s.line_load->edge < 0 || s.line_load->edge > 3))
    fail("macro.line_load.edge must be 0..3");
  if (!(s.taper.left_height > 0 && s.taper.length > 0)) fail("macro.taper sizes must be > 0");
  if (!(s.couplings.front().kappa_max > 0)) fail("coupling.kappa_max must be > 0");
  if (!(s.couplings.front().newton_tol > 0) || s.couplings.front().newton_max_iter < 1)
    fail("coupling.newton_tol must be > 0 and newton_max_iter >= 1");
}

MacroProblem macro_problem(const StudyConfig& s, int n) {
  MacroProblem P;
  P.mesh = s.problem == ProblemKind::SquareCantilever ? square_cantilever_mesh(n, s.p)
                                                      : tapered_cantilever_mesh(n, s.p, s.taper);
  P.volume_load = constant_load(s.volume_load);
  P.line_load = s.line_load;
  P.dirichlet = clamp_left_edge(P.mesh);
  P.threads = s.threads;
  return P;
}

MicroProblem micro_problem(const StudyConfig& s, int n_per_cell, double delta_over_epsilon) {
  return make_micro_problem(s.field, n_per_cell, s.q, delta_over_epsilon);
}

void finish_series(Series& s, int window) {
  std::vector<std::pair<double, double>> samples;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    auto& r = s.rows[i];
    // size along the swept axis
    r.rate = kNaN;
    if (i > 0) {
      const auto& p = s.rows[i - 1];
      const double a = p.N_mac != r.N_mac ? p.H / r.H : p.h / r.h;
      if (a != 1.0 && p.true_error > 0 && r.true_error > 0)
        r.rate = std::log(p.true_error / r.true_error) / std::log(a);
    }
  }
  const bool macro_axis = s.rows.size() > 1 && s.rows[0].N_mac != s.rows[1].N_mac;
  for (const auto& r : s.rows)
    if (r.true_error > 0) samples.emplace_back(macro_axis ? r.H : r.h, r.true_error);
  s.rate = samples.size() >= 2 ? convergence_rate(samples, window) : kNaN;
}

Vec align_rigid(const StructuredQuadMesh& mesh, const Vec& d, const Vec& linear) {
  const QuadratureRule rule = default_rule(mesh.order);
  double vol = 0.0;
  Point xc = Point::Zero();
  Eigen::Vector2d dt = Eigen::Vector2d::Zero();
  double dw = 0.0;
  const Vec diff = linear - d;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    const auto conn = mesh.element(e);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const ShapeGeom g = shape_geometry(mesh.order, c, rule.points[q]);
      const double w = rule.weights[q] * g.detJ;
      Eigen::Vector2d u = Eigen::Vector2d::Zero();
      Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
      for (std::size_t a = 0; a < conn.size(); ++a) {
        u += g.N(a) * diff.segment<2>(2 * conn[a]);
        grad += diff.segment<2>(2 * conn[a]) * g.dNdx.row(a);
      }
      vol += w;
      xc += w * g.x;
      dt += w * u;
      dw += w * 0.5 * (grad(1, 0) - grad(0, 1));
    }
  }
  return enrich_rigid_body(mesh, d, xc / vol, dt / vol, dw / vol);
}

const Series& StudyResult::find(const std::string& label, NormKind norm) const {
  for (const auto& s : series)
    if (s.label == label && s.norm == norm) return s;
  throw std::out_of_range("no series '" + label + "' / " + to_string(norm) + " in " + study);
}

const Table& StudyResult::table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return t;
  throw std::out_of_range("no table '" + name + "' in " + study);
}

// ---- studies ----

StudyResult run_micro_convergence(const StudyConfig& s, MicroScale scale) {
  StudyResult r = start("converge-micro", s);
  const std::vector<int>& levels = s.micro_levels;
  for (const auto& cs : s.couplings) {
    const std::string label = to_string(cs.kind);
    auto ref_micro = make_solver(s, s.micro_reference, s.delta_over_epsilon, cs);
    const MacroSolution ref = two_scale(s, s.macro_fixed, ref_micro);
    std::vector<std::vector<double>> err(levels.size());
    if (scale == MicroScale::Macroscale) {
      parallel_for(static_cast<int>(levels.size()), s.threads, [&](int i) {
        const MacroSolution sol =
            two_scale(s, s.macro_fixed, make_solver(s, levels[i], s.delta_over_epsilon, cs));
        err[i] = relative_errors(s, sol, ref);
      });
    } else {
      // the macro solution stays fixed, only the micro postprocessing changes
      const int iq = nearest_qp(ref, s.probe);
      const QpState st = ref.per_qp[iq];
      const Vec dref = micro_field_at(ref, st);
      const MicroProblem& rp = ref_micro->problem();
      const MaterialFn rmat = [&rp](const Point& y) { return rp.material(y); };
      const FieldView rv = view(rp.rve_mesh, dref, rmat);
      std::ostringstream note;
      note << label << ": probe quadrature point element " << st.element << " qp " << st.qp
           << " at (" << num(st.x.x()) << ", " << num(st.x.y()) << ")";
      r.notes.push_back(note.str());
      parallel_for(static_cast<int>(levels.size()), s.threads, [&](int i) {
        MacroSolution sol;
        sol.mesh = ref.mesh;
        sol.u_H = ref.u_H;
        sol.micro = make_solver(s, levels[i], s.delta_over_epsilon, cs);
        const Vec d = micro_field_at(sol, st);
        const MicroProblem& mp = sol.micro->problem();
        const MaterialFn mat = [&mp](const Point& y) { return mp.material(y); };
        const FieldView cv = view(mp.rve_mesh, d, mat);
        for (NormKind k : s.norms) err[i].push_back(error_norm(cv, rv, k) / field_norm(rv, k));
      });
    }
    for (const auto& e : err)
      for (double v : e) check_finite("converge-micro", v);
    add_series(r, s, label, std::vector<int>(levels.size(), s.macro_fixed), levels, err);
  }
  r.notes.push_back(std::string("scale: ") +
                    (scale == MicroScale::Macroscale ? "macroscale" : "microscale"));
  return r;
}

StudyResult run_macro_convergence(const StudyConfig& s) {
  StudyResult r = start("converge-macro", s);
  const std::vector<int>& levels = s.macro_levels;
  for (const auto& cs : s.couplings) {
    const std::string label = to_string(cs.kind);
    auto micro = make_solver(s, s.micro_fixed, s.delta_over_epsilon, cs);
    const MacroSolution ref = single_scale(s, s.macro_reference, micro->homogenized());
    std::vector<std::vector<double>> err(levels.size());
    std::vector<MacroSolution> sols(levels.size());
    parallel_for(static_cast<int>(levels.size()), s.threads, [&](int i) {
      sols[i] = two_scale(s, levels[i], micro);
      err[i] = relative_errors(s, sols[i], ref);
    });
    add_series(r, s, label, levels, std::vector<int>(levels.size(), s.micro_fixed), err);
    if (s.vtk)
      for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& u = sols[i].u_H;
        r.maps.push_back({label + "_n" + std::to_string(levels[i]), sols[i].mesh,
                          {{"u_H", 2, std::vector<double>(u.data(), u.data() + u.size())}},
                          {}});
      }
  }
  return r;
}

StudyResult run_refinement_strategy(const StudyConfig& s) {
  StudyResult r = start("refine-study", s);
  const std::vector<int>& levels = s.macro_levels;
  auto schedule = [&](double expo) {
    std::vector<int> n;
    for (int m : levels) n.push_back(std::max(1, static_cast<int>(std::ceil(std::pow(m, expo) - 1e-9))));
    return n;
  };
  const double pl2 = (s.p + 1.0) / (2.0 * s.q), ph1 = s.p / (2.0 * s.q);
  for (const auto& cs : s.couplings) {
    const std::string kind = to_string(cs.kind);
    std::map<int, std::shared_ptr<const MicroSolver>> solvers;
    auto solver = [&](int n) {
      auto it = solvers.find(n);
      if (it == solvers.end()) it = solvers.emplace(n, make_solver(s, n, s.delta_over_epsilon, cs)).first;
      return it->second;
    };
    // u(H -> 0, h -> 0) as a single-scale solve with the reference tensor
    const MacroSolution ref = single_scale(s, s.macro_reference, solver(s.micro_reference)->homogenized());
    struct Curve {
      std::string name;
      std::vector<int> micro;
    };
    std::vector<Curve> curves;
    for (int n : s.fixed_micro) curves.push_back({"fixed_N" + std::to_string(n), std::vector<int>(levels.size(), n)});
    curves.push_back({"schedule_L2", schedule(pl2)});
    curves.push_back({"schedule_H1", schedule(ph1)});
    for (const auto& c : curves)
      for (int n : c.micro) solver(n);
    for (const auto& c : curves) {
      std::vector<std::vector<double>> err(levels.size());
      parallel_for(static_cast<int>(levels.size()), s.threads, [&](int i) {
        err[i] = relative_errors(s, two_scale(s, levels[i], solvers.at(c.micro[i])), ref);
      });
      add_series(r, s, kind + "_" + c.name, levels, c.micro, err);
    }
  }
  std::ostringstream note;
  note << "schedules: L2 N_mic = ceil(N_mac^" << num(pl2) << "), H1 N_mic = ceil(N_mac^" << num(ph1) << ")";
  r.notes.push_back(note.str());
  return r;
}

StudyResult run_neumann_comparison(const StudyConfig& s) {
  StudyResult r = start("neumann-compare", s);
  CouplingSpec semi = s.couplings.front(), pert = s.couplings.front();
  semi.kind = CouplingKind::NeumannSemiDirichlet;
  pert.kind = CouplingKind::NeumannPerturbation;
  Table levels{"levels", {"N_mic", "l2_semi_dirichlet", "l2_perturbation", "rel_diff", "newton_iterations"}, {}, {}, false};
  Table timing{"timing",
               {"N_mic", "semi_micro_s", "semi_total_s", "pert_micro_s", "pert_total_s",
                "semi_micro_pct", "pert_micro_pct"},
               {}, {}, true};
  const std::vector<AffineState> unit = {strain_state({1, 0, 0}), strain_state({0, 1, 0}),
                                         strain_state({0, 0, 1})};
  // levels run one after another so the timings do not compete for cores
  for (int n : s.micro_levels) {
    auto run = [&](const CouplingSpec& cs, double& t_micro, double& t_total, std::shared_ptr<const MicroSolver>& m) {
      const auto t0 = std::chrono::steady_clock::now();
      m = make_solver(s, n, s.delta_over_epsilon, cs);
      t_micro = seconds_since(t0);
      const MacroSolution sol = two_scale(s, s.macro_fixed, m);
      t_total = seconds_since(t0);
      return norm_L2(sol.mesh, sol.u_H);
    };
    // Short runs are repeated (alternating the two techniques) for about a
    // second and the fastest pass is kept, so scheduler noise does not decide
    // the comparison at coarse levels.
    double ts_m = INFINITY, ts_t = INFINITY, tp_m = INFINITY, tp_t = INFINITY;
    double ls = 0.0, lp = 0.0;
    std::shared_ptr<const MicroSolver> ms, mp;
    const auto t_start = std::chrono::steady_clock::now();
    for (int rep = 0; rep == 0 || (seconds_since(t_start) < 1.0 && rep < 200); ++rep) {
      double a, b;
      ls = run(semi, a, b, ms);
      if (b < ts_t) ts_m = a, ts_t = b;
      lp = run(pert, a, b, mp);
      if (b < tp_t) tp_m = a, tp_t = b;
    }
    check_finite("neumann-compare", ls);
    check_finite("neumann-compare", lp);
    int iters = 0;
    for (const auto& res : ms->solve_semi_dirichlet_states(unit)) iters = std::max(iters, res.iterations);
    levels.rows.push_back({double(n), ls, lp, std::abs(ls - lp) / std::abs(ls), double(iters)});
    timing.rows.push_back({double(n), ts_m, ts_t, tp_m, tp_t, 100.0 * ts_m / ts_t, 100.0 * tp_m / tp_t});
  }
  Table kappa{"kappa", {"kappa", "l2_perturbation", "rel_diff_to_semi_dirichlet"}, {}, {}, false};
  const MacroSolution ref = two_scale(s, s.macro_fixed, make_solver(s, s.micro_fixed, s.delta_over_epsilon, semi));
  const double l_semi = norm_L2(ref.mesh, ref.u_H);
  std::vector<double> lk(s.kappa_sweep.size());
  parallel_for(static_cast<int>(s.kappa_sweep.size()), s.threads, [&](int i) {
    CouplingSpec c = pert;
    c.kappa_max = s.kappa_sweep[i];
    const MacroSolution sol = two_scale(s, s.macro_fixed, make_solver(s, s.micro_fixed, s.delta_over_epsilon, c));
    lk[i] = norm_L2(sol.mesh, sol.u_H);
  });
  for (std::size_t i = 0; i < lk.size(); ++i)
    kappa.rows.push_back({s.kappa_sweep[i], lk[i], std::abs(lk[i] - l_semi) / std::abs(l_semi)});
  r.tables = {levels, timing, kappa};
  r.notes.push_back("solution measure: L2 norm of u_H on the macro mesh");
  return r;
}

StudyResult run_modeling_error(const StudyConfig& s) {
  StudyResult r = start("modeling-error", s);
  const std::vector<int>& levels = s.macro_levels;
  CouplingSpec per = s.couplings.front(), dir = s.couplings.front();
  per.kind = CouplingKind::PeriodicLagrange;
  dir.kind = CouplingKind::DirichletLagrange;
  // periodic coupling with delta = epsilon carries no modeling error
  const MacroSolution ref =
      single_scale(s, s.macro_reference, make_solver(s, s.micro_fixed, 1.0, per)->homogenized());
  struct Case {
    CouplingSpec c;
    double ratio;
  };
  std::vector<Case> cases;
  for (double d : s.periodic_ratios) cases.push_back({per, d});
  for (double d : s.dirichlet_ratios) cases.push_back({dir, d});
  Table offsets{"offsets", {"delta_over_epsilon", "epsilon_over_delta", "finest_error", "tail_rate"}, {}, {}, false};
  for (const auto& cc : cases) {
    const std::string label = to_string(cc.c.kind) + "_d" + short_num(cc.ratio);
    auto micro = make_solver(s, s.micro_fixed, cc.ratio, cc.c);
    std::vector<std::vector<double>> err(levels.size());
    parallel_for(static_cast<int>(levels.size()), s.threads,
                 [&](int i) { err[i] = relative_errors(s, two_scale(s, levels[i], micro), ref); });
    add_series(r, s, label, levels, std::vector<int>(levels.size(), s.micro_fixed), err);
    const Series& first = r.find(label, s.norms.front());
    offsets.labels.push_back(label);
    offsets.rows.push_back({cc.ratio, 1.0 / cc.ratio, first.rows.back().true_error, first.rows.back().rate});
  }
  r.tables = {offsets};
  r.notes.push_back("reference: single-scale solve with the periodic delta = epsilon tensor; offsets use norm " +
                    to_string(s.norms.front()));
  return r;
}

StudyResult run_error_decomposition(const StudyConfig& s) {
  StudyResult r = start("decompose-error", s);
  const std::vector<int>& mac = s.macro_levels;
  std::vector<int> mic = s.micro_levels;
  if (mic.size() == 1) mic.assign(mac.size(), mic.front());
  if (mic.size() != mac.size())
    throw ConfigError("decompose-error: micro.levels must pair with macro.levels (or hold one value)");
  for (const auto& cs : s.couplings) {
    const std::string kind = to_string(cs.kind);
    const ElasticityTensor A_ref = make_solver(s, s.micro_reference, s.delta_over_epsilon, cs)->homogenized();
    // u(H -> 0, h -> 0)
    const MacroSolution ref = single_scale(s, s.macro_reference, A_ref);
    std::vector<std::vector<double>> tot(mac.size()), macro(mac.size()), micro(mac.size());
    std::vector<std::vector<int>> floored(mac.size());
    std::vector<ElementMap> maps(mac.size());
    parallel_for(static_cast<int>(mac.size()), s.threads, [&](int i) {
      const MacroSolution sol = two_scale(s, mac[i], make_solver(s, mic[i], s.delta_over_epsilon, cs));
      // u(H, h -> 0)
      const MacroSolution ref_h = single_scale(s, mac[i], A_ref);
      for (NormKind k : s.norms) {
        const Decomposition d = decompose_errors(relative_error(sol, ref, k), relative_error(ref_h, ref, k));
        tot[i].push_back(d.e_tot);
        macro[i].push_back(d.e_mac);
        micro[i].push_back(d.e_mic);
        floored[i].push_back(d.floored);
      }
      maps[i] = {kind + "_n" + std::to_string(mac[i]), sol.mesh, {}, {}};
      maps[i].cell_data.push_back({"total_relative", 1, relative_element_errors(sol, ref)});
      maps[i].cell_data.push_back({"micro_relative", 1, relative_element_errors(sol, ref_h)});
    });
    add_series(r, s, kind + "_total", mac, mic, tot);
    add_series(r, s, kind + "_macro", mac, mic, macro);
    add_series(r, s, kind + "_micro", mac, mic, micro);
    for (std::size_t i = 0; i < mac.size(); ++i)
      for (std::size_t k = 0; k < s.norms.size(); ++k)
        if (floored[i][k])
          r.notes.push_back(kind + ": e_mic floored at 0 on level " + std::to_string(i) + " (" +
                            to_string(s.norms[k]) + ")");
    for (auto& m : maps) r.maps.push_back(std::move(m));
  }
  r.notes.push_back("e_tot against u(H->0, h->0), e_mac from u(H, h->0), both single-scale with the micro.reference tensor");
  return r;
}

StudyResult run_estimator_validation(const StudyConfig& s) {
  StudyResult r = start("estimate-error", s);
  const std::vector<int>& levels = s.macro_levels;
  for (const auto& cs : s.couplings) {
    const std::string label = to_string(cs.kind);
    auto micro = make_solver(s, s.micro_fixed, s.delta_over_epsilon, cs);
    const auto t0 = std::chrono::steady_clock::now();
    const MacroSolution ref = single_scale(s, s.macro_reference, micro->homogenized());
    const double t_ref = seconds_since(t0);
    const double ref_norm = field_norm(view(ref), NormKind::Energy);
    Series ser;
    ser.label = label;
    ser.norm = NormKind::Energy;
    ser.rows.resize(levels.size());
    Table bounds{label + "_bounds", {"N_mac", "theta", "lower", "upper", "degenerate_patches"}, {}, {}, false};
    Table timing{label + "_timing", {"N_mac", "estimator_s", "reference_s"}, {}, {}, true};
    bounds.rows.resize(levels.size());
    timing.rows.resize(levels.size());
    std::vector<MacroSolution> sols(levels.size());
    std::vector<EnergyEstimate> ests(levels.size());
    parallel_for(static_cast<int>(levels.size()), s.threads, [&](int i) {
      sols[i] = two_scale(s, levels[i], micro);
      const auto te = std::chrono::steady_clock::now();
      ests[i] = estimate_error_energy(sols[i]);
      const double t_est = seconds_since(te);
      const auto tt = std::chrono::steady_clock::now();
      const double true_err = error_norm(sols[i], ref, NormKind::Energy);
      const double t_true = seconds_since(tt) + t_ref;
      const Effectivity b = effectivity_bounds(sols[i], ref, ests[i].estimate, true_err);
      ErrorRow row = make_row(s, i, levels[i], s.micro_fixed, NormKind::Energy, true_err / ref_norm);
      row.est_error = ests[i].estimate / ref_norm;
      row.theta = b.theta;
      ser.rows[i] = row;
      bounds.rows[i] = {double(levels[i]), b.theta, b.lower, b.upper, double(ests[i].degenerate_patches)};
      timing.rows[i] = {double(levels[i]), t_est, t_true};
    });
    finish_series(ser, s.rate_window);
    r.series.push_back(std::move(ser));
    r.tables.push_back(std::move(bounds));
    r.tables.push_back(std::move(timing));
    if (s.vtk)
      for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& u = sols[i].u_H;
        r.maps.push_back({label + "_n" + std::to_string(levels[i]), sols[i].mesh,
                          {{"u_H", 2, std::vector<double>(u.data(), u.data() + u.size())}},
                          {{"estimated_sq", 1, ests[i].per_element}}});
      }
  }
  r.notes.push_back("true error: macro discretization error against a single-scale reference with the same tensor");
  return r;
}

// ---- output ----

std::vector<std::string> write_study(const StudyResult& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> paths;
  auto path_for = [&](const std::string& stem, const std::string& ext) {
    return (fs::path(dir) / (r.study + "_" + stem + ext)).string();
  };
  for (const auto& s : r.series) {
    const std::string p = path_for(s.label + "_" + to_string(s.norm), ".csv");
    write_error_csv(p, s.rows, r.config_hash, r.config_text);
    paths.push_back(p);
  }
  for (const auto& t : r.tables) {
    const std::string p = path_for(t.name, ".csv");
    std::ofstream out(p);
    if (!out) throw std::runtime_error("write_study: cannot open " + p);
    std::istringstream cfg(r.config_text);
    for (std::string line; std::getline(cfg, line);) out << "# " << line << '\n';
    if (!t.labels.empty()) out << "label,";
    for (const auto& h : t.header) out << h << ',';
    out << "config_hash\n";
    out << std::setprecision(10);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (!t.labels.empty()) out << t.labels[i] << ',';
      for (double v : t.rows[i]) {
        if (std::isnan(v))
          out << "nan";
        else
          out << v;
        out << ',';
      }
      out << r.config_hash << '\n';
    }
    paths.push_back(p);
  }
  for (const auto& m : r.maps) {
    const std::string p = path_for(m.name, ".vtk");
    write_vtk(p, m.mesh, m.point_data, m.cell_data);
    paths.push_back(p);
  }
  if (!r.notes.empty()) {
    const std::string p = path_for("notes", ".txt");
    std::ofstream out(p);
    for (const auto& n : r.notes) out << n << '\n';
    paths.push_back(p);
  }
  return paths;
}

}  // namespace fehmm
