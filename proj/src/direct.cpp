#include "fehmm/micro.hpp"

#include <sstream>

namespace fehmm {

Vec direct_dirichlet_solve(const MicroProblem& problem, const AffineState& state) {
  CouplingSpec c;
  c.kind = CouplingKind::DirichletDirect;
  return MicroSolver(problem, c).solve_states({state}).d.col(0);
}

Vec direct_periodic_solve(const MicroProblem& problem, const AffineState& state) {
  CouplingSpec c;
  c.kind = CouplingKind::PeriodicDirect;
  return MicroSolver(problem, c).solve_states({state}).d.col(0);
}

int dof_count(CouplingKind kind, SolveMethod method, int N) {
  if (N < 2) throw std::invalid_argument("dof_count: N must be >= 2");
  const bool direct = method == SolveMethod::Direct;
  switch (kind) {
    case CouplingKind::DirichletLagrange:
    case CouplingKind::DirichletDirect:
      return direct ? 2 * (N - 2) * (N - 2) : 2 * (N * N + 4 * (N - 1));
    case CouplingKind::PeriodicLagrange:
    case CouplingKind::PeriodicDirect:
      return direct ? 2 * ((N - 2) * (N - 2) + (N - 1) + (N - 2))
                    : 2 * (N * N + N + (N - 1));
    default: break;
  }
  std::ostringstream os;
  os << "dof_count: no closed form for coupling " << to_string(kind);
  throw std::invalid_argument(os.str());
}

}  // namespace fehmm
