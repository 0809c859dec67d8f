#include "fehmm/fem.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/SparseQR>
#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fehmm {

namespace {

constexpr double kResidualTol = 1e-10;
// reciprocal condition estimate of the factor below which the reduced
// matrix counts as singular (FE matrices here stay above ~1e-10)
constexpr double kSingularRcond = 1e-14;

struct Llt : Eigen::CholmodSimplicialLLT<SpMat, Eigen::Lower> {
  double rcond() { return cholmod_rcond(m_cholmodFactor, &cholmod()); }
};

// max absolute column sum
double norm1(const SpMat& A) {
  double m = 0.0;
  for (int c = 0; c < A.outerSize(); ++c) {
    double s = 0.0;
    for (SpMat::InnerIterator it(A, c); it; ++it) s += std::abs(it.value());
    m = std::max(m, s);
  }
  return m;
}

// Split the columns/rows of K into (free, fixed) blocks.
void partition(const SpMat& K, const std::vector<int>& free, const std::vector<int>& fixed,
               SpMat& Kff, SpMat& Kfc) {
  const int n = static_cast<int>(K.rows());
  std::vector<int> fpos(n, -1), cpos(n, -1);
  for (std::size_t i = 0; i < free.size(); ++i) fpos[free[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < fixed.size(); ++i) cpos[fixed[i]] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> tff, tfc;
  tff.reserve(K.nonZeros());
  for (int c = 0; c < K.outerSize(); ++c)
    for (SpMat::InnerIterator it(K, c); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (fpos[r] < 0) continue;
      if (fpos[c] >= 0)
        tff.emplace_back(fpos[r], fpos[c], it.value());
      else
        tfc.emplace_back(fpos[r], cpos[c], it.value());
    }
  Kff.resize(static_cast<Eigen::Index>(free.size()), static_cast<Eigen::Index>(free.size()));
  Kff.setFromTriplets(tff.begin(), tff.end());
  Kfc.resize(static_cast<Eigen::Index>(free.size()), static_cast<Eigen::Index>(fixed.size()));
  Kfc.setFromTriplets(tfc.begin(), tfc.end());
}

}  // namespace

struct SpdSolver::Impl {
  SpMat Kff, Kfc;
  double norm = 0.0;
  // simplicial: the supernodal path goes through BLAS kernels that misbehave on
  // some OpenBLAS core types
  Llt llt;
};

SpdSolver::SpdSolver(const SpMat& K, std::vector<int> fixed_dofs)
    : impl_(std::make_unique<Impl>()), K_(K), fixed_(std::move(fixed_dofs)) {
  std::sort(fixed_.begin(), fixed_.end());
  fixed_.erase(std::unique(fixed_.begin(), fixed_.end()), fixed_.end());
  const int n = static_cast<int>(K.rows());
  std::vector<char> is_fixed(n, 0);
  for (int d : fixed_) {
    if (d < 0 || d >= n) throw std::invalid_argument("SpdSolver: fixed dof out of range");
    is_fixed[d] = 1;
  }
  for (int i = 0; i < n; ++i)
    if (!is_fixed[i]) free_.push_back(i);
  partition(K, free_, fixed_, impl_->Kff, impl_->Kfc);
  impl_->norm = norm1(impl_->Kff);
  impl_->llt.compute(impl_->Kff);
  const double rc = impl_->llt.info() == Eigen::Success ? impl_->llt.rcond() : 0.0;
  if (impl_->llt.info() != Eigen::Success || !(rc > kSingularRcond)) {
    std::ostringstream os;
    os << "SpdSolver: reduced matrix (" << free_.size() << " free of " << n
       << " dofs, " << fixed_.size() << " fixed) is singular or indefinite (rcond " << rc << ");"
       << " check that the fixed dofs remove all rigid modes";
    throw SolverError(os.str());
  }
}

SpdSolver::~SpdSolver() = default;

Mat SpdSolver::solve(const Mat& F, const Mat& fixed_values) const {
  const int n = static_cast<int>(K_.rows());
  const int k = static_cast<int>(F.cols());
  if (F.rows() != n) throw std::invalid_argument("SpdSolver::solve: load has wrong size");
  if (fixed_values.rows() != static_cast<Eigen::Index>(fixed_.size()) ||
      (fixed_values.cols() != k && !fixed_.empty()))
    throw std::invalid_argument("SpdSolver::solve: fixed values have wrong size");
  Mat rhs(free_.size(), k);
  for (std::size_t i = 0; i < free_.size(); ++i) rhs.row(i) = F.row(free_[i]);
  if (!fixed_.empty()) rhs -= impl_->Kfc * fixed_values;
  Mat df = impl_->llt.solve(rhs);
  // one step of iterative refinement
  Mat r = rhs - impl_->Kff * df;
  df += impl_->llt.solve(r);
  r = rhs - impl_->Kff * df;
  for (int c = 0; c < k; ++c) {
    const double scale = impl_->norm * df.col(c).norm() + rhs.col(c).norm();
    if (scale > 0 && r.col(c).norm() > kResidualTol * scale) {
      std::ostringstream os;
      os << "SpdSolver: residual " << r.col(c).norm() / scale << " exceeds tolerance";
      throw SolverError(os.str());
    }
  }
  Mat d = Mat::Zero(n, k);
  for (std::size_t i = 0; i < free_.size(); ++i) d.row(free_[i]) = df.row(i);
  for (std::size_t i = 0; i < fixed_.size(); ++i) d.row(fixed_[i]) = fixed_values.row(i);
  return d;
}

Vec solve_spd(const SpMat& K, const Vec& F, const std::vector<std::pair<int, double>>& fixed) {
  std::vector<std::pair<int, double>> sorted = fixed;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> dofs;
  Vec values(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i].first == sorted[i - 1].first)
      throw std::invalid_argument("solve_spd: dof fixed twice");
    dofs.push_back(sorted[i].first);
    values(i) = sorted[i].second;
  }
  SpdSolver s(K, dofs);
  return s.solve(F, values);
}

std::vector<int> dependent_rows(const SpMat& G) {
  if (G.rows() == 0) return {};
  SpMat Gt = G.transpose();
  Gt.makeCompressed();
  Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr;
  double max_norm = 0.0;
  for (int c = 0; c < Gt.cols(); ++c) max_norm = std::max(max_norm, Gt.col(c).norm());
  qr.setPivotThreshold(1e-10 * max_norm);
  qr.compute(Gt);
  if (qr.info() != Eigen::Success) throw SolverError("dependent_rows: QR failed");
  std::vector<int> dep;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = qr.rank(); i < Gt.cols(); ++i) dep.push_back(perm(i));
  std::sort(dep.begin(), dep.end());
  return dep;
}

struct SaddleSolver::Impl {
  SpMat kkt;
  Vec row_scale;
  double normK = 0.0, normG = 0.0;
  Eigen::UmfPackLU<SpMat> lu;
};

SaddleSolver::SaddleSolver(const SpMat& K, const SpMat& G, bool check_rank)
    : impl_(std::make_unique<Impl>()),
      K_(K),
      G_(G),
      n_(static_cast<int>(K.rows())),
      m_(static_cast<int>(G.rows())) {
  if (K.cols() != n_ || G.cols() != n_)
    throw std::invalid_argument("SaddleSolver: inconsistent dimensions");
  if (check_rank) {
    const auto dep = dependent_rows(G);
    if (!dep.empty()) {
      std::ostringstream os;
      os << "SaddleSolver: constraint matrix is rank deficient; dependent rows:";
      for (std::size_t i = 0; i < std::min<std::size_t>(dep.size(), 20); ++i) os << ' ' << dep[i];
      throw SolverError(os.str());
    }
  }
  // Rows of G are rescaled to the magnitude of the diagonal of K; the
  // normalization rows of periodic coupling are otherwise ~h^2 next to O(E).
  double kdiag = 0.0;
  for (int i = 0; i < n_; ++i) kdiag = std::max(kdiag, std::abs(K.coeff(i, i)));
  if (kdiag == 0.0) kdiag = 1.0;
  Vec rowmax = Vec::Zero(m_);
  for (int c = 0; c < G.outerSize(); ++c)
    for (SpMat::InnerIterator it(G, c); it; ++it)
      rowmax(it.row()) = std::max(rowmax(it.row()), std::abs(it.value()));
  impl_->row_scale.resize(m_);
  for (int i = 0; i < m_; ++i) impl_->row_scale(i) = rowmax(i) > 0 ? kdiag / rowmax(i) : 1.0;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(K.nonZeros() + 2 * G.nonZeros());
  for (int c = 0; c < K.outerSize(); ++c)
    for (SpMat::InnerIterator it(K, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int c = 0; c < G.outerSize(); ++c)
    for (SpMat::InnerIterator it(G, c); it; ++it) {
      const double v = impl_->row_scale(it.row()) * it.value();
      t.emplace_back(n_ + it.row(), it.col(), v);
      t.emplace_back(it.col(), n_ + it.row(), v);
    }
  impl_->kkt.resize(n_ + m_, n_ + m_);
  impl_->kkt.setFromTriplets(t.begin(), t.end());
  impl_->kkt.makeCompressed();
  impl_->normK = norm1(K);
  impl_->normG = norm1(G);
  impl_->lu.compute(impl_->kkt);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverError("SaddleSolver: factorization of the saddle matrix failed (singular)");
}

SaddleSolver::~SaddleSolver() = default;

std::pair<Mat, Mat> SaddleSolver::solve(const Mat& rhs_primal, const Mat& rhs_constraint) const {
  const int k = static_cast<int>(rhs_primal.cols());
  if (rhs_primal.rows() != n_ || rhs_constraint.rows() != m_ || rhs_constraint.cols() != k)
    throw std::invalid_argument("SaddleSolver::solve: right-hand side has wrong size");
  Mat b(n_ + m_, k);
  b.topRows(n_) = rhs_primal;
  b.bottomRows(m_) = impl_->row_scale.asDiagonal() * rhs_constraint;
  Mat x = impl_->lu.solve(b);
  for (int step = 0; step < 2; ++step) {
    const Mat r = b - impl_->kkt * x;
    x += impl_->lu.solve(r);
  }
  Mat d = x.topRows(n_);
  Mat lambda = impl_->row_scale.asDiagonal() * x.bottomRows(m_);
  for (int c = 0; c < k; ++c) {
    const Vec Kd = K_ * d.col(c);
    const Vec Gtl = G_.transpose() * lambda.col(c);
    const Vec Gd = G_ * d.col(c);
    const double r1 = (Kd + Gtl - rhs_primal.col(c)).norm();
    const double r2 = (Gd - rhs_constraint.col(c)).norm();
    const double s1 = impl_->normK * d.col(c).norm() + impl_->normG * lambda.col(c).norm() +
                      rhs_primal.col(c).norm();
    const double s2 = impl_->normG * d.col(c).norm() + rhs_constraint.col(c).norm();
    if ((s1 > 0 && r1 > kResidualTol * s1) || (s2 > 0 && r2 > kResidualTol * s2)) {
      std::ostringstream os;
      os << "SaddleSolver: residual (" << (s1 > 0 ? r1 / s1 : 0.0) << ", "
         << (s2 > 0 ? r2 / s2 : 0.0) << ") exceeds tolerance; indefinite breakdown";
      throw SolverError(os.str());
    }
  }
  return {std::move(d), std::move(lambda)};
}

std::pair<Mat, Mat> solve_saddle(const ConstrainedSystem& system) {
  SaddleSolver s(system.K, system.G);
  return s.solve(system.rhs_primal, system.rhs_constraint);
}

}  // namespace fehmm
