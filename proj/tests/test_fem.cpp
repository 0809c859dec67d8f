#include "fehmm/fem.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace fehmm;

namespace {

MaterialFn constant(double E, double nu) {
  const Eigen::Matrix3d A = voigt_tensor(E, nu).voigt;
  return [A](const Point&) { return A; };
}

// Textbook plane-stress stiffness of the unit square Q4 (counterclockwise from
// lower-left, dofs interleaved).
Mat textbook_q4(double E, double nu) {
  const double k[8] = {0.5 - nu / 6,        0.125 + nu / 8,  -0.25 - nu / 12, -0.125 + 3 * nu / 8,
                       -0.25 + nu / 12,     -0.125 - nu / 8, nu / 6,          0.125 - 3 * nu / 8};
  const int idx[8][8] = {{0, 1, 2, 3, 4, 5, 6, 7}, {1, 0, 7, 6, 5, 4, 3, 2},
                         {2, 7, 0, 5, 6, 3, 4, 1}, {3, 6, 5, 0, 7, 2, 1, 4},
                         {4, 5, 6, 7, 0, 1, 2, 3}, {5, 4, 3, 2, 1, 0, 7, 6},
                         {6, 3, 4, 1, 2, 7, 0, 5}, {7, 2, 1, 4, 3, 6, 5, 0}};
  Mat K(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) K(i, j) = E / (1 - nu * nu) * k[idx[i][j]];
  return K;
}

Vec linear_field(const StructuredQuadMesh& m, const Eigen::Matrix2d& H, const Eigen::Vector2d& c) {
  Vec d(2 * m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n) d.segment<2>(2 * n) = c + H * m.nodes[n];
  return d;
}

int count_zero_eigs(const Mat& K, double rel) {
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(K).eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  int z = 0;
  for (int i = 0; i < ev.size(); ++i) z += std::abs(ev(i)) < rel * scale;
  return z;
}

}  // namespace

TEST(Quadrature, WeightsAndMonomials) {
  for (int n = 1; n <= 4; ++n) {
    const auto r = gauss_rule(n);
    EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), 4.0, 1e-14);
    for (int a = 0; a <= 2 * n - 1; ++a)
      for (int b = 0; b <= 2 * n - 1; ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < r.points.size(); ++q)
          s += r.weights[q] * std::pow(r.points[q].x(), a) * std::pow(r.points[q].y(), b);
        const double ex = (a % 2 ? 0.0 : 2.0 / (a + 1)) * (b % 2 ? 0.0 : 2.0 / (b + 1));
        EXPECT_NEAR(s, ex, 1e-13) << n << " " << a << " " << b;
      }
  }
  EXPECT_EQ(default_rule(1).points.size(), 4u);
  EXPECT_EQ(default_rule(2).points.size(), 9u);
}

TEST(Shape, Q4Center) {
  const auto s = shape_functions(1, Point::Zero());
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s.N(i), 0.25);
}

TEST(Shape, KroneckerAndPartition) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int order : {1, 2}) {
    const auto nodes = reference_nodes(order);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto s = shape_functions(order, nodes[k]);
      for (std::size_t i = 0; i < nodes.size(); ++i) EXPECT_NEAR(s.N(i), i == k ? 1.0 : 0.0, 1e-14);
    }
    for (int t = 0; t < 100; ++t) {
      const auto s = shape_functions(order, Point(u(rng), u(rng)));
      EXPECT_NEAR(s.N.sum(), 1.0, 1e-14);
      EXPECT_NEAR(s.dN.col(0).sum(), 0.0, 1e-14);
      EXPECT_NEAR(s.dN.col(1).sum(), 0.0, 1e-14);
    }
  }
  EXPECT_THROW(shape_functions(3, Point::Zero()), std::invalid_argument);
}

TEST(Element, TextbookQ4) {
  // plane strain (E, nu) equals plane stress with E/(1-nu^2), nu/(1-nu)
  const double E = 2.5, nu = 0.3;
  const auto m = build_rect_mesh(1, 1, 1, 1, 1);
  const Mat k = element_stiffness(1, m.element_coords(0), constant(E, nu), default_rule(1));
  const Mat ref = textbook_q4(E / (1 - nu * nu), nu / (1 - nu));
  EXPECT_LT((k - ref).norm(), 1e-12 * ref.norm());
  EXPECT_EQ(count_zero_eigs(k, 1e-12), 3);
}

TEST(Element, RigidModesAndSymmetry) {
  const auto m = build_tapered_mesh(2, 2, tapered_corners(1.0, 0.5, 30.4), 2);
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto c = m.element_coords(e);
    const Mat k = element_stiffness(2, c, constant(1e5, 0.2), default_rule(2));
    EXPECT_LT((k - k.transpose()).norm(), 1e-12 * k.norm());
    EXPECT_EQ(count_zero_eigs(k, 1e-10), 3);
    Vec tx = Vec::Zero(18), rot(18);
    for (int a = 0; a < 9; ++a) {
      tx(2 * a) = 1.0;
      rot(2 * a) = -c(1, a);
      rot(2 * a + 1) = c(0, a);
    }
    EXPECT_LT((k * tx).norm(), 1e-12 * k.norm());
    EXPECT_LT((k * rot).norm(), 1e-12 * k.norm() * c.norm());
  }
}

TEST(Element, HeterogeneousIsSumOverPoints) {
  const auto m = build_rect_mesh(1, 1, 1, 1, 1);
  const auto c = m.element_coords(0);
  const MaterialFn two_phase = [](const Point& x) {
    return voigt_tensor(x.x() < 0.5 ? 1.0 : 50.0, 0.2).voigt;
  };
  const auto rule = default_rule(1);
  const Mat k = element_stiffness(1, c, two_phase, rule);
  Mat sum = Mat::Zero(8, 8);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    QuadratureRule one;
    one.points = {rule.points[q]};
    one.weights = {rule.weights[q]};
    sum += element_stiffness(1, c, two_phase, one);
  }
  EXPECT_LT((k - sum).norm(), 1e-14 * k.norm());
}

TEST(Element, NegativeJacobianRejected) {
  Eigen::Matrix<double, 2, Eigen::Dynamic> c(2, 4);
  c << 0, 0, 1, 1, 0, 1, 1, 0;  // clockwise
  EXPECT_THROW(element_stiffness(1, c, constant(1, 0), default_rule(1)), GeometryError);
}

TEST(Assembly, SingleElementAndScatter) {
  const auto m1 = build_rect_mesh(1, 1, 1, 1, 1);
  const auto mat = constant(3.0, 0.25);
  const Mat k = element_stiffness(1, m1.element_coords(0), mat, default_rule(1));
  const Mat K1 = Mat(assemble_stiffness(m1, mat, default_rule(1)));
  const auto dofs = element_dofs(m1, 0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(K1(dofs[i], dofs[j]), k(i, j), 1e-14);

  const auto m2 = build_rect_mesh(2, 1, 2, 1, 1);
  const Mat K = Mat(assemble_stiffness(m2, mat, default_rule(1)));
  const auto d0 = element_dofs(m2, 0), d1 = element_dofs(m2, 1);
  Mat ref = Mat::Zero(K.rows(), K.cols());
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      ref(d0[i], d0[j]) += k(i, j);
      ref(d1[i], d1[j]) += k(i, j);
    }
  EXPECT_LT((K - ref).norm(), 1e-13);
  EXPECT_EQ(count_zero_eigs(K, 1e-12), 3);
}

TEST(Assembly, ThreadIndependent) {
  const auto m = build_rect_mesh(6, 5, 1, 1, 2);
  MicrostructureField f;
  f.kind = FieldKind::SineWave;
  f.epsilon = 0.3;
  const MaterialFn mat = [&](const Point& x) { return sample_field(f, x).voigt; };
  const SpMat a = assemble_stiffness(m, mat, default_rule(2), 1);
  const SpMat b = assemble_stiffness(m, mat, default_rule(2), 4);
  ASSERT_EQ(a.nonZeros(), b.nonZeros());
  for (int i = 0; i < a.nonZeros(); ++i) EXPECT_EQ(a.valuePtr()[i], b.valuePtr()[i]);
  EXPECT_EQ(Mat(a), Mat(a).transpose());
}

TEST(SpdSolve, Spring) {
  SpMat K(2, 2);
  K.insert(0, 0) = 2;
  K.insert(0, 1) = -2;
  K.insert(1, 0) = -2;
  K.insert(1, 1) = 2;
  Vec F(2);
  F << 0, 4;
  const Vec d = solve_spd(K, F, {{0, 0.0}});
  EXPECT_DOUBLE_EQ(d(0), 0.0);
  EXPECT_NEAR(d(1), 2.0, 1e-14);
}

TEST(SpdSolve, PatchTest) {
  Eigen::Matrix2d H;
  H << 1e-3, 2e-3, -5e-4, 3e-3;
  const Eigen::Vector2d c(0.1, -0.2);
  for (int order : {1, 2}) {
    for (const auto& m : {build_rect_mesh(4, 3, 2, 1, order),
                          build_tapered_mesh(4, 4, tapered_corners(1.0, 0.5, 30.4), order)}) {
      const SpMat K = assemble_stiffness(m, constant(40000, 0.2), default_rule(order));
      const Vec exact = linear_field(m, H, c);
      std::vector<std::pair<int, double>> fixed;
      for (int n : boundary_nodes(m))
        for (int i = 0; i < 2; ++i) fixed.emplace_back(2 * n + i, exact(2 * n + i));
      const Vec d = solve_spd(K, Vec::Zero(K.rows()), fixed);
      EXPECT_LT((d - exact).norm(), 1e-10 * exact.norm());
    }
  }
}

TEST(SpdSolve, ZeroAndSingular) {
  const auto m = build_rect_mesh(2, 2, 1, 1, 1);
  const SpMat K = assemble_stiffness(m, constant(1, 0.2), default_rule(1));
  std::vector<std::pair<int, double>> fixed;
  for (int n : m.boundary_edges[3]) {
    fixed.emplace_back(2 * n, 0.0);
    fixed.emplace_back(2 * n + 1, 0.0);
  }
  EXPECT_EQ(solve_spd(K, Vec::Zero(K.rows()), fixed).norm(), 0.0);
  EXPECT_THROW(solve_spd(K, Vec::Ones(K.rows()), {{0, 0.0}}), SolverError);
}

TEST(Saddle, SingleConstraint) {
  SpMat K(3, 3), G(1, 3);
  for (int i = 0; i < 3; ++i) K.insert(i, i) = 1.0;
  G.insert(0, 0) = 1.0;
  ConstrainedSystem s{K, G, Mat::Zero(3, 1), Mat::Constant(1, 1, 0.7)};
  const auto [d, l] = solve_saddle(s);
  EXPECT_NEAR(d(0, 0), 0.7, 1e-14);
  EXPECT_NEAR(l(0, 0), -0.7, 1e-14);
  EXPECT_NEAR(d(1, 0), 0.0, 1e-14);
}

TEST(Saddle, DirichletRveReproducesLinearField) {
  const auto m = build_rect_mesh(4, 4, 0.005, 0.005, 1);
  const SpMat K = assemble_stiffness(m, constant(40000, 0.2), default_rule(1));
  const auto bn = boundary_nodes(m);
  SpMat G(2 * bn.size(), K.cols());
  for (std::size_t r = 0; r < bn.size(); ++r) {
    G.insert(2 * r, 2 * bn[r]) = 1.0;
    G.insert(2 * r + 1, 2 * bn[r] + 1) = 1.0;
  }
  Eigen::Matrix2d H;
  H << 1, 0.5, 0.5, -1;
  const Vec lin = linear_field(m, H, Eigen::Vector2d::Zero());
  Mat rc(G.rows(), 2);
  rc.col(0) = G * lin;
  rc.col(1) = 2.0 * rc.col(0);
  SaddleSolver solver(K, G);
  const auto [d, l] = solver.solve(Mat::Zero(K.rows(), 2), rc);
  EXPECT_LT((d.col(0) - lin).norm(), 1e-10 * lin.norm());
  // reactions balance
  double fx = 0, fy = 0;
  for (Eigen::Index r = 0; r < l.rows(); r += 2) {
    fx += l(r, 0);
    fy += l(r + 1, 0);
  }
  EXPECT_LT(std::abs(fx) + std::abs(fy), 1e-10 * l.col(0).norm());
  // blocked solve equals column-by-column
  const auto [d1, l1] = solver.solve(Mat::Zero(K.rows(), 1), rc.col(1));
  EXPECT_LT((d1.col(0) - d.col(1)).norm(), 1e-14 * d.col(1).norm());
}

TEST(Saddle, RankDeficientNamed) {
  SpMat K(3, 3), G(2, 3);
  for (int i = 0; i < 3; ++i) K.insert(i, i) = 1.0;
  G.insert(0, 0) = 1.0;
  G.insert(1, 0) = 2.0;
  EXPECT_EQ(dependent_rows(G), std::vector<int>{1});
  try {
    SaddleSolver s(K, G);
    FAIL() << "rank-deficient G accepted";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Norms, ConstantField) {
  const auto m = build_rect_mesh(3, 3, 1, 1, 2);
  const Vec d = Vec::Constant(2 * m.num_nodes(), 1.5);
  EXPECT_NEAR(norm_L2(m, d), 1.5 * std::sqrt(2.0), 1e-13);
  EXPECT_NEAR(norm_H1(m, d), norm_L2(m, d), 1e-13);
}

TEST(Norms, EnergyOfStretch) {
  const auto m = build_rect_mesh(2, 2, 1, 1, 1);
  Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
  H(0, 0) = 1.0;
  EXPECT_NEAR(norm_energy(m, linear_field(m, H, Eigen::Vector2d::Zero()), constant(1, 0)), 1.0, 1e-13);
}

TEST(Norms, EnergyMatchesQuadraticForm) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  MicrostructureField f;
  f.kind = FieldKind::MatrixInclusion;
  f.epsilon = 0.5;
  const MaterialFn mat = [&](const Point& x) { return sample_field(f, x).voigt; };
  for (int order : {1, 2}) {
    const auto m = build_tapered_mesh(3, 3, tapered_corners(1.0, 0.5, 30.4), order);
    const SpMat K = assemble_stiffness(m, mat, default_rule(order));
    for (int t = 0; t < 5; ++t) {
      Vec d(K.rows());
      for (int i = 0; i < d.size(); ++i) d(i) = g(rng);
      const double e = norm_energy(m, d, mat);
      EXPECT_NEAR(e, std::sqrt(d.dot(K * d)), 1e-10 * e);
    }
  }
}
