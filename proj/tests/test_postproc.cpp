#include "fehmm/postproc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace fehmm;

namespace {

Eigen::Vector3d bilinear(const Point& x) {
  return {1.0 + 2.0 * x.x() - 3.0 * x.y() + 4.0 * x.x() * x.y(), -0.5 + x.y() + 7.0 * x.x() * x.y(),
          3.0 - x.x() - 2.0 * x.x() * x.y()};
}

SprSamples bilinear_samples(const StructuredQuadMesh& m) {
  SprSamples s;
  s.x.resize(m.num_elements());
  s.value.resize(m.num_elements());
  for (int e = 0; e < m.num_elements(); ++e)
    for (const auto& xi : superconvergent_sites(m.order)) {
      const Point x = m.element_map(e, xi);
      s.x[e].push_back(x);
      s.value[e].push_back(bilinear(x));
    }
  return s;
}

Vec field(const StructuredQuadMesh& m, double a) {
  Vec d(2 * m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n) {
    const Point& x = m.nodes[n];
    d(2 * n) = a * x.x() * x.y();
    d(2 * n + 1) = -a * x.x() * x.x();
  }
  return d;
}

}  // namespace

TEST(Spr, ReproducesBilinearFieldsOnEveryPatchType) {
  for (int order : {1, 2})
    for (const auto& m : {square_cantilever_mesh(5, order), tapered_cantilever_mesh(4, order)}) {
      const SprResult r = spr_recover(m, bilinear_samples(m));
      EXPECT_EQ(r.degenerate_patches, 0);
      // interior, edge and corner nodes all included
      for (int n = 0; n < m.num_nodes(); ++n)
        EXPECT_LT((r.nodal[n] - bilinear(m.nodes[n])).norm(), 1e-12 * bilinear(m.nodes[n]).norm() + 1e-12)
            << "order " << order << " node " << n;
    }
}

TEST(Spr, ReproducesOnSingleRowMesh) {
  // one element per direction: every Q4 patch has a single sample and falls back
  const auto m = square_cantilever_mesh(1, 1);
  const SprResult r = spr_recover(m, bilinear_samples(m));
  EXPECT_EQ(r.degenerate_patches, 4);
  for (int n = 0; n < m.num_nodes(); ++n) EXPECT_LT((r.nodal[n] - bilinear(Point(0.5, 0.5))).norm(), 1e-12);
}

TEST(Spr, SitesAndSampling) {
  EXPECT_EQ(superconvergent_sites(1).size(), 1u);
  EXPECT_EQ(superconvergent_sites(2).size(), 4u);
  const auto m = square_cantilever_mesh(3, 1);
  // affine field: constant strain, exact at every site
  Vec d(2 * m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n) {
    d(2 * n) = 0.1 * m.nodes[n].x() + 0.3 * m.nodes[n].y();
    d(2 * n + 1) = -0.2 * m.nodes[n].y();
  }
  const Eigen::Matrix3d A = voigt_tensor(1.0, 0.0).voigt;
  const auto s = sample_superconvergent(m, d, A, true);
  for (const auto& v : s.value)
    for (const auto& sv : v) EXPECT_LT((sv - A * Eigen::Vector3d(0.1, -0.2, 0.3)).norm(), 1e-14);
}

TEST(Spr, InterpolateNodal) {
  const auto m = square_cantilever_mesh(2, 2);
  std::vector<Eigen::Vector3d> nodal(m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n) nodal[n] = bilinear(m.nodes[n]);
  const Point xi(0.2, -0.7);
  EXPECT_LT((interpolate_nodal(m, nodal, 3, xi) - bilinear(m.element_map(3, xi))).norm(), 1e-13);
}

TEST(Postproc, ConvergenceRate) {
  std::vector<std::pair<double, double>> s;
  for (double h : {1.0 / 4, 1.0 / 8, 1.0 / 16, 1.0 / 32}) s.emplace_back(h, 3.0 * h * h);
  EXPECT_NEAR(convergence_rate(s, 0), 2.0, 1e-12);
  // window picks the finest sizes regardless of input order
  s.emplace_back(1.0, 10.0);
  EXPECT_NEAR(convergence_rate(s, 3), 2.0, 1e-12);
  EXPECT_NEAR(convergence_rate({{0.5, 0.25}, {0.25, 0.125}}, 2), 1.0, 1e-12);
  EXPECT_THROW(convergence_rate({{0.5, 1.0}}, 3), std::invalid_argument);
  EXPECT_THROW(convergence_rate({{0.5, 1.0}, {0.25, 0.0}}, 3), std::invalid_argument);
}

TEST(Postproc, DecompositionFloors) {
  const auto a = decompose_errors(3.0, 1.0);
  EXPECT_EQ(a.e_mic, 2.0);
  EXPECT_FALSE(a.floored);
  const auto b = decompose_errors(1.0, 1.5);
  EXPECT_EQ(b.e_mic, 0.0);
  EXPECT_TRUE(b.floored);
  EXPECT_EQ(b.e_tot, 1.0);
}

TEST(Postproc, Effectivity) {
  EXPECT_DOUBLE_EQ(effectivity(1.1, 1.0), 1.1);
  EXPECT_THROW(effectivity(1.0, 0.0), std::invalid_argument);
}

TEST(Postproc, RelativeElementErrors) {
  const auto r = relative_element_errors(std::vector<double>{1.0, 4.0, 0.0, 9.0}, 2.0);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  EXPECT_DOUBLE_EQ(r[1], 2.0);
  EXPECT_DOUBLE_EQ(r[2], 0.0);
  EXPECT_DOUBLE_EQ(r[3], 3.0);
}

TEST(Postproc, NormNames) {
  for (auto n : {NormKind::L2, NormKind::H1, NormKind::Energy})
    EXPECT_EQ(norm_kind_from_string(to_string(n)), n);
  EXPECT_THROW(norm_kind_from_string("max"), std::invalid_argument);
}

TEST(Postproc, ErrorNormsAgainstSelfAndNested) {
  const auto A = voigt_tensor(40000.0, 0.2);
  const auto coarse = square_cantilever_mesh(4, 1);
  const auto fine = square_cantilever_mesh(8, 1);
  const MaterialFn mat = [&A](const Point&) { return A.voigt; };
  const Vec dc = field(coarse, 1.0), df = field(fine, 1.0);
  // identical fields on nested meshes: the coarse bilinear interpolant is not
  // reproduced exactly, but a field against itself is zero
  for (auto n : {NormKind::L2, NormKind::H1, NormKind::Energy}) {
    EXPECT_LT(error_norm(view(fine, df, mat), view(fine, df, mat), n), 1e-14);
    EXPECT_GT(error_norm(view(coarse, dc, mat), view(fine, df, mat), n), 0.0);
  }
  // a coarse field lives exactly in the fine space
  Vec lin(2 * coarse.num_nodes()), linf(2 * fine.num_nodes());
  for (int n = 0; n < coarse.num_nodes(); ++n) lin.segment<2>(2 * n) = coarse.nodes[n] * 0.5;
  for (int n = 0; n < fine.num_nodes(); ++n) linf.segment<2>(2 * n) = fine.nodes[n] * 0.5;
  for (auto n : {NormKind::L2, NormKind::H1, NormKind::Energy})
    EXPECT_LT(error_norm(view(coarse, lin, mat), view(fine, linf, mat), n), 1e-13);
  // field norms match the fem norms
  EXPECT_NEAR(field_norm(view(fine, df, mat), NormKind::L2), norm_L2(fine, df), 1e-13);
  EXPECT_NEAR(field_norm(view(fine, df, mat), NormKind::H1), norm_H1(fine, df), 1e-13);
  EXPECT_NEAR(field_norm(view(fine, df, mat), NormKind::Energy), norm_energy(fine, df, mat), 1e-9);
}

TEST(Postproc, ProjectionEvaluatesCoarseField) {
  const auto coarse = tapered_cantilever_mesh(3, 2);
  const auto fine = tapered_cantilever_mesh(6, 1);
  Vec d(2 * coarse.num_nodes());
  for (int n = 0; n < coarse.num_nodes(); ++n) d.segment<2>(2 * n) << coarse.nodes[n].x() + 2 * coarse.nodes[n].y(), -coarse.nodes[n].x();
  const auto pv = project_to_reference(coarse, d, fine);
  ASSERT_EQ(pv.x.size(), static_cast<std::size_t>(fine.num_elements() * 4));
  double area = 0;
  for (std::size_t i = 0; i < pv.x.size(); ++i) {
    EXPECT_NEAR(pv.u[i].x(), pv.x[i].x() + 2 * pv.x[i].y(), 1e-12);
    EXPECT_NEAR(pv.grad[i](0, 1), 2.0, 1e-10);
    EXPECT_NEAR(pv.grad[i](1, 0), -1.0, 1e-10);
    area += pv.weight[i];
  }
  EXPECT_NEAR(area, fine.area(), 1e-12);
}

TEST(Postproc, EstimatorOnSingleScaleSolution) {
  const auto m = tapered_cantilever_mesh(8, 1);
  const auto A = voigt_tensor(40000.0, 0.2);
  const auto s = single_scale_solve(m, A, constant_load({0.0, -10.0}), std::nullopt, clamp_left_edge(m));
  const auto est = estimate_error_energy(s);
  EXPECT_GT(est.estimate, 0.0);
  EXPECT_EQ(est.per_element.size(), static_cast<std::size_t>(m.num_elements()));
  double sum = 0;
  for (double v : est.per_element) sum += v;
  EXPECT_NEAR(std::sqrt(sum), est.estimate, 1e-12 * est.estimate);
  EXPECT_EQ(est.degenerate_patches, 0);
}

TEST(Csv, HeaderAndRowFormat) {
  EXPECT_STREQ(kCsvHeader, "level,H,h,N_mac,N_mic,norm,true_error,est_error,theta,rate,config_hash");
  ErrorRow r;
  r.level = 2;
  r.H = 0.125;
  r.h = 0.005 / 16;
  r.N_mac = 8;
  r.N_mic = 16;
  r.norm = "L2";
  r.true_error = 1.5e-3;
  r.est_error = std::numeric_limits<double>::quiet_NaN();
  r.theta = std::numeric_limits<double>::quiet_NaN();
  r.rate = 2.01;
  EXPECT_EQ(format_row(r, "00ff00ff00ff00ff"), "2,0.125,0.0003125,8,16,L2,0.0015,nan,nan,2.01,00ff00ff00ff00ff");
}

TEST(Csv, FileEmbedsConfig) {
  const auto dir = std::filesystem::temp_directory_path() / "fehmm_csv_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "e.csv").string();
  ErrorRow r;
  r.norm = "H1";
  write_error_csv(path, {r, r}, "abc", "a = 1\nb = 2\n");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("# a = 1\n# b = 2\n", 0), 0u);
  EXPECT_NE(text.find(std::string(kCsvHeader) + "\n"), std::string::npos);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  EXPECT_EQ(lines, 5);
  std::filesystem::remove_all(dir);
}
