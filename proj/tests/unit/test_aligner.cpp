#include <gtest/gtest.h>

#include <cmath>

#include "../common/two_plane.hpp"
#include "meshalign/aligner.hpp"
#include "meshalign/evalkit.hpp"

using namespace meshalign;

namespace {

double max_vertex_offset(const Mesh& a, const Mesh& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    worst = std::max(worst, (a.vertices[i] - b.vertices[i]).norm());
  }
  return worst;
}

double corner_error(const Homography& h, const Homography& ref, double size) {
  const Rect rect{0, 0, size, size};
  return rmse_4pt(to_4pt(h, rect), to_4pt(ref, rect));
}

}  // namespace

TEST(AlignConfig, Validation) {
  AlignConfig ok;
  EXPECT_NO_THROW(ok.validate());
  auto bad = [](auto edit) {
    AlignConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](AlignConfig& c) { c.grid_rows = 0; });
  bad([](AlignConfig& c) { c.grid_cols = -1; });
  bad([](AlignConfig& c) { c.patch = 2; });
  bad([](AlignConfig& c) { c.alpha = 0; });
  bad([](AlignConfig& c) { c.depth_levels = 0; });
  bad([](AlignConfig& c) { c.mu = -1; });
  bad([](AlignConfig& c) { c.refine_iters = -1; });
  bad([](AlignConfig& c) { c.step_size = 0; });
  bad([](AlignConfig& c) { c.working_resolution = 8; });
}

TEST(Align, RejectsBadInput) {
  const Image a = make_texture(64, 64, 1, 3);
  EXPECT_THROW(align(Image(), a, AlignConfig{}), std::invalid_argument);
  EXPECT_THROW(align(a, make_texture(64, 64, 1, 1), AlignConfig{}), std::invalid_argument);
  EXPECT_THROW(align(a, a, AlignConfig{}, constant_depth(10, 10)), std::invalid_argument);
}

TEST(Align, IdentityPair) {
  const Image a = make_texture(128, 128, 21, 3);
  const AlignmentResult r = align(a, a, AlignConfig{});
  EXPECT_LT(corner_error(r.global_h, Homography::identity(), 128), 0.5);
  EXPECT_TRUE(r.mesh_valid);
  EXPECT_LT(max_vertex_offset(r.mesh, regular_mesh(8, 8, 128, 128)), 0.5);
  ASSERT_EQ(r.history.size(), 3u);
  for (std::size_t i = 1; i < r.mesh_trace.size(); ++i) {
    EXPECT_LE(r.mesh_trace[i], r.mesh_trace[i - 1]);
  }
}

TEST(RefineGlobal, OptimumIsFixedPoint) {
  const Image a = make_texture(64, 64, 22, 3);
  RefineTrace trace;
  const Homography h = refine_global(a, a, Homography::identity(), AlignConfig{}, &trace);
  EXPECT_EQ(h.matrix(), Homography::identity().matrix());
  EXPECT_EQ(trace.iterations, 0);
}

TEST(RefineGlobal, RecoversSubPixelShift) {
  const Image src = make_texture(96, 96, 23, 3);
  const Image ref = crop(src, 16, 16, 64, 64);
  const Image tgt = crop(warp_global(src, Homography::translation(-1.0, 0.5), 96, 96), 16, 16, 64, 64);
  // ref(p) = tgt(p + (1, -0.5)).
  const Homography truth = Homography::translation(1.0, -0.5);
  RefineTrace trace;
  AlignConfig cfg;
  cfg.refine_iters = 200;
  const Homography h = refine_global(ref, tgt, Homography::identity(), cfg, &trace);
  EXPECT_LT(corner_error(h, truth, 64), 0.1);
  ASSERT_GE(trace.accepted.size(), 2u);
  for (std::size_t i = 1; i < trace.accepted.size(); ++i) {
    EXPECT_LT(trace.accepted[i], trace.accepted[i - 1]);
  }
}

TEST(RefineMesh, AlignedPairIsStationary) {
  const Image a = make_texture(64, 64, 24, 3);
  const Mesh m0 = regular_mesh(4, 4, 64, 64);
  AlignConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 4;
  const Mesh m = refine_mesh(a, a, m0, constant_depth(64, 64), cfg);
  EXPECT_LT(max_vertex_offset(m, m0), 0.01);
}

TEST(RefineMesh, RejectsInvalidStart) {
  const Image a = make_texture(32, 32, 25, 3);
  Mesh m0 = regular_mesh(2, 2, 32, 32);
  m0.vertex(1, 1) = Vec2(40, 40);
  EXPECT_THROW(refine_mesh(a, a, m0, constant_depth(32, 32), AlignConfig{}), std::domain_error);
}

TEST(RefineMesh, ShapeWeightAndParallax) {
  const auto pair = meshalign::testing::make_two_plane_pair(31, 128);
  AlignConfig cfg;
  cfg.refine_iters = 60;
  cfg.depth_levels = 2;
  const Mesh m0 = mesh_from_homography(pair.left, cfg.grid_rows, cfg.grid_cols, 128, 128);
  const double global = content_loss_layer(pair.reference, pair.target, pair.left);

  AlignConfig free_cfg = cfg;
  free_cfg.mu = 0;
  const Mesh m_free = refine_mesh(pair.reference, pair.target, m0, pair.depth, free_cfg);
  const Mesh m_tied = refine_mesh(pair.reference, pair.target, m0, pair.depth, cfg);

  EXPECT_LT(content_loss_layer(pair.reference, pair.target, m_free), global);
  const GridDepthLevels levels = grid_depth_levels(pair.depth, m_free, 2);
  EXPECT_LE(shape_loss(m_tied, grid_depth_levels(pair.depth, m_tied, 2)),
            shape_loss(m_free, levels) + 1e-12);
}

TEST(Align, CoarseToFineResiduals) {
  // The layer-2 residual is smaller than the layer-1 one on at least 90%
  // of a 50-pair suite; the global stages do not depend on the grid, so a
  // 2x2 mesh keeps the run short.
  AlignConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 2;
  const Rect rect{0, 0, 128, 128};
  int smaller = 0;
  for (int i = 0; i < 50; ++i) {
    const Image src = make_texture(150, 150, 500 + i, 3);
    const SynthPair p = synth_pair(src, 8.0, 128, 600 + i);
    const AlignmentResult r = align(p.reference, p.target, cfg);
    const double d = (r.working_h.matrix() / r.working_h.matrix()(2, 2) -
                      (r.layer1_residual * r.layer2_residual).matrix() /
                          (r.layer1_residual * r.layer2_residual).matrix()(2, 2))
                         .cwiseAbs()
                         .maxCoeff();
    EXPECT_LT(d, 1e-9);
    const double l1 = rmse_4pt(to_4pt(r.layer1_residual, rect), FourPtMotion{});
    const double l2 = rmse_4pt(to_4pt(r.layer2_residual, rect), FourPtMotion{});
    if (l2 < l1) ++smaller;
    ASSERT_EQ(r.history.size(), 3u);
    EXPECT_LE(r.history[1].content_per_layer[1], r.history[0].content_per_layer[1] + 1e-12);
    for (std::size_t k = 1; k < r.global_trace.size(); ++k) {
      EXPECT_LE(r.global_trace[k], r.global_trace[k - 1]);
    }
  }
  EXPECT_GE(smaller, 45);
}
