#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "meshalign/evalkit.hpp"
#include "meshalign/mesh_warp.hpp"
#include "meshalign/parallel.hpp"

using namespace meshalign;

namespace {

Homography random_h(std::mt19937_64& rng, double rho, double side) {
  std::uniform_real_distribution<double> u(-rho, rho);
  FourPtMotion m;
  for (auto& d : m.d) d = Vec2(u(rng), u(rng));
  return from_4pt(m, Rect{0, 0, side, side});
}

// Closed-form unit-square-to-quad map (Heckbert), corners in the order
// (0,0) (1,0) (1,1) (0,1).
Eigen::Matrix3d square_to_quad(const Vec2& p0, const Vec2& p1, const Vec2& p2, const Vec2& p3) {
  const double sx = p0.x() - p1.x() + p2.x() - p3.x();
  const double sy = p0.y() - p1.y() + p2.y() - p3.y();
  const double dx1 = p1.x() - p2.x(), dx2 = p3.x() - p2.x();
  const double dy1 = p1.y() - p2.y(), dy2 = p3.y() - p2.y();
  const double den = dx1 * dy2 - dx2 * dy1;
  const double g = (sx * dy2 - dx2 * sy) / den;
  const double h = (dx1 * sy - sx * dy1) / den;
  Eigen::Matrix3d m;
  m << p1.x() - p0.x() + g * p1.x(), p3.x() - p0.x() + h * p3.x(), p0.x(),
      p1.y() - p0.y() + g * p1.y(), p3.y() - p0.y() + h * p3.y(), p0.y(), g, h, 1;
  return m;
}

double max_diff(const Image& a, const Image& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace

TEST(Mesh, Regular) {
  const Mesh one = regular_mesh(1, 1, 100, 100);
  ASSERT_EQ(one.vertices.size(), 4u);
  EXPECT_EQ(one.vertex(0, 0), Vec2(0, 0));
  EXPECT_EQ(one.vertex(0, 1), Vec2(100, 0));
  EXPECT_EQ(one.vertex(1, 0), Vec2(0, 100));
  EXPECT_EQ(one.vertex(1, 1), Vec2(100, 100));

  const Mesh m = regular_mesh(8, 8, 128, 96);
  EXPECT_EQ(m.vertices.size(), 81u);
  EXPECT_DOUBLE_EQ(m.vertex(3, 5).x(), 5 * 12.0);
  EXPECT_DOUBLE_EQ(m.vertex(3, 5).y(), 3 * 16.0);
  EXPECT_TRUE(mesh_is_valid(m));
  EXPECT_THROW(regular_mesh(0, 3, 10, 10), std::invalid_argument);
}

TEST(Mesh, FromHomography) {
  const Mesh reg = regular_mesh(4, 6, 60, 90);
  const Mesh id = mesh_from_homography(Homography::identity(), 4, 6, 60, 90);
  for (std::size_t i = 0; i < reg.vertices.size(); ++i) {
    EXPECT_LT((id.vertices[i] - reg.vertices[i]).norm(), 1e-12);
  }
  const Mesh t = mesh_from_homography(Homography::translation(3, -2), 4, 6, 60, 90);
  for (std::size_t i = 0; i < reg.vertices.size(); ++i) {
    EXPECT_LT((t.vertices[i] - reg.vertices[i] - Vec2(3, -2)).norm(), 1e-12);
  }
  std::mt19937_64 rng(1);
  const Homography h = random_h(rng, 8, 90);
  const Mesh m = mesh_from_homography(h, 4, 6, 60, 90);
  for (std::size_t i = 0; i < reg.vertices.size(); ++i) {
    EXPECT_LT((m.vertices[i] - h(reg.vertices[i])).norm(), 1e-12);
  }
}

TEST(Mesh, CellHomography) {
  const Mesh reg = regular_mesh(3, 3, 30, 30);
  for (const auto& h : cell_homographies(reg)) {
    EXPECT_LT((h.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
  std::mt19937_64 rng(2);
  const Homography h = random_h(rng, 10, 128);
  const Mesh m = mesh_from_homography(h, 8, 8, 128, 128);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const Homography hc = cell_homography(m, r, c);
      for (const auto& p : m.canvas_cell(r, c).corners()) EXPECT_LT((hc(p) - h(p)).norm(), 1e-8);
    }
  }
  EXPECT_THROW(cell_homography(m, 8, 0), std::out_of_range);
}

TEST(Mesh, CellHomographyMatchesClosedForm) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(-3, 3);
  Mesh m = regular_mesh(4, 4, 64, 64);
  for (auto& v : m.vertices) v += Vec2(jitter(rng), jitter(rng));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const auto q = m.cell_quad(r, c);
      const Rect cell = m.canvas_cell(r, c);
      Eigen::Matrix3d to_unit;
      to_unit << 1 / cell.width, 0, -cell.x / cell.width, 0, 1 / cell.height,
          -cell.y / cell.height, 0, 0, 1;
      const Homography closed(square_to_quad(q[0], q[1], q[3], q[2]) * to_unit);
      const Homography dlt = cell_homography(m, r, c);
      EXPECT_LT((closed.matrix() - dlt.matrix()).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Mesh, Classification) {
  const std::array<Vec2, 4> square{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)};
  EXPECT_EQ(classify_quad(square), QuadShape::kConvex);
  // BR pulled inside: simple but not convex.
  const std::array<Vec2, 4> dart{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(0.3, 0.3)};
  EXPECT_EQ(classify_quad(dart), QuadShape::kConcave);
  // TR and BR swapped: self-intersecting bow tie.
  const std::array<Vec2, 4> bow{Vec2(0, 0), Vec2(1, 1), Vec2(0, 1), Vec2(1, 0)};
  EXPECT_EQ(classify_quad(bow), QuadShape::kDegenerate);
  // Mirrored orientation.
  const std::array<Vec2, 4> flipped{Vec2(1, 0), Vec2(0, 0), Vec2(1, 1), Vec2(0, 1)};
  EXPECT_EQ(classify_quad(flipped), QuadShape::kDegenerate);
  const std::array<Vec2, 4> collapsed{Vec2(0, 0), Vec2(0, 0), Vec2(0, 1), Vec2(1, 1)};
  EXPECT_EQ(classify_quad(collapsed), QuadShape::kDegenerate);

  Mesh m = regular_mesh(2, 2, 20, 20);
  m.vertex(1, 1) = Vec2(25, 25);
  EXPECT_FALSE(mesh_is_valid(m));
  EXPECT_FALSE(mesh_is_warpable(m));
  EXPECT_THROW(warp_mesh(Image(20, 20, 1), m), std::domain_error);
}

TEST(Mesh, WarpIdentityAndGlobalEquivalence) {
  const Image img = make_texture(64, 80, 4, 3);
  const Mesh reg = regular_mesh(8, 8, 64, 80);
  EXPECT_LT(max_diff(warp_mesh(img, reg), img), 1e-6);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const Homography h = random_h(rng, 6, 64);
    const Image a = warp_mesh(img, mesh_from_homography(h, 8, 8, 64, 80));
    EXPECT_LT(max_diff(a, warp_global(img, h, 64, 80)), 1e-5);
  }
}

TEST(Mesh, VertexLocality) {
  const Image img = make_texture(64, 64, 6, 1);
  Mesh m = regular_mesh(4, 4, 64, 64);
  const Image base = warp_mesh(img, m);
  m.vertex(2, 1) += Vec2(2.5, -1.5);
  const Image moved = warp_mesh(img, m);
  bool changed = false;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const int r = y / 16, c = x / 16;
      const bool incident = (r == 1 || r == 2) && (c == 0 || c == 1);
      const double d = std::abs(moved.at(0, y, x) - base.at(0, y, x));
      if (!incident) {
        EXPECT_EQ(d, 0.0) << x << "," << y;
      } else if (d > 0) {
        changed = true;
      }
    }
  }
  EXPECT_TRUE(changed);
}

TEST(Mesh, WarpMask) {
  const Image ones = warp_mask(regular_mesh(4, 4, 32, 32), 32, 32);
  for (double v : ones.data()) EXPECT_NEAR(v, 1.0, 1e-12);

  // Content moved right by 10: canvas x samples target x - 10.
  const Mesh shifted = mesh_from_homography(Homography::translation(-10, 0), 4, 4, 32, 48);
  const Image mask = warp_mask(shifted, 32, 48);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      const double v = mask.at(0, y, x);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      if (x < 10) EXPECT_NEAR(v, 0.0, 1e-12);
      if (x >= 11) EXPECT_NEAR(v, 1.0, 1e-12);
    }
  }
  std::mt19937_64 rng(7);
  const Image any = warp_mask(mesh_from_homography(random_h(rng, 12, 32), 4, 4, 32, 32), 32, 32);
  for (double v : any.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

TEST(Mesh, DeterministicAcrossThreadCounts) {
  const Image img = make_texture(64, 64, 8, 3);
  std::mt19937_64 rng(9);
  const Mesh m = mesh_from_homography(random_h(rng, 5, 64), 8, 8, 64, 64);
  set_thread_count(1);
  const Image a = warp_mesh(img, m);
  set_thread_count(4);
  const Image b = warp_mesh(img, m);
  set_thread_count(0);
  EXPECT_EQ(a.data(), b.data());
}

TEST(Mesh, Serialization) {
  std::mt19937_64 rng(10);
  const Mesh m = mesh_from_homography(random_h(rng, 5, 64), 3, 5, 64, 80);
  const auto path = std::filesystem::temp_directory_path() / "meshalign_mesh.txt";
  write_mesh(m, path);
  const Mesh back = read_mesh(path);
  EXPECT_EQ(back.rows, 3);
  EXPECT_EQ(back.cols, 5);
  EXPECT_EQ(back.canvas_h, 64);
  EXPECT_EQ(back.canvas_w, 80);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "3 5 64 80");
}
