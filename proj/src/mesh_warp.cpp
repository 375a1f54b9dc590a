#include "meshalign/mesh_warp.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace meshalign {
namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool segments_cross(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(p2 - p1, q1 - p1);
  const double d2 = cross(p2 - p1, q2 - p1);
  const double d3 = cross(q2 - q1, p1 - q1);
  const double d4 = cross(q2 - q1, p2 - q1);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 &&
         d3 != 0 && d4 != 0;
}

}  // namespace

QuadShape classify_quad(const std::array<Vec2, 4>& quad) {
  // Boundary order TL -> TR -> BR -> BL.
  const std::array<Vec2, 4> ring = {quad[0], quad[1], quad[3], quad[2]};
  bool convex = true;
  for (int i = 0; i < 4; ++i) {
    const Vec2 e0 = ring[(i + 1) % 4] - ring[i];
    const Vec2 e1 = ring[(i + 2) % 4] - ring[(i + 1) % 4];
    if (!(cross(e0, e1) > 1e-9)) convex = false;
  }
  if (convex) return QuadShape::kConvex;

  double area2 = 0;
  for (int i = 0; i < 4; ++i) area2 += cross(ring[i], ring[(i + 1) % 4]);
  const bool intersecting = segments_cross(ring[0], ring[1], ring[2], ring[3]) ||
                            segments_cross(ring[1], ring[2], ring[3], ring[0]);
  if (area2 > 1e-9 && !intersecting) {
    // A simple positive quad still needs three non-collinear corners for DLT.
    int positive = 0;
    for (int i = 0; i < 4; ++i) {
      const Vec2 e0 = ring[(i + 1) % 4] - ring[i];
      const Vec2 e1 = ring[(i + 2) % 4] - ring[(i + 1) % 4];
      if (cross(e0, e1) > 1e-9) ++positive;
    }
    if (positive == 3) return QuadShape::kConcave;
  }
  return QuadShape::kDegenerate;
}

bool mesh_is_valid(const Mesh& mesh) {
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      if (classify_quad(mesh.cell_quad(r, c)) != QuadShape::kConvex) return false;
    }
  }
  return true;
}

bool mesh_is_warpable(const Mesh& mesh) {
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      if (classify_quad(mesh.cell_quad(r, c)) == QuadShape::kDegenerate) return false;
    }
  }
  return true;
}

Mesh regular_mesh(int rows, int cols, int canvas_h, int canvas_w) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("regular_mesh: cell counts must be >= 1");
  }
  if (canvas_h < 1 || canvas_w < 1) {
    throw std::invalid_argument("regular_mesh: canvas must be non-empty");
  }
  Mesh mesh;
  mesh.rows = rows;
  mesh.cols = cols;
  mesh.canvas_h = canvas_h;
  mesh.canvas_w = canvas_w;
  mesh.vertices.resize(static_cast<std::size_t>(rows + 1) * (cols + 1));
  for (int r = 0; r <= rows; ++r) {
    for (int c = 0; c <= cols; ++c) mesh.vertex(r, c) = mesh.canvas_point(r, c);
  }
  return mesh;
}

Mesh mesh_from_homography(const Homography& h, int rows, int cols,
                          int canvas_h, int canvas_w) {
  Mesh mesh = regular_mesh(rows, cols, canvas_h, canvas_w);
  for (auto& v : mesh.vertices) v = h(v);
  return mesh;
}

Homography cell_homography(const Mesh& mesh, int row, int col) {
  if (row < 0 || row >= mesh.rows || col < 0 || col >= mesh.cols) {
    throw std::out_of_range("cell_homography: cell index out of range");
  }
  const auto src = mesh.canvas_cell(row, col).corners();
  const auto dst = mesh.cell_quad(row, col);
  return dlt_solve(src, dst);
}

std::vector<Homography> cell_homographies(const Mesh& mesh) {
  std::vector<Homography> hs;
  hs.reserve(static_cast<std::size_t>(mesh.rows) * mesh.cols);
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      if (classify_quad(mesh.cell_quad(r, c)) == QuadShape::kDegenerate) {
        throw std::domain_error("warp_mesh: cell (" + std::to_string(r) + ", " +
                                std::to_string(c) + ") is self-intersecting");
      }
      hs.push_back(cell_homography(mesh, r, c));
    }
  }
  return hs;
}

Image warp_mesh(const Image& img, const Mesh& mesh) {
  const std::vector<Homography> hs = cell_homographies(mesh);
  Image out(mesh.canvas_h, mesh.canvas_w, img.channels());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < mesh.canvas_h; ++y) {
    for (int x = 0; x < mesh.canvas_w; ++x) {
      const Eigen::Matrix3d& m = hs[cell_index_of(mesh, x, y)].matrix();
      const double px = x + 0.5;
      const double py = y + 0.5;
      const double w = m(2, 0) * px + m(2, 1) * py + m(2, 2);
      if (std::abs(w) < 1e-12) continue;
      const double qx = (m(0, 0) * px + m(0, 1) * py + m(0, 2)) / w - 0.5;
      const double qy = (m(1, 0) * px + m(1, 1) * py + m(1, 2)) / w - 0.5;
      for (int c = 0; c < img.channels(); ++c) {
        out.at(c, y, x) = sample_channel(img, c, qx, qy);
      }
    }
  }
  return out;
}

Image warp_mask(const Mesh& mesh, int target_h, int target_w) {
  return warp_mesh(Image(target_h, target_w, 1, 1.0), mesh);
}

void write_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << mesh.rows << " " << mesh.cols << " " << mesh.canvas_h << " "
      << mesh.canvas_w << "\n";
  for (const auto& v : mesh.vertices) out << v.x() << " " << v.y() << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Mesh read_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  int rows = 0, cols = 0, ch = 0, cw = 0;
  if (!(in >> rows >> cols >> ch >> cw)) {
    throw std::runtime_error("read_mesh: malformed header in " + path.string());
  }
  Mesh mesh = regular_mesh(rows, cols, ch, cw);
  for (auto& v : mesh.vertices) {
    double x = 0, y = 0;
    if (!(in >> x >> y)) {
      throw std::runtime_error("read_mesh: truncated vertex list in " +
                               path.string());
    }
    v = Vec2(x, y);
  }
  return mesh;
}

}  // namespace meshalign
