#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <vector>

#include "meshalign/homography.hpp"
#include "meshalign/image.hpp"

namespace meshalign {

/// U x V cell mesh placed on the warped canvas. Vertex (r, c) corresponds
/// to the regular canvas point (c * canvas_w / V, r * canvas_h / U) and
/// stores where that point lands in the target image.
struct Mesh {
  int rows = 0;  ///< U, cells vertically
  int cols = 0;  ///< V, cells horizontally
  int canvas_h = 0;
  int canvas_w = 0;
  std::vector<Vec2> vertices;  ///< (rows + 1) x (cols + 1), row-major

  Vec2& vertex(int r, int c) {
    return vertices[static_cast<std::size_t>(r) * (cols + 1) + c];
  }
  const Vec2& vertex(int r, int c) const {
    return vertices[static_cast<std::size_t>(r) * (cols + 1) + c];
  }
  double cell_w() const { return static_cast<double>(canvas_w) / cols; }
  double cell_h() const { return static_cast<double>(canvas_h) / rows; }

  /// Regular canvas position of vertex (r, c).
  Vec2 canvas_point(int r, int c) const { return {c * cell_w(), r * cell_h()}; }
  Rect canvas_cell(int r, int c) const {
    return {c * cell_w(), r * cell_h(), cell_w(), cell_h()};
  }
  /// Cell corners in target coordinates, order TL, TR, BL, BR.
  std::array<Vec2, 4> cell_quad(int r, int c) const {
    return {vertex(r, c), vertex(r, c + 1), vertex(r + 1, c),
            vertex(r + 1, c + 1)};
  }
};

enum class QuadShape {
  kConvex,          ///< strictly convex, positively oriented
  kConcave,         ///< simple and positively oriented but not convex
  kDegenerate,      ///< self-intersecting, reversed or collapsed
};

/// Classifies a TL, TR, BL, BR quad in y-down image coordinates.
QuadShape classify_quad(const std::array<Vec2, 4>& quad);

/// True when every cell is strictly convex (cross-product tolerance 1e-9).
bool mesh_is_valid(const Mesh& mesh);

/// True when every cell can be warped (convex or concave-but-simple).
bool mesh_is_warpable(const Mesh& mesh);

Mesh regular_mesh(int rows, int cols, int canvas_h, int canvas_w);
Mesh mesh_from_homography(const Homography& h, int rows, int cols,
                          int canvas_h, int canvas_w);

/// DLT from the cell's canvas rectangle to its four mesh vertices.
Homography cell_homography(const Mesh& mesh, int row, int col);

/// All cell homographies, row-major. Throws std::domain_error when a cell
/// is not warpable.
std::vector<Homography> cell_homographies(const Mesh& mesh);

/// Index of the cell that owns canvas pixel (x, y) (integer pixel indices).
inline int cell_index_of(const Mesh& mesh, int x, int y) {
  const int c = std::min(static_cast<int>((x + 0.5) / mesh.cell_w()), mesh.cols - 1);
  const int r = std::min(static_cast<int>((y + 0.5) / mesh.cell_h()), mesh.rows - 1);
  return r * mesh.cols + c;
}

/// Backward multi-grid warp onto the canvas_h x canvas_w canvas.
Image warp_mesh(const Image& img, const Mesh& mesh);

/// warp_mesh of an all-ones image with the target's dimensions.
Image warp_mask(const Mesh& mesh, int target_h, int target_w);

/// Plain-text form: "U V canvas_h canvas_w" then one "x y" per vertex.
void write_mesh(const Mesh& mesh, const std::filesystem::path& path);
Mesh read_mesh(const std::filesystem::path& path);

}  // namespace meshalign
