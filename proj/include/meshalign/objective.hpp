#pragma once

#include <array>
#include <filesystem>
#include <variant>
#include <vector>

#include "meshalign/homography.hpp"
#include "meshalign/image.hpp"
#include "meshalign/mesh_warp.hpp"

namespace meshalign {

/// Relative depth of the target image, strictly positive.
struct DepthMap {
  Image values;  ///< single channel

  int height() const { return values.height(); }
  int width() const { return values.width(); }
};

/// Grayscale PGM/PNG, 8- or 16-bit. A stored value v with format maximum
/// m becomes (v + 1) / (m + 1) so every depth is positive.
DepthMap load_depth(const std::filesystem::path& path);
DepthMap constant_depth(int height, int width, double value = 1.0);

/// Depth level per mesh cell plus the adjacency consistency flags.
struct GridDepthLevels {
  int rows = 0;
  int cols = 0;
  int levels = 1;
  std::vector<int> label;  ///< rows x cols
  std::vector<bool> hor;   ///< rows x (cols - 1): label[r][c] == label[r][c+1]
  std::vector<bool> ver;   ///< (rows - 1) x cols: label[r][c] == label[r+1][c]

  int at(int r, int c) const { return label[static_cast<std::size_t>(r) * cols + c]; }
};

/// Builds the consistency flags from per-cell labels.
GridDepthLevels make_levels(int rows, int cols, int levels, std::vector<int> label);

/// Warps the depth by the mesh, averages it per cell over pixels whose
/// warped mask exceeds 0.5, and bins the cell means into M equal-width
/// intervals over [min, max]. Empty cells take the global mean.
GridDepthLevels grid_depth_levels(const DepthMap& depth, const Mesh& mesh, int levels);

enum class EdgeOrientation { kHorizontal, kVertical };

/// 2 - |cos(e1, e2)| - |cos(e3, e4)| for adjacent quads (TL, TR, BL, BR order).
/// Horizontal: A is left of B and the pairs are the top and bottom edges.
/// Vertical: A is above B and the pairs are the left and right edges.
double edge_similarity(const std::array<Vec2, 4>& quad_a,
                       const std::array<Vec2, 4>& quad_b,
                       EdgeOrientation orientation);

/// Depth-masked mean of edge similarities over horizontal and vertical
/// neighbour pairs.
double shape_loss(const Mesh& mesh, const GridDepthLevels& levels);

struct ObjectiveParams {
  double lambda = 1.0;
  double mu = 10.0;
  std::array<double, 3> omega{1.0, 4.0, 16.0};
  int depth_levels = 32;
};

struct LossBreakdown {
  std::array<double, 3> content_per_layer{0, 0, 0};
  double content_total = 0;
  double shape = 0;
  double objective_total = 0;
  ObjectiveParams params;
};

using Warp = std::variant<Homography, Mesh>;

/// Mean over canvas pixels and channels of |W(E) * I_r - W(I_t)|. The
/// canvas is I_r's extent.
double content_loss_layer(const Image& i_r, const Image& i_t, const Warp& warp);

double content_loss_total(const std::array<double, 3>& layer_losses,
                          const std::array<double, 3>& omega);

/// lambda * sum_k omega_k L_k + mu * shape. The shape term uses the last
/// warp when it is a mesh; a homography contributes zero.
LossBreakdown objective(const Image& i_r, const Image& i_t,
                        const std::array<Warp, 3>& warps,
                        const GridDepthLevels& levels,
                        const ObjectiveParams& params);
LossBreakdown objective(const Image& i_r, const Image& i_t,
                        const std::array<Warp, 3>& warps, const DepthMap& depth,
                        const ObjectiveParams& params);

/// Objective restricted to the mesh layer: lambda * omega_3 * L_content^3
/// + mu * L_shape.
double mesh_layer_objective(const Image& i_r, const Image& i_t, const Mesh& mesh,
                            const GridDepthLevels& levels,
                            const ObjectiveParams& params);

struct GradientOptions {
  double step = 1e-3;
  /// Re-evaluate only the cells touching the perturbed vertex. Off gives
  /// the brute-force variant (full objective per perturbation).
  bool local_updates = true;
};

/// Central-difference gradient of mesh_layer_objective with respect to
/// every vertex coordinate. Depth levels are held fixed at `levels`.
std::vector<Vec2> gradient(const Image& i_r, const Image& i_t, const Mesh& mesh,
                           const GridDepthLevels& levels,
                           const ObjectiveParams& params,
                           const GradientOptions& options = {});

/// As above, computing the levels from `depth` at the given mesh first.
std::vector<Vec2> gradient(const Image& i_r, const Image& i_t, const Mesh& mesh,
                           const DepthMap& depth, const ObjectiveParams& params,
                           const GradientOptions& options = {});

}  // namespace meshalign
