#include "meshalign/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace meshalign {

DepthMap load_depth(const std::filesystem::path& path) {
  int format_max = 255;
  const Image raw = to_grayscale(load_image(path, &format_max));
  const double maxval = format_max;
  DepthMap depth{Image(raw.height(), raw.width(), 1)};
  auto src = raw.plane(0);
  auto dst = depth.values.plane(0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = (std::round(src[i] * maxval) + 1.0) / (maxval + 1.0);
  }
  return depth;
}

DepthMap constant_depth(int height, int width, double value) {
  if (!(value > 0)) throw std::invalid_argument("constant_depth: value must be positive");
  return DepthMap{Image(height, width, 1, value)};
}

GridDepthLevels make_levels(int rows, int cols, int levels, std::vector<int> label) {
  if (label.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("make_levels: label count mismatch");
  }
  GridDepthLevels out;
  out.rows = rows;
  out.cols = cols;
  out.levels = levels;
  out.label = std::move(label);
  out.hor.assign(static_cast<std::size_t>(rows) * std::max(cols - 1, 0), false);
  out.ver.assign(static_cast<std::size_t>(std::max(rows - 1, 0)) * cols, false);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      out.hor[static_cast<std::size_t>(r) * (cols - 1) + c] = out.at(r, c) == out.at(r, c + 1);
    }
  }
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out.ver[static_cast<std::size_t>(r) * cols + c] = out.at(r, c) == out.at(r + 1, c);
    }
  }
  return out;
}

GridDepthLevels grid_depth_levels(const DepthMap& depth, const Mesh& mesh, int levels) {
  if (levels < 1) throw std::invalid_argument("grid_depth_levels: M must be >= 1");
  if (depth.values.channels() != 1 || depth.values.empty()) {
    throw std::invalid_argument("grid_depth_levels: depth must be one non-empty channel");
  }
  const Image warped = warp_mesh(depth.values, mesh);
  const Image mask = warp_mask(mesh, depth.height(), depth.width());

  const std::size_t cells = static_cast<std::size_t>(mesh.rows) * mesh.cols;
  std::vector<double> sum(cells, 0.0);
  std::vector<int> count(cells, 0);
  for (int y = 0; y < mesh.canvas_h; ++y) {
    for (int x = 0; x < mesh.canvas_w; ++x) {
      const double m = mask.at(0, y, x);
      if (m <= 0.5) continue;
      const int cell = cell_index_of(mesh, x, y);
      sum[cell] += warped.at(0, y, x) / m;
      ++count[cell];
    }
  }
  const double total = std::accumulate(sum.begin(), sum.end(), 0.0);
  const int total_count = std::accumulate(count.begin(), count.end(), 0);
  double global_mean = 0;
  if (total_count > 0) {
    global_mean = total / total_count;
  } else {
    const auto& d = depth.values.data();
    global_mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  }

  std::vector<double> means(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    means[i] = count[i] > 0 ? sum[i] / count[i] : global_mean;
  }
  const auto [lo_it, hi_it] = std::minmax_element(means.begin(), means.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;

  std::vector<int> label(cells, 0);
  if (span > 1e-12 * std::max(1.0, std::abs(*hi_it))) {
    for (std::size_t i = 0; i < cells; ++i) {
      const int l = static_cast<int>(std::floor((means[i] - lo) / span * levels));
      label[i] = std::clamp(l, 0, levels - 1);
    }
  }
  return make_levels(mesh.rows, mesh.cols, levels, std::move(label));
}

namespace {

double abs_cosine(const Vec2& a, const Vec2& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0) || !(nb > 0)) {
    throw std::domain_error("edge_similarity: zero-length edge");
  }
  return std::min(1.0, std::abs(a.dot(b)) / (na * nb));
}

}  // namespace

double edge_similarity(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b,
                       EdgeOrientation orientation) {
  enum { TL, TR, BL, BR };
  if (orientation == EdgeOrientation::kHorizontal) {
    return 2.0 - abs_cosine(a[TR] - a[TL], b[TR] - b[TL]) -
           abs_cosine(a[BR] - a[BL], b[BR] - b[BL]);
  }
  return 2.0 - abs_cosine(a[BL] - a[TL], b[BL] - b[TL]) -
         abs_cosine(a[BR] - a[TR], b[BR] - b[TR]);
}

double shape_loss(const Mesh& mesh, const GridDepthLevels& levels) {
  if (levels.rows != mesh.rows || levels.cols != mesh.cols) {
    throw std::invalid_argument("shape_loss: depth levels do not match the mesh");
  }
  const int u = mesh.rows;
  const int v = mesh.cols;
  double hor = 0;
  for (int r = 0; r < u; ++r) {
    for (int c = 0; c + 1 < v; ++c) {
      if (!levels.hor[static_cast<std::size_t>(r) * (v - 1) + c]) continue;
      hor += edge_similarity(mesh.cell_quad(r, c), mesh.cell_quad(r, c + 1),
                             EdgeOrientation::kHorizontal);
    }
  }
  double ver = 0;
  for (int r = 0; r + 1 < u; ++r) {
    for (int c = 0; c < v; ++c) {
      if (!levels.ver[static_cast<std::size_t>(r) * v + c]) continue;
      ver += edge_similarity(mesh.cell_quad(r, c), mesh.cell_quad(r + 1, c),
                             EdgeOrientation::kVertical);
    }
  }
  double loss = 0;
  if (v > 1) loss += hor / (static_cast<double>(u) * (v - 1));
  if (u > 1) loss += ver / (static_cast<double>(u - 1) * v);
  return loss;
}

namespace {

void check_pair(const Image& i_r, const Image& i_t) {
  if (i_r.empty() || i_t.empty()) throw std::invalid_argument("content loss: empty image");
  if (i_r.channels() != i_t.channels()) {
    throw std::invalid_argument("content loss: channel count mismatch");
  }
}

// Sum over canvas pixels [x0,x1) x [y0,y1) and channels of
// |W(E) I_r - W(I_t)| for the map m.
double residual_sum(const Image& i_r, const Image& i_t, const Eigen::Matrix3d& m,
                    int x0, int x1, int y0, int y1) {
  double total = 0;
  const int ch = i_r.channels();
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      const double w = m(2, 0) * px + m(2, 1) * py + m(2, 2);
      double qx = -10, qy = -10;
      if (std::abs(w) >= 1e-12) {
        qx = (m(0, 0) * px + m(0, 1) * py + m(0, 2)) / w - 0.5;
        qy = (m(1, 0) * px + m(1, 1) * py + m(1, 2)) / w - 0.5;
      }
      const double mask = sample_support(i_t.height(), i_t.width(), qx, qy);
      for (int c = 0; c < ch; ++c) {
        total += std::abs(mask * i_r.at(c, y, x) - sample_channel(i_t, c, qx, qy));
      }
    }
  }
  return total;
}

// Pixel index bounds of each cell column / row on the canvas.
struct CellRanges {
  std::vector<int> x_begin, x_end, y_begin, y_end;
};

CellRanges cell_ranges(const Mesh& mesh) {
  CellRanges r;
  r.x_begin.assign(mesh.cols, mesh.canvas_w);
  r.x_end.assign(mesh.cols, 0);
  r.y_begin.assign(mesh.rows, mesh.canvas_h);
  r.y_end.assign(mesh.rows, 0);
  for (int x = 0; x < mesh.canvas_w; ++x) {
    const int c = cell_index_of(mesh, x, 0) % mesh.cols;
    r.x_begin[c] = std::min(r.x_begin[c], x);
    r.x_end[c] = std::max(r.x_end[c], x + 1);
  }
  for (int y = 0; y < mesh.canvas_h; ++y) {
    const int row = cell_index_of(mesh, 0, y) / mesh.cols;
    r.y_begin[row] = std::min(r.y_begin[row], y);
    r.y_end[row] = std::max(r.y_end[row], y + 1);
  }
  return r;
}

double cell_sum(const Image& i_r, const Image& i_t, const Mesh& mesh,
                const CellRanges& ranges, int r, int c) {
  if (ranges.x_begin[c] >= ranges.x_end[c] || ranges.y_begin[r] >= ranges.y_end[r]) {
    return 0.0;
  }
  if (classify_quad(mesh.cell_quad(r, c)) == QuadShape::kDegenerate) {
    throw std::domain_error("content loss: self-intersecting cell");
  }
  const Homography h = cell_homography(mesh, r, c);
  return residual_sum(i_r, i_t, h.matrix(), ranges.x_begin[c], ranges.x_end[c],
                      ranges.y_begin[r], ranges.y_end[r]);
}

void check_canvas(const Image& i_r, const Mesh& mesh) {
  if (mesh.canvas_h != i_r.height() || mesh.canvas_w != i_r.width()) {
    throw std::invalid_argument("content loss: mesh canvas must match the reference");
  }
}

double mesh_content(const Image& i_r, const Image& i_t, const Mesh& mesh) {
  check_canvas(i_r, mesh);
  const CellRanges ranges = cell_ranges(mesh);
  const int cells = mesh.rows * mesh.cols;
  std::vector<double> sums(cells, 0.0);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < cells; ++k) {
    sums[k] = cell_sum(i_r, i_t, mesh, ranges, k / mesh.cols, k % mesh.cols);
  }
  const double n = static_cast<double>(i_r.pixel_count()) * i_r.channels();
  return std::accumulate(sums.begin(), sums.end(), 0.0) / n;
}

double homography_content(const Image& i_r, const Image& i_t, const Homography& h) {
  const int rows = i_r.height();
  std::vector<double> sums(rows, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < rows; ++y) {
    sums[y] = residual_sum(i_r, i_t, h.matrix(), 0, i_r.width(), y, y + 1);
  }
  const double n = static_cast<double>(i_r.pixel_count()) * i_r.channels();
  return std::accumulate(sums.begin(), sums.end(), 0.0) / n;
}

}  // namespace

double content_loss_layer(const Image& i_r, const Image& i_t, const Warp& warp) {
  check_pair(i_r, i_t);
  if (const auto* h = std::get_if<Homography>(&warp)) {
    return homography_content(i_r, i_t, *h);
  }
  return mesh_content(i_r, i_t, std::get<Mesh>(warp));
}

double content_loss_total(const std::array<double, 3>& l, const std::array<double, 3>& w) {
  return w[0] * l[0] + w[1] * l[1] + w[2] * l[2];
}

LossBreakdown objective(const Image& i_r, const Image& i_t,
                        const std::array<Warp, 3>& warps,
                        const GridDepthLevels& levels,
                        const ObjectiveParams& params) {
  LossBreakdown out;
  out.params = params;
  for (int k = 0; k < 3; ++k) {
    out.content_per_layer[k] = content_loss_layer(i_r, i_t, warps[k]);
  }
  out.content_total = content_loss_total(out.content_per_layer, params.omega);
  if (const auto* mesh = std::get_if<Mesh>(&warps[2])) {
    out.shape = shape_loss(*mesh, levels);
  }
  out.objective_total = params.lambda * out.content_total + params.mu * out.shape;
  return out;
}

LossBreakdown objective(const Image& i_r, const Image& i_t,
                        const std::array<Warp, 3>& warps, const DepthMap& depth,
                        const ObjectiveParams& params) {
  GridDepthLevels levels;
  if (const auto* mesh = std::get_if<Mesh>(&warps[2])) {
    levels = grid_depth_levels(depth, *mesh, params.depth_levels);
  }
  return objective(i_r, i_t, warps, levels, params);
}

double mesh_layer_objective(const Image& i_r, const Image& i_t, const Mesh& mesh,
                            const GridDepthLevels& levels,
                            const ObjectiveParams& params) {
  check_pair(i_r, i_t);
  const double content = mesh_content(i_r, i_t, mesh);
  const double shape = params.mu != 0 ? shape_loss(mesh, levels) : 0.0;
  return params.lambda * params.omega[2] * content + params.mu * shape;
}

std::vector<Vec2> gradient(const Image& i_r, const Image& i_t, const Mesh& mesh,
                           const GridDepthLevels& levels,
                           const ObjectiveParams& params,
                           const GradientOptions& options) {
  check_pair(i_r, i_t);
  check_canvas(i_r, mesh);
  if (!(options.step > 1e-12)) throw std::invalid_argument("gradient: step underflow");
  if (!mesh_is_warpable(mesh)) throw std::domain_error("gradient: invalid mesh");
  if (levels.rows != mesh.rows || levels.cols != mesh.cols) {
    throw std::invalid_argument("gradient: depth levels do not match the mesh");
  }

  const int vr = mesh.rows + 1;
  const int vc = mesh.cols + 1;
  const int n_vertices = vr * vc;
  const double eps = options.step;
  const double n_values = static_cast<double>(i_r.pixel_count()) * i_r.channels();
  const double content_weight = params.lambda * params.omega[2] / n_values;
  const CellRanges ranges = cell_ranges(mesh);

  std::vector<double> base(static_cast<std::size_t>(mesh.rows) * mesh.cols, 0.0);
  if (options.local_updates) {
    for (int r = 0; r < mesh.rows; ++r) {
      for (int c = 0; c < mesh.cols; ++c) {
        base[static_cast<std::size_t>(r) * mesh.cols + c] =
            cell_sum(i_r, i_t, mesh, ranges, r, c);
      }
    }
  }

  std::vector<Vec2> grad(n_vertices, Vec2::Zero());
#pragma omp parallel for schedule(dynamic)
  for (int vi = 0; vi < n_vertices; ++vi) {
    Mesh probe = mesh;
    const int r = vi / vc;
    const int c = vi % vc;
    for (int axis = 0; axis < 2; ++axis) {
      double value[2] = {0, 0};
      for (int side = 0; side < 2; ++side) {
        probe.vertex(r, c) = mesh.vertex(r, c);
        probe.vertex(r, c)[axis] += side == 0 ? eps : -eps;
        if (options.local_updates) {
          double delta = 0;
          for (int cr = std::max(r - 1, 0); cr <= std::min(r, mesh.rows - 1); ++cr) {
            for (int cc = std::max(c - 1, 0); cc <= std::min(c, mesh.cols - 1); ++cc) {
              delta += cell_sum(i_r, i_t, probe, ranges, cr, cc) -
                       base[static_cast<std::size_t>(cr) * mesh.cols + cc];
            }
          }
          value[side] = content_weight * delta;
          if (params.mu != 0) value[side] += params.mu * shape_loss(probe, levels);
        } else {
          value[side] = mesh_layer_objective(i_r, i_t, probe, levels, params);
        }
      }
      grad[vi][axis] = (value[0] - value[1]) / (2 * eps);
    }
  }
  return grad;
}

std::vector<Vec2> gradient(const Image& i_r, const Image& i_t, const Mesh& mesh,
                           const DepthMap& depth, const ObjectiveParams& params,
                           const GradientOptions& options) {
  return gradient(i_r, i_t, mesh, grid_depth_levels(depth, mesh, params.depth_levels),
                  params, options);
}

}  // namespace meshalign
