#include "meshalign/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace meshalign {
namespace {

Image as_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Image rgb(img.height(), img.width(), 3);
  for (int c = 0; c < 3; ++c) std::ranges::copy(img.plane(0), rgb.plane(c).begin());
  return rgb;
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

void plot(Image& img, int x, int y, const double color[3]) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

void draw_line(Image& img, const Vec2& a, const Vec2& b, const double color[3]) {
  const int steps = static_cast<int>(std::ceil((b - a).cwiseAbs().maxCoeff())) + 1;
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
    plot(img, static_cast<int>(std::floor(p.x())), static_cast<int>(std::floor(p.y())), color);
  }
}

}  // namespace

Image render_flow(const FlowField& flow) {
  Image out(flow.height, flow.width, 3);
  double max_mag = 0;
  for (std::size_t i = 0; i < flow.hor.size(); ++i) {
    max_mag = std::max(max_mag, std::hypot(flow.hor[i], flow.ver[i]));
  }
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const double u = flow.m_hor(y, x);
      const double v = flow.m_ver(y, x);
      const double angle = std::atan2(v, u);
      const double hue = (angle + std::numbers::pi) / (2 * std::numbers::pi);
      const double sat = max_mag > 0 ? std::hypot(u, v) / max_mag : 0.0;
      double rgb[3];
      hsv_to_rgb(std::clamp(hue, 0.0, 0.999999), sat, 1.0, rgb);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = rgb[c];
    }
  }
  return out;
}

Image fuse_red_blue(const Image& reference, const Image& warped_target) {
  Image ref = as_rgb(reference);
  const Image tgt = as_rgb(warped_target);
  if (ref.height() != tgt.height() || ref.width() != tgt.width()) {
    throw std::invalid_argument("fuse_red_blue: size mismatch");
  }
  Image out(ref.height(), ref.width(), 3);
  auto r_ref = ref.plane(0);
  auto g_ref = ref.plane(1);
  auto g_tgt = tgt.plane(1);
  auto b_tgt = tgt.plane(2);
  auto r_out = out.plane(0);
  auto g_out = out.plane(1);
  auto b_out = out.plane(2);
  for (std::size_t i = 0; i < r_out.size(); ++i) {
    r_out[i] = r_ref[i];
    g_out[i] = 0.5 * (g_ref[i] + g_tgt[i]);
    b_out[i] = b_tgt[i];
  }
  return out;
}

Image draw_mesh(const Image& img, const Mesh& mesh) {
  Image out = as_rgb(img);
  const double edge[3] = {0.1, 1.0, 0.1};
  const double node[3] = {1.0, 0.2, 0.2};
  for (int r = 0; r <= mesh.rows; ++r) {
    for (int c = 0; c <= mesh.cols; ++c) {
      if (c < mesh.cols) draw_line(out, mesh.vertex(r, c), mesh.vertex(r, c + 1), edge);
      if (r < mesh.rows) draw_line(out, mesh.vertex(r, c), mesh.vertex(r + 1, c), edge);
    }
  }
  for (const auto& v : mesh.vertices) {
    const int x = static_cast<int>(std::floor(v.x()));
    const int y = static_cast<int>(std::floor(v.y()));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) plot(out, x + dx, y + dy, node);
    }
  }
  return out;
}

}  // namespace meshalign
