#include "meshalign/homography.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace meshalign {

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  if (std::abs(m_(2, 2)) > 1e-15) m_ /= m_(2, 2);
  if (!m_.allFinite() || std::abs(m_.determinant()) <= 1e-12) {
    throw std::domain_error("Homography: matrix is singular");
  }
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::scaling(double sx, double sy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Homography Homography::operator*(const Homography& other) const {
  return Homography(m_ * other.m_);
}

Vec2 Homography::apply(const Vec2& p) const {
  const double w = m_(2, 0) * p.x() + m_(2, 1) * p.y() + m_(2, 2);
  if (std::abs(w) < 1e-12) {
    throw std::domain_error("Homography::apply: point maps to infinity");
  }
  return {(m_(0, 0) * p.x() + m_(0, 1) * p.y() + m_(0, 2)) / w,
          (m_(1, 0) * p.x() + m_(1, 1) * p.y() + m_(1, 2)) / w};
}

std::array<Vec2, 4> Rect::corners() const {
  return {Vec2(x, y), Vec2(x + width, y), Vec2(x, y + height),
          Vec2(x + width, y + height)};
}

namespace {

// Similarity taking the centroid to the origin and the mean distance to
// sqrt(2).
Eigen::Matrix3d hartley_transform(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 1e-12) || !std::isfinite(mean_dist)) {
    throw std::domain_error("dlt_solve: degenerate point spread");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

Vec2 transform(const Eigen::Matrix3d& t, const Vec2& p) {
  return {t(0, 0) * p.x() + t(0, 2), t(1, 1) * p.y() + t(1, 2)};
}

bool has_collinear_triple(std::span<const Vec2> q) {
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      for (int c = b + 1; c < 4; ++c) {
        const Vec2 u = q[b] - q[a];
        const Vec2 v = q[c] - q[a];
        const double cross = u.x() * v.y() - u.y() * v.x();
        if (std::abs(cross) <= 1e-10 * std::max(1.0, u.norm() * v.norm())) {
          return true;
        }
      }
    }
  }
  return false;
}

}  // namespace

Homography dlt_solve(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("dlt_solve: point count mismatch");
  }
  const std::size_t n = src.size();
  if (n < 4) throw std::invalid_argument("dlt_solve: need >= 4 points");

  const Eigen::Matrix3d ts = hartley_transform(src);
  const Eigen::Matrix3d td = hartley_transform(dst);

  std::vector<Vec2> ns(n);
  std::vector<Vec2> nd(n);
  for (std::size_t i = 0; i < n; ++i) {
    ns[i] = transform(ts, src[i]);
    nd[i] = transform(td, dst[i]);
  }
  if (n == 4 && (has_collinear_triple(ns) || has_collinear_triple(nd))) {
    throw std::domain_error("dlt_solve: three of four points are collinear");
  }

  Eigen::Matrix<double, Eigen::Dynamic, 9> a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ns[i].x(), y = ns[i].y();
    const double u = nd[i].x(), v = nd[i].y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(7) > 1e-12 * sv(0))) {
    throw std::domain_error("dlt_solve: singular system");
  }
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

Homography from_4pt(const FourPtMotion& m, const Rect& rect) {
  if (!(rect.width > 0) || !(rect.height > 0)) {
    throw std::invalid_argument("from_4pt: degenerate rectangle");
  }
  const auto src = rect.corners();
  std::array<Vec2, 4> dst;
  for (int i = 0; i < 4; ++i) dst[i] = src[i] + m.d[i];
  return dlt_solve(src, dst);
}

FourPtMotion to_4pt(const Homography& h, const Rect& rect) {
  if (!(rect.width > 0) || !(rect.height > 0)) {
    throw std::invalid_argument("to_4pt: degenerate rectangle");
  }
  FourPtMotion m;
  const auto corners = rect.corners();
  for (int i = 0; i < 4; ++i) m.d[i] = h(corners[i]) - corners[i];
  return m;
}

Homography fit_flow(const FlowField& flow, const std::vector<bool>& valid_mask,
                    bool robust) {
  const std::size_t cells = static_cast<std::size_t>(flow.height) * flow.width;
  if (valid_mask.size() != cells) {
    throw std::invalid_argument("fit_flow: mask size does not match flow");
  }
  std::vector<Vec2> src;
  std::vector<Vec2> dst;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (!valid_mask[static_cast<std::size_t>(y) * flow.width + x]) continue;
      const Vec2 c(x + 0.5, y + 0.5);
      src.push_back(c);
      dst.push_back(c + Vec2(flow.m_hor(y, x), flow.m_ver(y, x)));
    }
  }
  if (src.size() < 8) {
    throw std::invalid_argument("fit_flow: fewer than 8 valid cells");
  }
  Homography h = dlt_solve(src, dst);
  if (!robust) return h;

  std::vector<double> residual(src.size());
  for (int round = 0; round < 3; ++round) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      try {
        residual[i] = (h(src[i]) - dst[i]).norm();
      } catch (const std::domain_error&) {
        residual[i] = std::numeric_limits<double>::infinity();
      }
    }
    std::vector<double> sorted = residual;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                     sorted.end());
    const double threshold = std::max(2.0 * sorted[sorted.size() / 2], 1e-6);
    std::vector<Vec2> keep_src;
    std::vector<Vec2> keep_dst;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (residual[i] <= threshold) {
        keep_src.push_back(src[i]);
        keep_dst.push_back(dst[i]);
      }
    }
    if (keep_src.size() < 8) break;
    h = dlt_solve(keep_src, keep_dst);
  }
  return h;
}

Image warp_global(const Image& img, const Homography& h, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("warp_global: output dims must be >= 1");
  }
  Image out(out_h, out_w, img.channels());
  const Eigen::Matrix3d& m = h.matrix();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
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

Homography scale_adapt(const Homography& h, double s) {
  return scale_adapt(h, s, s);
}

Homography scale_adapt(const Homography& h, double sx, double sy) {
  if (!(sx > 0) || !(sy > 0)) {
    throw std::invalid_argument("scale_adapt: scale must be positive");
  }
  return Homography::scaling(sx, sy) * h * Homography::scaling(1 / sx, 1 / sy);
}

std::string serialize_homography(const Homography& h) {
  std::string out;
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", h.matrix()(r, c));
      if (!out.empty()) out += ' ';
      out += buf;
    }
  }
  return out;
}

Homography parse_homography(const std::string& text) {
  std::istringstream in(text);
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> m(r, c))) {
        throw std::runtime_error("parse_homography: expected 9 numbers");
      }
    }
  }
  return Homography(m);
}

void write_homography(const Homography& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_homography(h) << "\n";
}

Homography read_homography(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_homography(ss.str());
}

}  // namespace meshalign
