#pragma once

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "meshalign/correlation.hpp"
#include "meshalign/image.hpp"

namespace meshalign {

using Vec2 = Eigen::Vector2d;

/// Continuous image coordinates: pixel (row i, col j) covers
/// [j, j+1] x [i, i+1], so its centre is (j + 0.5, i + 0.5). All
/// homographies map warped-canvas (reference) coordinates to
/// target-image coordinates.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Normalises so m(2,2) == 1 when it is nonzero; throws if singular.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);
  static Homography scaling(double sx, double sy);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Homography inverse() const;
  /// (this * other)(p) == this(other(p)).
  Homography operator*(const Homography& other) const;

  /// Projective map of p; throws std::domain_error when |w| < 1e-12.
  Vec2 apply(const Vec2& p) const;
  Vec2 operator()(const Vec2& p) const { return apply(p); }

 private:
  Eigen::Matrix3d m_;
};

/// Axis-aligned rectangle [x, x + width] x [y, y + height].
struct Rect {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;

  /// Corners in FourPtMotion order.
  std::array<Vec2, 4> corners() const;
};

/// Displacements of the corners top-left, top-right, bottom-left,
/// bottom-right of a rectangle.
struct FourPtMotion {
  std::array<Vec2, 4> d{Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
};

/// Direct linear transform with Hartley normalisation. Exact for four
/// points, algebraic least squares for more. Throws std::domain_error on
/// degenerate input.
Homography dlt_solve(std::span<const Vec2> src, std::span<const Vec2> dst);

Homography from_4pt(const FourPtMotion& m, const Rect& rect);
FourPtMotion to_4pt(const Homography& h, const Rect& rect);

/// Fits a homography to the flow correspondences (cell centre ->
/// cell centre + flow) in feature-cell coordinates. With `robust`, runs
/// three rounds of refitting on residuals <= 2 x median.
Homography fit_flow(const FlowField& flow, const std::vector<bool>& valid_mask,
                    bool robust);

/// Backward warp: output pixel centre p samples img at h(p).
Image warp_global(const Image& img, const Homography& h, int out_h, int out_w);

/// S * h * S^-1 with S = diag(s, s, 1): lifts a map to an s-times larger
/// coordinate frame.
Homography scale_adapt(const Homography& h, double s);
Homography scale_adapt(const Homography& h, double sx, double sy);

/// Nine numbers, row-major, one line.
std::string serialize_homography(const Homography& h);
Homography parse_homography(const std::string& text);
void write_homography(const Homography& h, const std::filesystem::path& path);
Homography read_homography(const std::filesystem::path& path);

}  // namespace meshalign
