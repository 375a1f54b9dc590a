#pragma once

#include <vector>

#include "meshalign/features.hpp"

namespace meshalign {

/// Per-location similarity vectors over an H x W grid. For the contextual
/// correlation volume channel k addresses target cell (k mod W, k / W);
/// for a cost volume it addresses a displacement in the search window.
struct CorrelationVolume {
  enum class Kind { kRaw, kProbability };

  int height = 0;
  int width = 0;
  int channels = 0;
  Kind kind = Kind::kRaw;
  /// Location-major: data[(y * width + x) * channels + k].
  std::vector<double> data;

  const double* at(int y, int x) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  double* at(int y, int x) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

/// Dense per-cell motions (horizontal, vertical) in feature cells.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> hor;
  std::vector<double> ver;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h),
        width(w),
        hor(static_cast<std::size_t>(h) * w, 0.0),
        ver(static_cast<std::size_t>(h) * w, 0.0) {}

  double& m_hor(int y, int x) { return hor[static_cast<std::size_t>(y) * width + x]; }
  double& m_ver(int y, int x) { return ver[static_cast<std::size_t>(y) * width + x]; }
  double m_hor(int y, int x) const { return hor[static_cast<std::size_t>(y) * width + x]; }
  double m_ver(int y, int x) const { return ver[static_cast<std::size_t>(y) * width + x]; }
};

/// Point-to-point cosine-similarity volume over a (2r+1)^2 window. Channel
/// (dy + r) * (2r+1) + (dx + r) holds <F_r(x, y), F_t(x+dx, y+dy)>, zero when
/// the target location falls outside the grid.
CorrelationVolume cost_volume(const FeatureMap& f_r, const FeatureMap& f_t,
                              int radius);

/// Patch-to-patch correlation volume with H*W channels. Computed as a
/// convolution of F_r with the stride-1 K x K patches of F_t used as filters
/// (im2col + matrix product); out-of-grid patch entries are zero.
CorrelationVolume correlation_volume(const FeatureMap& f_r,
                                     const FeatureMap& f_t, int patch);

/// Direct nested-loop evaluation of the same volume. Slow; kept as the
/// reference implementation.
CorrelationVolume correlation_volume_direct(const FeatureMap& f_r,
                                            const FeatureMap& f_t, int patch);

/// softmax(alpha * v) per location, with max subtraction.
CorrelationVolume scale_softmax(const CorrelationVolume& raw, double alpha);

/// Expected target coordinate minus own coordinate for every location.
FlowField feature_flow(const CorrelationVolume& prob);

/// correlation_volume -> scale_softmax -> feature_flow.
FlowField ccl(const FeatureMap& f_r, const FeatureMap& f_t, int patch,
              double alpha);

}  // namespace meshalign
