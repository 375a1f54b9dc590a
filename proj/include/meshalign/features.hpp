#pragma once

#include <vector>

#include "meshalign/image.hpp"

namespace meshalign {

/// Dense feature tensor, planar row-major like Image.
struct FeatureMap {
  Image data;
  bool normalized = false;

  int height() const { return data.height(); }
  int width() const { return data.width(); }
  int channels() const { return data.channels(); }
};

/// Number of channels produced per scale: intensity, d/dx, d/dy.
inline constexpr int kChannelsPerScale = 3;

/// Scale k (1-based) is the grayscale image halved k times, at size
/// (H / 2^k, W / 2^k), with channels {intensity, Sobel-x, Sobel-y}.
/// Sobel responses use replicated borders and the unnormalised 3x3 kernel.
std::vector<FeatureMap> extract_features(const Image& img, int num_scales);

/// Per-location division by max(||v||_2, 1e-8).
FeatureMap l2_normalize(const FeatureMap& f);

/// Pyramid layer `layer` (1-based): scales layer..N resized to scale
/// `layer`'s grid, concatenated in scale order, then l2-normalised.
FeatureMap build_layer_features(const std::vector<FeatureMap>& scales,
                                int layer);

}  // namespace meshalign
