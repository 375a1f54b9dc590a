#include "meshalign/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace meshalign {
namespace {

Image halve(const Image& img) {
  return resize_bilinear(img, img.height() / 2, img.width() / 2);
}

FeatureMap sobel_features(const Image& gray) {
  const int h = gray.height();
  const int w = gray.width();
  FeatureMap f{Image(h, w, kChannelsPerScale), false};
  auto px = [&](int x, int y) {
    return gray.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      f.data.at(0, y, x) = px(x, y);
      f.data.at(1, y, x) = gx;
      f.data.at(2, y, x) = gy;
    }
  }
  return f;
}

}  // namespace

std::vector<FeatureMap> extract_features(const Image& img, int num_scales) {
  if (num_scales < 1) {
    throw std::invalid_argument("extract_features: need at least one scale");
  }
  const int min_side = 1 << num_scales;
  if (img.height() < min_side || img.width() < min_side) {
    throw std::invalid_argument("extract_features: image too small for " +
                                std::to_string(num_scales) + " scales");
  }
  std::vector<FeatureMap> scales;
  scales.reserve(num_scales);
  Image level = to_grayscale(img);
  for (int k = 1; k <= num_scales; ++k) {
    level = halve(level);
    scales.push_back(sobel_features(level));
  }
  return scales;
}

FeatureMap l2_normalize(const FeatureMap& f) {
  FeatureMap out = f;
  const int c_n = f.channels();
  const std::size_t n = f.data.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0;
    for (int c = 0; c < c_n; ++c) {
      const double v = f.data.plane(c)[i];
      sq += v * v;
    }
    const double inv = 1.0 / std::max(std::sqrt(sq), 1e-8);
    for (int c = 0; c < c_n; ++c) out.data.plane(c)[i] *= inv;
  }
  out.normalized = true;
  return out;
}

FeatureMap build_layer_features(const std::vector<FeatureMap>& scales,
                                int layer) {
  const int n = static_cast<int>(scales.size());
  if (layer < 1 || layer > n) {
    throw std::invalid_argument("build_layer_features: layer out of range");
  }
  const FeatureMap& base = scales[layer - 1];
  const int h = base.height();
  const int w = base.width();
  int total = 0;
  for (int k = layer; k <= n; ++k) total += scales[k - 1].channels();

  FeatureMap stacked{Image(h, w, total), false};
  int offset = 0;
  for (int k = layer; k <= n; ++k) {
    const Image& src = scales[k - 1].data;
    const Image resized =
        (src.height() == h && src.width() == w) ? src : resize_bilinear(src, h, w);
    for (int c = 0; c < resized.channels(); ++c) {
      std::ranges::copy(resized.plane(c), stacked.data.plane(offset + c).begin());
    }
    offset += resized.channels();
  }
  return l2_normalize(stacked);
}

}  // namespace meshalign
