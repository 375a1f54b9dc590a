#include "meshalign/correlation.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace meshalign {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_pair(const FeatureMap& f_r, const FeatureMap& f_t, const char* op) {
  if (f_r.height() != f_t.height() || f_r.width() != f_t.width() ||
      f_r.channels() != f_t.channels()) {
    throw std::invalid_argument(std::string(op) + ": feature shape mismatch");
  }
  if (!f_r.normalized || !f_t.normalized) {
    throw std::invalid_argument(std::string(op) +
                                ": features must be l2-normalised");
  }
  if (f_r.data.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty feature map");
  }
}

void check_patch(int patch) {
  if (patch < 1 || patch % 2 == 0) {
    throw std::invalid_argument("correlation_volume: patch side must be odd");
  }
}

// Row (y * W + x) holds the K x K x C patch centred at (x, y), zero padded.
RowMatrix im2col(const Image& f, int patch) {
  const int h = f.height();
  const int w = f.width();
  const int c_n = f.channels();
  const int r = patch / 2;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(h) * w,
                                   static_cast<Eigen::Index>(patch) * patch * c_n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* row = cols.row(static_cast<Eigen::Index>(y) * w + x).data();
      int col = 0;
      for (int j = -r; j <= r; ++j) {
        for (int i = -r; i <= r; ++i) {
          const int yy = y + j;
          const int xx = x + i;
          const bool inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
          for (int c = 0; c < c_n; ++c, ++col) {
            if (inside) row[col] = f.at(c, yy, xx);
          }
        }
      }
    }
  }
  return cols;
}

}  // namespace

CorrelationVolume cost_volume(const FeatureMap& f_r, const FeatureMap& f_t,
                              int radius) {
  check_pair(f_r, f_t, "cost_volume");
  if (radius < 0) throw std::invalid_argument("cost_volume: negative radius");
  const int h = f_r.height();
  const int w = f_r.width();
  const int c_n = f_r.channels();
  const int side = 2 * radius + 1;

  CorrelationVolume vol;
  vol.height = h;
  vol.width = w;
  vol.channels = side * side;
  vol.kind = CorrelationVolume::Kind::kRaw;
  vol.data.assign(static_cast<std::size_t>(h) * w * vol.channels, 0.0);

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double* ref = f_r.data.data().data();
  const double* tgt = f_t.data.data().data();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    std::vector<double> fr(c_n);
    const int dy0 = std::max(-radius, -y);
    const int dy1 = std::min(radius, h - 1 - y);
    for (int x = 0; x < w; ++x) {
      double* out = vol.at(y, x);
      for (int c = 0; c < c_n; ++c) fr[c] = ref[c * plane + static_cast<std::size_t>(y) * w + x];
      const int dx0 = std::max(-radius, -x);
      const int dx1 = std::min(radius, w - 1 - x);
      for (int dy = dy0; dy <= dy1; ++dy) {
        const std::size_t row = static_cast<std::size_t>(y + dy) * w;
        double* o = out + (dy + radius) * side + radius;
        for (int dx = dx0; dx <= dx1; ++dx) {
          const std::size_t idx = row + x + dx;
          double dot = 0;
          for (int c = 0; c < c_n; ++c) dot += fr[c] * tgt[c * plane + idx];
          o[dx] = dot;
        }
      }
    }
  }
  return vol;
}

CorrelationVolume correlation_volume(const FeatureMap& f_r,
                                     const FeatureMap& f_t, int patch) {
  check_pair(f_r, f_t, "correlation_volume");
  check_patch(patch);
  const int n = f_r.height() * f_r.width();

  const RowMatrix cols_r = im2col(f_r.data, patch);
  const RowMatrix filters_t = im2col(f_t.data, patch);

  CorrelationVolume vol;
  vol.height = f_r.height();
  vol.width = f_r.width();
  vol.channels = n;
  vol.kind = CorrelationVolume::Kind::kRaw;
  vol.data.resize(static_cast<std::size_t>(n) * n);
  Eigen::Map<RowMatrix> out(vol.data.data(), n, n);
  out.noalias() = cols_r * filters_t.transpose();
  return vol;
}

CorrelationVolume correlation_volume_direct(const FeatureMap& f_r,
                                            const FeatureMap& f_t, int patch) {
  check_pair(f_r, f_t, "correlation_volume_direct");
  check_patch(patch);
  const int h = f_r.height();
  const int w = f_r.width();
  const int c_n = f_r.channels();
  const int r = patch / 2;
  const int n = h * w;

  CorrelationVolume vol;
  vol.height = h;
  vol.width = w;
  vol.channels = n;
  vol.kind = CorrelationVolume::Kind::kRaw;
  vol.data.assign(static_cast<std::size_t>(n) * n, 0.0);

  auto inside = [&](int x, int y) { return x >= 0 && x < w && y >= 0 && y < h; };
  for (int yr = 0; yr < h; ++yr) {
    for (int xr = 0; xr < w; ++xr) {
      double* out = vol.at(yr, xr);
      for (int k = 0; k < n; ++k) {
        const int xt = k % w;
        const int yt = k / w;
        double sum = 0;
        for (int j = -r; j <= r; ++j) {
          for (int i = -r; i <= r; ++i) {
            if (!inside(xr + i, yr + j) || !inside(xt + i, yt + j)) continue;
            for (int c = 0; c < c_n; ++c) {
              sum += f_r.data.at(c, yr + j, xr + i) * f_t.data.at(c, yt + j, xt + i);
            }
          }
        }
        out[k] = sum;
      }
    }
  }
  return vol;
}

CorrelationVolume scale_softmax(const CorrelationVolume& raw, double alpha) {
  if (!(alpha > 0)) {
    throw std::invalid_argument("scale_softmax: alpha must be positive");
  }
  if (raw.kind != CorrelationVolume::Kind::kRaw) {
    throw std::invalid_argument("scale_softmax: expects a raw volume");
  }
  CorrelationVolume prob = raw;
  prob.kind = CorrelationVolume::Kind::kProbability;
  const int locations = raw.height * raw.width;
  const int k_n = raw.channels;

#pragma omp parallel for schedule(static)
  for (int loc = 0; loc < locations; ++loc) {
    double* v = prob.data.data() + static_cast<std::size_t>(loc) * k_n;
    const double peak = *std::max_element(v, v + k_n);
    double sum = 0;
    for (int k = 0; k < k_n; ++k) {
      v[k] = std::exp(alpha * (v[k] - peak));
      sum += v[k];
    }
    const double inv = 1.0 / sum;
    for (int k = 0; k < k_n; ++k) v[k] *= inv;
  }
  return prob;
}

FlowField feature_flow(const CorrelationVolume& prob) {
  if (prob.kind != CorrelationVolume::Kind::kProbability) {
    throw std::invalid_argument("feature_flow: expects a probability volume");
  }
  const int h = prob.height;
  const int w = prob.width;
  if (prob.channels != h * w) {
    throw std::invalid_argument("feature_flow: channel count must be H*W");
  }
  FlowField flow(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* p = prob.at(y, x);
      double ex = 0;
      double ey = 0;
      for (int k = 0; k < prob.channels; ++k) {
        ex += p[k] * (k % w);
        ey += p[k] * (k / w);
      }
      flow.m_hor(y, x) = ex - x;
      flow.m_ver(y, x) = ey - y;
    }
  }
  return flow;
}

FlowField ccl(const FeatureMap& f_r, const FeatureMap& f_t, int patch,
              double alpha) {
  return feature_flow(scale_softmax(correlation_volume(f_r, f_t, patch), alpha));
}

}  // namespace meshalign
