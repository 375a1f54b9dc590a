#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace meshalign {

/// Planar, row-major raster of doubles. Loaded images hold values in [0,1];
/// intermediate results (depth, gradients) may hold anything, and
/// save_image clamps on the way out.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * width_;
  }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> plane(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * pixel_count(),
            pixel_count()};
  }
  std::span<const double> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * pixel_count(),
            pixel_count()};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Reads PNG (8/16-bit gray or RGB, alpha stripped) or binary PGM/PPM.
/// Values are divided by the format maximum (255, 65535 or the PNM
/// maxval), which is reported through `format_max` when given.
Image load_image(const std::filesystem::path& path, int* format_max = nullptr);

/// Writes 8-bit output; the format is picked from the extension
/// (.png, .pgm, .ppm). Gray images written as .ppm are replicated to RGB.
void save_image(const Image& img, const std::filesystem::path& path);

Image to_grayscale(const Image& img);

/// Bilinear sample at continuous index coordinates: (x, y) = (col, row) and
/// integer coordinates hit stored pixels exactly. Neighbours outside the
/// raster count as zero.
std::vector<double> sample_bilinear(const Image& img, double x, double y);

/// Single-channel variant of sample_bilinear used by inner loops.
double sample_channel(const Image& img, int c, double x, double y);

/// Sum of bilinear weights falling on in-bounds pixels, i.e. the value an
/// all-ones image of this size would produce at (x, y).
double sample_support(int height, int width, double x, double y);

/// Resize with the half-pixel (align_corners = false) convention and
/// edge clamping: source = (dst + 0.5) * in / out - 0.5.
Image resize_bilinear(const Image& img, int out_h, int out_w);

}  // namespace meshalign
