#include "meshalign/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace meshalign {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw std::invalid_argument("Image: negative dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// PNM header token reader; skips whitespace and '#' comments.
int read_pnm_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
    c = in.peek();
  }
  int value = -1;
  if (!(in >> value)) throw std::runtime_error("malformed PNM header");
  return value;
}

Image load_pnm(const std::filesystem::path& path, int* format_max) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw std::runtime_error("unsupported PNM variant in " + path.string());
  }
  const int channels = magic[1] == '5' ? 1 : 3;
  const int width = read_pnm_int(in);
  const int height = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (width <= 0 || height <= 0) {
    throw std::runtime_error("zero-dimension image " + path.string());
  }
  if (maxval <= 0 || maxval > 65535) {
    throw std::runtime_error("bad PNM maxval in " + path.string());
  }
  if (format_max) *format_max = maxval;
  in.get();  // single whitespace byte before the raster
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height *
                                 channels * bytes);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw std::runtime_error("truncated PNM raster in " + path.string());
  }
  Image img(height, width, channels);
  std::size_t k = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        int v = raw[k++];
        if (bytes == 2) v = (v << 8) | raw[k++];
        img.at(c, y, x) = static_cast<double>(v) / maxval;
      }
    }
  }
  return img;
}

// libpng reports errors by longjmp; keep this frame free of objects with
// non-trivial destructors between setjmp and the png calls.
Image load_png(const std::filesystem::path& path, int* format_max) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_png(png, info,
               PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA |
                   PNG_TRANSFORM_PACKING,
               nullptr);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  const int channels = (color & PNG_COLOR_MASK_COLOR) ? 3 : 1;
  png_bytepp rows = png_get_rows(png, info);

  Image img;
  if (width > 0 && height > 0) {
    img = Image(height, width, channels);
    const int bytes = depth == 16 ? 2 : 1;
    const double maxval = depth == 16 ? 65535.0 : 255.0;
    if (format_max) *format_max = static_cast<int>(maxval);
    for (int y = 0; y < height; ++y) {
      const png_bytep row = rows[y];
      for (int x = 0; x < width; ++x) {
        for (int c = 0; c < channels; ++c) {
          const std::size_t off =
              (static_cast<std::size_t>(x) * channels + c) * bytes;
          int v = row[off];
          if (bytes == 2) v = (v << 8) | row[off + 1];
          img.at(c, y, x) = v / maxval;
        }
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (img.empty()) {
    throw std::runtime_error("zero-dimension image " + path.string());
  }
  return img;
}

unsigned char to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

void save_pnm(const Image& img, const std::filesystem::path& path,
              int out_channels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (out_channels == 1 ? "P5" : "P6") << "\n"
      << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(img.pixel_count() * out_channels);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < out_channels; ++c) {
        raw.push_back(to_byte(img.at(std::min(c, img.channels() - 1), y, x)));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void save_png(const Image& img, const std::filesystem::path& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width());
  desc.height = static_cast<png_uint_32>(img.height());
  desc.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> raw;
  raw.reserve(img.pixel_count() * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        raw.push_back(to_byte(img.at(c, y, x)));
      }
    }
  }
  if (!png_image_write_to_file(&desc, path.string().c_str(), 0, raw.data(), 0,
                               nullptr)) {
    throw std::runtime_error("cannot write " + path.string() + ": " +
                             desc.message);
  }
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  unsigned char sig[8] = {0};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

}  // namespace

Image load_image(const std::filesystem::path& path, int* format_max) {
  if (!std::filesystem::is_regular_file(path)) {
    throw std::runtime_error("cannot open " + path.string());
  }
  if (has_png_signature(path)) return load_png(path, format_max);
  return load_pnm(path, format_max);
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw std::invalid_argument("save_image: channels must be 1 or 3");
  }
  if (img.empty()) throw std::invalid_argument("save_image: empty image");
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    save_png(img, path);
  } else if (ext == ".pgm") {
    if (img.channels() != 1) {
      throw std::invalid_argument("save_image: PGM needs a gray image");
    }
    save_pnm(img, path, 1);
  } else if (ext == ".ppm") {
    save_pnm(img, path, 3);
  } else {
    throw std::invalid_argument("save_image: unsupported extension " + ext);
  }
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) {
    throw std::invalid_argument("to_grayscale: channels must be 1 or 3");
  }
  Image gray(img.height(), img.width(), 1);
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  auto out = gray.plane(0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return gray;
}

double sample_channel(const Image& img, int c, double x, double y) {
  const int w = img.width();
  const int h = img.height();
  if (!(x > -1.0 && x < w && y > -1.0 && y < h)) return 0.0;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const double* p = img.plane(c).data();
  auto px = [&](int xi, int yi) {
    return (xi >= 0 && yi >= 0 && xi < w && yi < h)
               ? p[static_cast<std::size_t>(yi) * w + xi]
               : 0.0;
  };
  return (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) +
         ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
}

double sample_support(int height, int width, double x, double y) {
  if (!(x > -1.0 && x < width && y > -1.0 && y < height)) return 0.0;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const double wx = (x0 >= 0 ? 1 - ax : 0.0) + (x0 + 1 < width ? ax : 0.0);
  const double wy = (y0 >= 0 ? 1 - ay : 0.0) + (y0 + 1 < height ? ay : 0.0);
  return wx * wy;
}

std::vector<double> sample_bilinear(const Image& img, double x, double y) {
  std::vector<double> out(img.channels());
  for (int c = 0; c < img.channels(); ++c) out[c] = sample_channel(img, c, x, y);
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("resize_bilinear: output dims must be >= 1");
  }
  if (img.empty()) throw std::invalid_argument("resize_bilinear: empty input");
  const int in_h = img.height();
  const int in_w = img.width();
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;

  struct Tap {
    int i0, i1;
    double a;
  };
  auto taps = [](int out_n, int in_n, double scale) {
    std::vector<Tap> t(out_n);
    for (int d = 0; d < out_n; ++d) {
      double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, in_n - 1.0);
      int i0 = static_cast<int>(std::floor(s));
      int i1 = std::min(i0 + 1, in_n - 1);
      t[d] = {i0, i1, s - i0};
    }
    return t;
  };
  const auto tx = taps(out_w, in_w, sx);
  const auto ty = taps(out_h, in_h, sy);

  Image out(out_h, out_w, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const Tap& vy = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& vx = tx[x];
        const double top = (1 - vx.a) * img.at(c, vy.i0, vx.i0) +
                           vx.a * img.at(c, vy.i0, vx.i1);
        const double bot = (1 - vx.a) * img.at(c, vy.i1, vx.i0) +
                           vx.a * img.at(c, vy.i1, vx.i1);
        out.at(c, y, x) = (1 - vy.a) * top + vy.a * bot;
      }
    }
  }
  return out;
}

}  // namespace meshalign
