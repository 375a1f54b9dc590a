#include "meshalign/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace meshalign {

Image make_texture(int height, int width, std::uint64_t seed, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw std::invalid_argument("make_texture: empty size");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Image out(height, width, channels);
  // Octave grid spacings in pixels, coarse to fine.
  const int spacings[] = {32, 16, 8, 4};
  const double weights[] = {1.0, 0.8, 0.6, 0.35};
  for (int c = 0; c < channels; ++c) {
    for (int o = 0; o < 4; ++o) {
      const int gh = std::max(2, height / spacings[o] + 2);
      const int gw = std::max(2, width / spacings[o] + 2);
      Image grid(gh, gw, 1);
      for (double& v : grid.data()) v = uni(rng);
      const Image up = resize_bilinear(grid, height, width);
      auto dst = out.plane(c);
      auto src = up.plane(0);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weights[o] * src[i];
    }
    auto plane = out.plane(c);
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const double l = *lo;
    const double span = std::max(*hi - l, 1e-12);
    for (double& v : plane) v = (v - l) / span;
  }
  return out;
}

Image crop(const Image& img, int x, int y, int height, int width) {
  if (x < 0 || y < 0 || x + width > img.width() || y + height > img.height()) {
    throw std::out_of_range("crop: region outside image");
  }
  Image out(height, width, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int r = 0; r < height; ++r) {
      for (int q = 0; q < width; ++q) out.at(c, r, q) = img.at(c, y + r, x + q);
    }
  }
  return out;
}

SynthPair synth_pair(const Image& src, double rho, int patch, std::uint64_t seed) {
  if (rho < 0) throw std::invalid_argument("synth_pair: rho must be >= 0");
  if (patch < 2) throw std::invalid_argument("synth_pair: patch too small");
  const int margin = static_cast<int>(std::ceil(rho));
  if (src.width() < patch + 2 * margin || src.height() < patch + 2 * margin) {
    throw std::invalid_argument("synth_pair: source image too small for patch + rho");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_x(margin, src.width() - patch - margin);
  std::uniform_int_distribution<int> pick_y(margin, src.height() - patch - margin);
  std::uniform_real_distribution<double> perturb(-rho, rho);

  SynthPair pair;
  pair.rho = rho;
  pair.seed = seed;
  pair.patch_x = pick_x(rng);
  pair.patch_y = pick_y(rng);
  const Rect rect{static_cast<double>(pair.patch_x), static_cast<double>(pair.patch_y),
                  static_cast<double>(patch), static_cast<double>(patch)};
  const auto corners = rect.corners();
  std::array<Vec2, 4> perturbed;
  bool moved = false;
  for (int i = 0; i < 4; ++i) {
    const double du = rho > 0 ? perturb(rng) : 0.0;
    const double dv = rho > 0 ? perturb(rng) : 0.0;
    pair.gt_motion.d[i] = Vec2(du, dv);
    perturbed[i] = corners[i] + pair.gt_motion.d[i];
    moved = moved || du != 0 || dv != 0;
  }
  pair.generator = moved ? dlt_solve(perturbed, corners) : Homography::identity();
  const Image warped = warp_global(src, pair.generator, src.height(), src.width());
  pair.reference = crop(src, pair.patch_x, pair.patch_y, patch, patch);
  pair.target = crop(warped, pair.patch_x, pair.patch_y, patch, patch);
  return pair;
}

Homography gt_homography(const SynthPair& pair) {
  const Rect rect{0, 0, static_cast<double>(pair.reference.width()),
                  static_cast<double>(pair.reference.height())};
  return from_4pt(pair.gt_motion, rect);
}

double rmse_4pt(const FourPtMotion& pred, const FourPtMotion& gt) {
  double sq = 0;
  for (int i = 0; i < 4; ++i) sq += (pred.d[i] - gt.d[i]).squaredNorm();
  return std::sqrt(sq / 4.0);
}

double psnr(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw std::invalid_argument("psnr: shape mismatch");
  }
  double sq = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(a.data().size());
  return mse > 0 ? std::min(kPsnrCap, -10.0 * std::log10(mse)) : kPsnrCap;
}

namespace {

constexpr int kSsimRadius = 5;

std::array<double, 2 * kSsimRadius + 1> gaussian_taps() {
  std::array<double, 2 * kSsimRadius + 1> g{};
  double sum = 0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    g[i + kSsimRadius] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
    sum += g[i + kSsimRadius];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Mean SSIM over window centres for which `use_window` holds.
template <typename Pred>
double mean_ssim(const Image& a, const Image& b, Pred use_window) {
  const Image ga = to_grayscale(a);
  const Image gb = to_grayscale(b);
  const auto g = gaussian_taps();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0;
  std::size_t count = 0;
  for (int y = kSsimRadius; y + kSsimRadius < ga.height(); ++y) {
    for (int x = kSsimRadius; x + kSsimRadius < ga.width(); ++x) {
      if (!use_window(x, y)) continue;
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = -kSsimRadius; j <= kSsimRadius; ++j) {
        for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
          const double w = g[j + kSsimRadius] * g[i + kSsimRadius];
          const double va = ga.at(0, y + j, x + i);
          const double vb = gb.at(0, y + j, x + i);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("ssim: no window fits inside the overlap");
  return total / static_cast<double>(count);
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw std::invalid_argument("ssim: shape mismatch");
  }
  return mean_ssim(a, b, [](int, int) { return true; });
}

Image overlap_mask(const Image& i_r, const Image& i_t, const Warp& warp) {
  if (const auto* h = std::get_if<Homography>(&warp)) {
    return warp_global(Image(i_t.height(), i_t.width(), 1, 1.0), *h, i_r.height(),
                       i_r.width());
  }
  const Mesh& mesh = std::get<Mesh>(warp);
  if (mesh.canvas_h != i_r.height() || mesh.canvas_w != i_r.width()) {
    throw std::invalid_argument("overlap: mesh canvas must match the reference");
  }
  return warp_mask(mesh, i_t.height(), i_t.width());
}

Image warp_target(const Image& i_r, const Image& i_t, const Warp& warp) {
  if (const auto* h = std::get_if<Homography>(&warp)) {
    return warp_global(i_t, *h, i_r.height(), i_r.width());
  }
  return warp_mesh(i_t, std::get<Mesh>(warp));
}

namespace {

struct OverlapPair {
  Image masked_ref;
  Image warped;
  Image mask;
};

OverlapPair overlap_pair(const Image& i_r, const Image& i_t, const Warp& warp) {
  if (i_r.channels() != i_t.channels()) {
    throw std::invalid_argument("overlap metrics: channel count mismatch");
  }
  OverlapPair p{i_r, warp_target(i_r, i_t, warp), overlap_mask(i_r, i_t, warp)};
  for (int c = 0; c < i_r.channels(); ++c) {
    auto ref = p.masked_ref.plane(c);
    auto m = p.mask.plane(0);
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] *= m[i];
  }
  return p;
}

}  // namespace

double psnr_overlap(const Image& i_r, const Image& i_t, const Warp& warp) {
  const OverlapPair p = overlap_pair(i_r, i_t, warp);
  double sq = 0;
  std::size_t n = 0;
  const auto mask = p.mask.plane(0);
  for (int c = 0; c < i_r.channels(); ++c) {
    const auto a = p.masked_ref.plane(c);
    const auto b = p.warped.plane(c);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] <= kOverlapThreshold) continue;
      sq += (a[i] - b[i]) * (a[i] - b[i]);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("psnr_overlap: empty overlap");
  const double mse = sq / static_cast<double>(n);
  return mse > 0 ? std::min(kPsnrCap, -10.0 * std::log10(mse)) : kPsnrCap;
}

double ssim_overlap(const Image& i_r, const Image& i_t, const Warp& warp) {
  const OverlapPair p = overlap_pair(i_r, i_t, warp);
  // Summed-area table of "inside overlap" flags for O(1) window checks.
  const int h = p.mask.height();
  const int w = p.mask.width();
  std::vector<int> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  bool any = false;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int inside = p.mask.at(0, y, x) > kOverlapThreshold ? 1 : 0;
      any = any || inside;
      sat[(y + 1) * (w + 1) + x + 1] = inside + sat[y * (w + 1) + x + 1] +
                                       sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
    }
  }
  if (!any) throw std::invalid_argument("ssim_overlap: empty overlap");
  const int side = 2 * kSsimRadius + 1;
  auto full = [&](int x, int y) {
    const int x0 = x - kSsimRadius, y0 = y - kSsimRadius;
    const int x1 = x0 + side, y1 = y0 + side;
    const int s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] -
                  sat[y1 * (w + 1) + x0] + sat[y0 * (w + 1) + x0];
    return s == side * side;
  };
  return mean_ssim(p.masked_ref, p.warped, full);
}

TierReport tier_partition(const std::vector<double>& scores, bool higher_is_better) {
  if (scores.empty()) throw std::invalid_argument("tier_partition: no scores");
  TierReport report;
  report.scores = scores;
  std::vector<double> sorted = scores;
  if (higher_is_better) {
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
  } else {
    std::sort(sorted.begin(), sorted.end());
  }
  const std::size_t n = sorted.size();
  const std::size_t b1 = (3 * n) / 10;
  const std::size_t b2 = (6 * n) / 10;
  auto mean = [&](std::size_t lo, std::size_t hi) {
    if (hi <= lo) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(sorted.begin() + lo, sorted.begin() + hi, 0.0) /
           static_cast<double>(hi - lo);
  };
  report.easy = mean(0, b1);
  report.moderate = mean(b1, b2);
  report.hard = mean(b2, n);
  report.average = mean(0, n);
  report.easy_count = b1;
  report.moderate_count = b2 - b1;
  report.hard_count = n - b2;
  return report;
}

void write_motion(const FourPtMotion& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (const auto& d : m.d) out << d.x() << " " << d.y() << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

FourPtMotion read_motion(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  FourPtMotion m;
  for (auto& d : m.d) {
    double u = 0, v = 0;
    if (!(in >> u >> v)) throw std::runtime_error("malformed motion file " + path.string());
    d = Vec2(u, v);
  }
  return m;
}

std::string format_report(const std::vector<PairScore>& scores) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "id,rmse_4pt,psnr,ssim\n";
  auto field = [&](const std::optional<double>& v) {
    if (v) {
      out << *v;
    } else {
      out << "NA";
    }
  };
  std::vector<double> rmse, psnr_v, ssim_v;
  for (const auto& s : scores) {
    out << s.id << ",";
    field(s.rmse);
    out << ",";
    field(s.psnr);
    out << ",";
    field(s.ssim);
    out << "\n";
    if (s.rmse) rmse.push_back(*s.rmse);
    if (s.psnr) psnr_v.push_back(*s.psnr);
    if (s.ssim) ssim_v.push_back(*s.ssim);
  }
  out << "\n# metric,Easy,Moderate,Hard,Average\n";
  auto summary = [&](const char* name, const std::vector<double>& v, bool higher) {
    if (v.empty()) return;
    const TierReport t = tier_partition(v, higher);
    out << "# " << name << "," << t.easy << "," << t.moderate << "," << t.hard << ","
        << t.average << "\n";
  };
  summary("rmse_4pt", rmse, false);
  summary("psnr", psnr_v, true);
  summary("ssim", ssim_v, true);
  return out.str();
}

}  // namespace meshalign
