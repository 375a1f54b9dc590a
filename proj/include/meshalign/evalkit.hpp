#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "meshalign/homography.hpp"
#include "meshalign/image.hpp"
#include "meshalign/objective.hpp"

namespace meshalign {

/// Deterministic multi-octave value-noise texture in [0,1].
Image make_texture(int height, int width, std::uint64_t seed, int channels = 3);

struct SynthPair {
  Image reference;
  Image target;
  FourPtMotion gt_motion;  ///< corner motions in patch coordinates
  double rho = 0;
  std::uint64_t seed = 0;
  int patch_x = 0;  ///< patch origin in the source image
  int patch_y = 0;
  /// Source-frame map from perturbed to original corners that produced
  /// the target.
  Homography generator;
};

/// Crops a patch at a random location with rho margin, perturbs its
/// corners uniformly in [-rho, rho]^2, warps the source by the map taking
/// perturbed corners back to the originals and crops the same location.
SynthPair synth_pair(const Image& src, double rho, int patch, std::uint64_t seed);

/// Ground-truth alignment homography of a pair in patch coordinates.
Homography gt_homography(const SynthPair& pair);

Image crop(const Image& img, int x, int y, int height, int width);

/// sqrt(1/4 sum_i ||pred_i - gt_i||^2).
double rmse_4pt(const FourPtMotion& pred, const FourPtMotion& gt);

inline constexpr double kPsnrCap = 99.0;
/// Pixels with warped-mask value above this count as overlap.
inline constexpr double kOverlapThreshold = 0.99;

/// Full-frame PSNR over all channels; 99 dB when the MSE is zero.
double psnr(const Image& a, const Image& b);
/// Mean SSIM on grayscale over every 11x11 window inside the frame.
double ssim(const Image& a, const Image& b);

/// PSNR / SSIM between W(E) * I_r and W(I_t) restricted to the overlap.
/// SSIM only uses windows that lie entirely inside the overlap.
double psnr_overlap(const Image& i_r, const Image& i_t, const Warp& warp);
double ssim_overlap(const Image& i_r, const Image& i_t, const Warp& warp);

/// Overlap mask W(E) on the reference canvas.
Image overlap_mask(const Image& i_r, const Image& i_t, const Warp& warp);
/// W(I_t) on the reference canvas.
Image warp_target(const Image& i_r, const Image& i_t, const Warp& warp);

struct TierReport {
  std::vector<double> scores;  ///< input order
  double easy = 0;
  double moderate = 0;
  double hard = 0;
  double average = 0;
  std::size_t easy_count = 0;
  std::size_t moderate_count = 0;
  std::size_t hard_count = 0;
};

/// Sorts best-first and splits at floor(0.3 n) and floor(0.6 n). Empty
/// tiers report NaN.
TierReport tier_partition(const std::vector<double>& scores, bool higher_is_better);

void write_motion(const FourPtMotion& m, const std::filesystem::path& path);
FourPtMotion read_motion(const std::filesystem::path& path);

struct PairScore {
  std::string id;
  std::optional<double> rmse;
  std::optional<double> psnr;
  std::optional<double> ssim;
};

/// CSV header + one line per pair, then an Easy/Moderate/Hard/Average
/// summary per metric present.
std::string format_report(const std::vector<PairScore>& scores);

}  // namespace meshalign
