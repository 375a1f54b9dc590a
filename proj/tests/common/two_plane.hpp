#pragma once

// Synthetic parallax pairs: two planar regions that share a crease on the
// vertical mesh line x = size / 2, so an aligned mesh can represent the
// motion exactly while a single homography cannot.

#include <cstdint>
#include <random>

#include "meshalign/evalkit.hpp"
#include "meshalign/homography.hpp"
#include "meshalign/image.hpp"
#include "meshalign/objective.hpp"

namespace meshalign::testing {

struct TwoPlanePair {
  Image reference;
  Image target;
  DepthMap depth;     ///< target-frame, two levels (1 left plane, 2 right plane)
  Homography left;    ///< reference -> target on x < crease
  Homography right;   ///< reference -> target on x >= crease
  double crease = 0;
};

inline TwoPlanePair make_two_plane_pair(std::uint64_t seed, int size = 128,
                                        double rho = 4.0, double max_shear = 0.12) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> corner(-rho, rho);
  std::uniform_real_distribution<double> shear(-max_shear, max_shear);

  const double s = size;
  const Rect rect{0, 0, s, s};
  FourPtMotion m;
  for (auto& d : m.d) d = Vec2(corner(rng), corner(rng));
  const Homography h_a = from_4pt(m, rect);

  // Affine map fixing the crease line: x' = c + a (x - c), y' = y + b (x - c).
  double a = 1, b = 0;
  do {
    a = 1 + shear(rng);
    b = shear(rng);
  } while (std::abs(a - 1) + std::abs(b) < 0.06);
  const double c = s / 2;
  Eigen::Matrix3d am;
  am << a, 0, c - a * c, b, 1, -b * c, 0, 0, 1;
  const Homography affine(am);

  TwoPlanePair pair;
  pair.left = h_a;
  pair.right = h_a * affine;
  pair.crease = c;

  const int margin = size / 4;
  const Image src = make_texture(size + 2 * margin, size + 2 * margin, seed ^ 0x5eedULL, 3);
  pair.target = crop(src, margin, margin, size, size);
  pair.reference = Image(size, size, 3);
  pair.depth.values = Image(size, size, 1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 p(x + 0.5, y + 0.5);
      const Vec2 q = (p.x() < c ? pair.left : pair.right)(p);
      for (int ch = 0; ch < 3; ++ch) {
        pair.reference.at(ch, y, x) =
            sample_channel(src, ch, q.x() + margin - 0.5, q.y() + margin - 0.5);
      }
      // Depth lives on the target grid: which plane does this pixel show?
      const Vec2 back = h_a.inverse()(p);
      pair.depth.values.at(0, y, x) = back.x() < c ? 1.0 : 2.0;
    }
  }
  return pair;
}

}  // namespace meshalign::testing
