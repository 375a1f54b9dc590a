// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "../common/two_plane.hpp"
#include "meshalign/aligner.hpp"
#include "meshalign/cli.hpp"
#include "meshalign/correlation.hpp"
#include "meshalign/evalkit.hpp"
#include "meshalign/features.hpp"
#include "meshalign/homography.hpp"
#include "meshalign/mesh_warp.hpp"
#include "meshalign/objective.hpp"
#include "meshalign/parallel.hpp"

using namespace meshalign;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

FeatureMap random_unit_features(int h, int w, int c, std::mt19937_64& rng,
                                bool non_negative = false) {
  std::normal_distribution<double> dist(0.0, 1.0);
  FeatureMap f;
  f.data = Image(h, w, c);
  for (auto& v : f.data.data()) v = non_negative ? std::abs(dist(rng)) : dist(rng);
  return l2_normalize(f);
}

Homography random_homography(std::mt19937_64& rng, double rho, double side) {
  std::uniform_real_distribution<double> u(-rho, rho);
  FourPtMotion m;
  for (auto& d : m.d) d = Vec2(u(rng), u(rng));
  return from_4pt(m, Rect{0, 0, side, side});
}

// 1. Convolution-path correlation volume against the direct sum.
Outcome ccl_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_int_distribution<int> chan(1, 6);
  std::uniform_int_distribution<int> half(0, 3);
  double worst = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 100; ++i) {
    const int h = dim(rng), w = dim(rng), c = chan(rng), k = 2 * half(rng) + 1;
    const FeatureMap fr = random_unit_features(h, w, c, rng);
    const FeatureMap ft = random_unit_features(h, w, c, rng);
    const auto fast = correlation_volume(fr, ft, k);
    const auto slow = correlation_volume_direct(fr, ft, k);
    for (std::size_t j = 0; j < fast.data.size(); ++j) {
      worst = std::max(worst, std::abs(fast.data[j] - slow.data[j]));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 5.0, fmt("max abs err %.3e, %.3f s", worst, secs)};
}

// 2. Scale softmax sharpening and the K=3 raw range.
Outcome softmax_sharpening() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> len(2, 64);
  std::uniform_real_distribution<double> val(0.0, 9.0);
  const double alphas[] = {1, 5, 10, 50};
  int monotone_fail = 0, argmax_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    CorrelationVolume raw;
    raw.height = raw.width = 1;
    raw.channels = len(rng);
    raw.data.resize(raw.channels);
    for (auto& v : raw.data) v = val(rng);
    const auto top = std::max_element(raw.data.begin(), raw.data.end());
    const auto arg = top - raw.data.begin();
    *top += 1e-3;  // unique maximum
    double prev = 0;
    for (double a : alphas) {
      const auto p = scale_softmax(raw, a);
      const auto pm = std::max_element(p.data.begin(), p.data.end());
      if (pm - p.data.begin() != arg) ++argmax_fail;
      if (*pm < prev) ++monotone_fail;
      prev = *pm;
    }
  }
  // Raw range with K=3 on non-negative unit features (post-activation maps).
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < 50; ++i) {
    const FeatureMap fr = random_unit_features(8, 8, 6, rng, true);
    const FeatureMap ft = random_unit_features(8, 8, 6, rng, true);
    for (const auto& vol : {correlation_volume(fr, ft, 3), correlation_volume(fr, fr, 3)}) {
      for (double v : vol.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  const bool range_ok = lo >= 0 && hi <= 9 + 1e-9;
  return {monotone_fail == 0 && argmax_fail == 0 && range_ok,
          fmt("monotone violations %d, argmax changes %d, raw range [%.4f, %.4f]",
              monotone_fail, argmax_fail, lo, hi)};
}

// 3. Feature flow decoding.
Outcome flow_exactness() {
  std::mt19937_64 rng(303);
  double exact_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(2, 10);
    const int h = dim(rng), w = dim(rng);
    CorrelationVolume prob;
    prob.height = h;
    prob.width = w;
    prob.channels = h * w;
    prob.kind = CorrelationVolume::Kind::kProbability;
    prob.data.assign(static_cast<std::size_t>(h) * w * h * w, 0.0);
    std::vector<int> tx(h * w), ty(h * w);
    std::uniform_int_distribution<int> rx(0, w - 1), ry(0, h - 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        tx[i] = rx(rng);
        ty[i] = ry(rng);
        prob.at(y, x)[ty[i] * w + tx[i]] = 1.0;
      }
    }
    const FlowField f = feature_flow(prob);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        exact_err = std::max(exact_err, std::abs(f.m_hor(y, x) - (tx[i] - x)));
        exact_err = std::max(exact_err, std::abs(f.m_ver(y, x) - (ty[i] - y)));
      }
    }
  }
  // Shift construction: f_t(y, x) = f_r(y, x - 2) circularly.
  double shift_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 12, w = 14, c = 8;
    const FeatureMap fr = random_unit_features(h, w, c, rng);
    FeatureMap ft = fr;
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          ft.data.at(ch, y, x) = fr.data.at(ch, y, ((x - 2) % w + w) % w);
        }
      }
    }
    const FlowField f = ccl(fr, ft, 3, 10.0);
    for (int y = 1; y + 1 < h; ++y) {
      for (int x = 1; x + 3 < w; ++x) {
        shift_err = std::max(shift_err, std::abs(f.m_hor(y, x) - 2.0));
        shift_err = std::max(shift_err, std::abs(f.m_ver(y, x)));
      }
    }
  }
  return {exact_err == 0.0 && shift_err < 0.1,
          fmt("one-hot max err %.3g, shifted interior max err %.3e", exact_err, shift_err)};
}

// 4. 4-pt motion -> homography -> corners.
Outcome dlt_round_trip() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-32, 32);
  const Rect rect{0, 0, 128, 128};
  const auto corners = rect.corners();
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    FourPtMotion m;
    for (auto& d : m.d) {
      do {
        d = Vec2(u(rng), u(rng));
      } while (d.norm() > 32);
    }
    const Homography h = from_4pt(m, rect);
    for (int k = 0; k < 4; ++k) {
      worst = std::max(worst, (h(corners[k]) - (corners[k] + m.d[k])).norm());
    }
  }
  return {worst < 1e-8, fmt("max corner residual %.3e px", worst)};
}

// 5. Mesh warp of a projective mesh equals the global warp.
Outcome mesh_global_equivalence() {
  std::mt19937_64 rng(505);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const Image img = make_texture(128, 128, 5000 + i, 3);
    const Homography h = random_homography(rng, 12, 128);
    const Image a = warp_mesh(img, mesh_from_homography(h, 8, 8, 128, 128));
    const Image b = warp_global(img, h, 128, 128);
    for (std::size_t j = 0; j < a.data().size(); ++j) {
      worst = std::max(worst, std::abs(a.data()[j] - b.data()[j]));
    }
  }
  return {worst < 1e-5, fmt("max per-pixel difference %.3e", worst)};
}

// 6. Shape loss vanishes on projective meshes with uniform depth.
Outcome shape_nullity() {
  std::mt19937_64 rng(606);
  double worst = 0;
  const GridDepthLevels flat = make_levels(8, 8, 1, std::vector<int>(64, 0));
  for (int i = 0; i < 100; ++i) {
    const Homography h = random_homography(rng, 24, 128);
    worst = std::max(worst, shape_loss(mesh_from_homography(h, 8, 8, 128, 128), flat));
  }
  return {worst < 1e-9, fmt("max shape loss %.3e", worst)};
}

// 7. Finite-difference gradient is a descent direction.
Outcome gradient_descent_check() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  std::uniform_int_distribution<int> lvl(0, 3);
  int passed = 0;
  double worst_ratio = -std::numeric_limits<double>::infinity();
  ObjectiveParams params;
  for (int i = 0; i < 20; ++i) {
    const Image ir = make_texture(64, 64, 7000 + i, 1);
    const Image it = warp_global(ir, random_homography(rng, 3, 64), 64, 64);
    Mesh mesh = regular_mesh(4, 4, 64, 64);
    for (int r = 0; r <= 4; ++r) {
      for (int c = 0; c <= 4; ++c) mesh.vertex(r, c) += Vec2(jitter(rng), jitter(rng));
    }
    std::vector<int> labels(16);
    for (auto& l : labels) l = lvl(rng);
    const GridDepthLevels levels = make_levels(4, 4, 4, labels);
    const auto g = gradient(ir, it, mesh, levels, params);
    double gmax = 0;
    for (const auto& v : g) gmax = std::max(gmax, v.cwiseAbs().maxCoeff());
    Mesh moved = mesh;
    for (std::size_t k = 0; k < g.size(); ++k) moved.vertices[k] -= 1e-2 * g[k] / gmax;
    const double before = mesh_layer_objective(ir, it, mesh, levels, params);
    const double after = mesh_layer_objective(ir, it, moved, levels, params);
    if (after < before) ++passed;
    worst_ratio = std::max(worst_ratio, (after - before) / before);
  }
  return {passed == 20,
          fmt("%d/20 decreased (largest relative change %.3e); analytic path not built",
              passed, worst_ratio)};
}

// 8. End-to-end recovery on synthetic pairs.
Outcome synthetic_recovery() {
  set_thread_count(1);
  const auto t0 = Clock::now();
  AlignConfig cfg;
  const Rect rect{0, 0, 128, 128};
  double base = 0, final_h = 0, final_mesh = 0;
  const int n = 50;
  for (int i = 0; i < n; ++i) {
    const Image src = make_texture(160, 160, 8000 + i, 3);
    const SynthPair pair = synth_pair(src, 8.0, 128, 88 + i);
    const AlignmentResult r = align(pair.reference, pair.target, cfg);
    base += rmse_4pt(FourPtMotion{}, pair.gt_motion);
    final_h += rmse_4pt(to_4pt(r.global_h, rect), pair.gt_motion);
    FourPtMotion mm;
    const auto corners = rect.corners();
    const Vec2 mc[4] = {r.mesh.vertex(0, 0), r.mesh.vertex(0, r.mesh.cols),
                        r.mesh.vertex(r.mesh.rows, 0), r.mesh.vertex(r.mesh.rows, r.mesh.cols)};
    for (int k = 0; k < 4; ++k) mm.d[k] = mc[k] - corners[k];
    final_mesh += rmse_4pt(mm, pair.gt_motion);
  }
  set_thread_count(0);
  base /= n;
  final_h /= n;
  final_mesh /= n;
  const double secs = seconds_since(t0);
  return {final_h <= 0.2 * base && secs < 1800,
          fmt("identity %.3f px, global %.3f px (%.1f%%), mesh corners %.3f px, %.1f s",
              base, final_h, 100 * final_h / base, final_mesh, secs)};
}

struct ParallaxRun {
  double mesh_loss = 0;
  double best_global = 0;
  double mesh_m1 = 0;
  double mesh_m2 = 0;
};

std::vector<ParallaxRun>& parallax_runs() {
  static std::vector<ParallaxRun> runs;
  if (!runs.empty()) return runs;
  for (int i = 0; i < 20; ++i) {
    const auto pair = meshalign::testing::make_two_plane_pair(9000 + i);
    ParallaxRun run;
    AlignConfig cfg;
    cfg.depth_levels = 1;
    const AlignmentResult r1 = align(pair.reference, pair.target, cfg, pair.depth);
    cfg.depth_levels = 2;
    const AlignmentResult r2 = align(pair.reference, pair.target, cfg, pair.depth);
    run.mesh_m1 = content_loss_layer(pair.reference, pair.target, r1.working_mesh);
    run.mesh_m2 = content_loss_layer(pair.reference, pair.target, r2.working_mesh);
    run.mesh_loss = run.mesh_m2;

    AlignConfig gcfg;
    gcfg.refine_iters = 300;
    double best = content_loss_layer(pair.reference, pair.target, r2.working_h);
    for (const Homography& h0 : {r2.working_h, pair.left, pair.right}) {
      const Homography h = refine_global(pair.reference, pair.target, h0, gcfg);
      best = std::min(best, content_loss_layer(pair.reference, pair.target, h));
    }
    run.best_global = best;
    runs.push_back(run);
  }
  return runs;
}

// 9. Mesh beats the best single homography on parallax pairs.
Outcome parallax_benefit() {
  int wins = 0;
  double mean_mesh = 0, mean_global = 0;
  for (const auto& r : parallax_runs()) {
    if (r.mesh_loss < r.best_global) ++wins;
    mean_mesh += r.mesh_loss / 20;
    mean_global += r.best_global / 20;
  }
  return {wins >= 18, fmt("%d/20 wins, mean mesh %.5f vs best global %.5f", wins, mean_mesh,
                          mean_global)};
}

// 10. Two depth levels versus one at equal shape weight.
Outcome depth_levels_benefit() {
  int wins = 0;
  double m1 = 0, m2 = 0;
  for (const auto& r : parallax_runs()) {
    if (r.mesh_m2 <= r.mesh_m1) ++wins;
    m1 += r.mesh_m1 / 20;
    m2 += r.mesh_m2 / 20;
  }
  return {wins >= 16, fmt("%d/20 with M=2 <= M=1, mean M=1 %.5f, M=2 %.5f", wins, m1, m2)};
}

// 11. Bench channel counts and scaling.
Outcome bench_contract() {
  const BenchReport rep = run_bench({8, 16, 32, 64}, kChannelsPerScale, 0.3, 11);
  bool ratios = true;
  double worst_ratio = 0;
  for (const auto& r : rep.rows) {
    const long long expect_cost = static_cast<long long>(2 * r.n + 1) * (2 * r.n + 1);
    const long long expect_ccl = static_cast<long long>(r.n) * r.n;
    const double ratio = static_cast<double>(r.ccl_channels) / r.cost_channels;
    worst_ratio = std::max(worst_ratio, ratio);
    ratios = ratios && r.cost_channels == expect_cost && r.ccl_channels == expect_ccl &&
             ratio < 0.25;
  }
  const bool slopes = std::abs(rep.cost_slope - 4) <= 0.5 && std::abs(rep.ccl_slope - 4) <= 0.5;
  return {ratios && slopes, fmt("max channel ratio %.4f, slopes cost %.3f / ccl %.3f",
                                worst_ratio, rep.cost_slope, rep.ccl_slope)};
}

// 12. Metric sanity.
Outcome metric_sanity() {
  const Image a(64, 64, 3, 0.5);
  const Image b(64, 64, 3, 0.6);
  const double p = psnr_overlap(a, b, Homography::identity());
  FourPtMotion pred, gt;
  for (auto& d : pred.d) d = Vec2(3, 4);
  const double r = rmse_4pt(pred, gt);
  return {std::abs(p - 20.0) <= 0.01 && r == 5.0, fmt("psnr %.6f dB, rmse %.17g", p, r)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "ccl_oracle_equivalence", ccl_oracle},
      {2, "scale_softmax_sharpening", softmax_sharpening},
      {3, "feature_flow_exactness", flow_exactness},
      {4, "dlt_round_trip", dlt_round_trip},
      {5, "mesh_global_warp_equivalence", mesh_global_equivalence},
      {6, "shape_loss_nullity", shape_nullity},
      {7, "gradient_descent_check", gradient_descent_check},
      {8, "synthetic_recovery", synthetic_recovery},
      {9, "parallax_benefit", parallax_benefit},
      {10, "depth_levels_vs_global_shape", depth_levels_benefit},
      {11, "bench_contract", bench_contract},
      {12, "metric_sanity", metric_sanity},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %-30s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
