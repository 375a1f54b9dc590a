#include "meshalign/aligner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "meshalign/features.hpp"

namespace meshalign {

ObjectiveParams AlignConfig::objective_params() const {
  ObjectiveParams p;
  p.lambda = lambda;
  p.mu = mu;
  p.omega = omega;
  p.depth_levels = depth_levels;
  return p;
}

void AlignConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("AlignConfig: ") + what);
  };
  require(grid_rows >= 1 && grid_cols >= 1, "grid counts must be >= 1");
  require(patch >= 1 && patch % 2 == 1, "patch side must be odd and positive");
  require(alpha > 0, "alpha must be positive");
  require(depth_levels >= 1, "depth levels must be >= 1");
  require(lambda >= 0 && mu >= 0, "loss weights must be non-negative");
  require(omega[0] >= 0 && omega[1] >= 0 && omega[2] >= 0, "omega must be non-negative");
  require(refine_iters >= 0, "refine_iters must be >= 0");
  require(step_size > 0, "step size must be positive");
  require(working_resolution >= 32, "working resolution must be >= 32");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr int kMaxHalvings = 10;
constexpr double kInitialStepFraction = 0.25;
constexpr double kStepGrow = 1.2;
constexpr double kStepShrink = 0.5;
constexpr double kMinStep = 1e-4;
constexpr double kFdStep = 1e-3;
constexpr int kFeatureScales = 3;
constexpr double kMinOverlapFraction = 0.01;

FeatureMap warp_features(const FeatureMap& f, const Homography& h) {
  return l2_normalize(FeatureMap{warp_global(f.data, h, f.height(), f.width()), false});
}

// Cells off the one-cell border, optionally also requiring full warped
// support.
std::vector<bool> interior_cells(int h, int w, const Image* support) {
  std::vector<bool> mask(static_cast<std::size_t>(h) * w, false);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (support && support->at(0, y, x) < 0.99) continue;
      mask[static_cast<std::size_t>(y) * w + x] = true;
    }
  }
  return mask;
}

// Residual homography in pixels from a CCL flow on a feature grid whose
// cells are `cell` pixels wide. Falls back to identity when the fit is
// impossible.
Homography flow_to_homography(const FlowField& flow, const std::vector<bool>& valid,
                              double cell, bool robust) {
  try {
    return scale_adapt(fit_flow(flow, valid, robust), cell);
  } catch (const std::exception&) {
    return Homography::identity();
  }
}

double safe_content(const Image& i_r, const Image& i_t, const Homography& h) {
  try {
    return content_loss_layer(i_r, i_t, h);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

Mesh scale_mesh(const Mesh& m, double sx, double sy, int canvas_h, int canvas_w) {
  Mesh out = m;
  out.canvas_h = canvas_h;
  out.canvas_w = canvas_w;
  for (auto& v : out.vertices) v = Vec2(v.x() * sx, v.y() * sy);
  return out;
}

}  // namespace

Homography refine_global(const Image& i_r, const Image& i_t, const Homography& h0,
                         const AlignConfig& cfg, RefineTrace* trace) {
  const Rect rect{0, 0, static_cast<double>(i_r.width()), static_cast<double>(i_r.height())};
  auto loss_of = [&](const FourPtMotion& m) {
    try {
      return content_loss_layer(i_r, i_t, from_4pt(m, rect));
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  FourPtMotion motion = to_4pt(h0, rect);
  double current = loss_of(motion);
  RefineTrace local;
  local.accepted.push_back(current);
  double step = cfg.step_size;

  for (int iter = 0; iter < cfg.refine_iters; ++iter) {
    std::array<double, 8> grad{};
    for (int k = 0; k < 8; ++k) {
      FourPtMotion plus = motion;
      FourPtMotion minus = motion;
      plus.d[k / 2][k % 2] += kFdStep;
      minus.d[k / 2][k % 2] -= kFdStep;
      grad[k] = (loss_of(plus) - loss_of(minus)) / (2 * kFdStep);
    }
    double gmax = 0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (!(gmax > 1e-12) || !std::isfinite(gmax)) break;

    bool accepted = false;
    for (int halving = 0; halving <= kMaxHalvings; ++halving) {
      FourPtMotion trial = motion;
      for (int k = 0; k < 8; ++k) trial.d[k / 2][k % 2] -= step * grad[k] / gmax;
      const double value = loss_of(trial);
      if (value < current) {
        motion = trial;
        current = value;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    local.accepted.push_back(current);
    ++local.iterations;
    step = std::min(2 * step, cfg.step_size);
  }
  if (trace) *trace = local;
  if (local.iterations == 0) return h0;
  return from_4pt(motion, rect);
}

Mesh refine_mesh(const Image& i_r, const Image& i_t, const Mesh& mesh0,
                 const DepthMap& depth, const AlignConfig& cfg, RefineTrace* trace) {
  if (!mesh_is_valid(mesh0)) throw std::domain_error("refine_mesh: initial mesh is invalid");
  const ObjectiveParams params = cfg.objective_params();
  auto levels_of = [&](const Mesh& m) {
    return grid_depth_levels(depth, m, params.depth_levels);
  };

  Mesh mesh = mesh0;
  GridDepthLevels levels = levels_of(mesh);
  double current = mesh_layer_objective(i_r, i_t, mesh, levels, params);
  RefineTrace local;
  local.accepted.push_back(current);
  // Per-coordinate step lengths: grown while a coordinate's gradient keeps
  // its sign, shrunk when it flips.
  std::vector<Vec2> steps(mesh.vertices.size(),
                          Vec2::Constant(kInitialStepFraction * cfg.step_size));
  std::vector<Vec2> prev_grad(mesh.vertices.size(), Vec2::Zero());

  for (int iter = 0; iter < cfg.refine_iters; ++iter) {
    const std::vector<Vec2> grad = gradient(i_r, i_t, mesh, levels, params);
    double gnorm_sq = 0;
    for (const auto& g : grad) gnorm_sq += g.squaredNorm();
    if (std::sqrt(gnorm_sq) < 1e-5 || !std::isfinite(gnorm_sq)) break;

    double gmax = 0;
    for (const auto& g : grad) gmax = std::max(gmax, g.cwiseAbs().maxCoeff());
    std::vector<Vec2> adaptive(grad.size());
    std::vector<Vec2> plain(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      for (int k = 0; k < 2; ++k) {
        const double prod = grad[i][k] * prev_grad[i][k];
        double& d = steps[i][k];
        if (prod > 0) d = std::min(d * kStepGrow, cfg.step_size);
        if (prod < 0) d = std::max(d * kStepShrink, kMinStep);
        adaptive[i][k] = grad[i][k] > 0 ? -d : (grad[i][k] < 0 ? d : 0.0);
      }
      plain[i] = -cfg.step_size * grad[i] / gmax;
    }

    // Backtrack along the adaptive direction; vertices sitting on a kink of
    // the L1 loss can defeat it, so fall back to the scaled gradient.
    bool accepted = false;
    double shrink = 1.0;  // applied to the step lengths after this iteration
    for (const auto* direction : {&adaptive, &plain}) {
      double t = 1.0;
      for (int halving = 0; halving <= kMaxHalvings && !accepted; ++halving) {
        Mesh trial = mesh;
        for (std::size_t i = 0; i < grad.size(); ++i) trial.vertices[i] += t * (*direction)[i];
        if (mesh_is_valid(trial)) {
          GridDepthLevels trial_levels = cfg.freeze_depth_levels ? levels : levels_of(trial);
          const double value = mesh_layer_objective(i_r, i_t, trial, trial_levels, params);
          if (value < current) {
            mesh = std::move(trial);
            levels = std::move(trial_levels);
            current = value;
            accepted = true;
            break;
          }
        }
        t *= 0.5;
      }
      if (accepted) {
        shrink = direction == &adaptive ? t : kStepShrink;
        break;
      }
    }
    if (!accepted) break;
    if (shrink < 1.0) {
      for (auto& d : steps) d = (d * shrink).cwiseMax(kMinStep);
    }
    prev_grad = grad;
    local.accepted.push_back(current);
    ++local.iterations;
  }
  if (trace) *trace = local;
  return mesh;
}

AlignmentResult align(const Image& i_r, const Image& i_t, const AlignConfig& cfg,
                      const std::optional<DepthMap>& depth) {
  cfg.validate();
  if (i_r.empty() || i_t.empty()) throw std::invalid_argument("align: empty input");
  if (i_r.channels() != i_t.channels()) {
    throw std::invalid_argument("align: reference and target channel counts differ");
  }
  const int res = cfg.working_resolution;
  AlignmentResult result;
  const ObjectiveParams params = cfg.objective_params();

  auto t0 = Clock::now();
  const Image ref = (i_r.height() == res && i_r.width() == res) ? i_r
                                                                 : resize_bilinear(i_r, res, res);
  const Image tgt = (i_t.height() == res && i_t.width() == res) ? i_t
                                                                 : resize_bilinear(i_t, res, res);
  DepthMap depth_w = constant_depth(res, res);
  if (depth) {
    if (depth->height() != i_t.height() || depth->width() != i_t.width()) {
      throw std::invalid_argument("align: depth map must match the target size");
    }
    depth_w.values = resize_bilinear(depth->values, res, res);
  }
  const auto feats_r = extract_features(ref, kFeatureScales);
  const auto feats_t = extract_features(tgt, kFeatureScales);
  result.timings.push_back({"features", seconds_since(t0)});

  // Each global layer: CCL flow -> fitted residual -> photometric polish.
  RefineTrace trace1, trace2;

  // Layer 1: coarsest pyramid layer, residual from identity.
  t0 = Clock::now();
  Homography h1_fit;
  {
    const FeatureMap fr = build_layer_features(feats_r, kFeatureScales);
    const FeatureMap ft = build_layer_features(feats_t, kFeatureScales);
    result.layer1_flow = ccl(fr, ft, cfg.patch, cfg.alpha);
    const auto valid = interior_cells(fr.height(), fr.width(), nullptr);
    h1_fit = flow_to_homography(result.layer1_flow, valid,
                                static_cast<double>(res) / fr.width(), cfg.robust_fit);
  }
  if (safe_content(ref, tgt, h1_fit) > safe_content(ref, tgt, Homography::identity())) {
    h1_fit = Homography::identity();
  }
  const Homography h1 = refine_global(ref, tgt, h1_fit, cfg, &trace1);
  result.layer1_residual = h1;
  result.timings.push_back({"layer1", seconds_since(t0)});

  // Layer 2: target features warped by the layer-1 prior; residual composed.
  t0 = Clock::now();
  Homography r2_fit;
  {
    const FeatureMap fr = build_layer_features(feats_r, kFeatureScales - 1);
    const FeatureMap ft = build_layer_features(feats_t, kFeatureScales - 1);
    const double cell = static_cast<double>(res) / fr.width();
    const Homography h_feat = scale_adapt(h1, 1.0 / cell);
    const FeatureMap ft_w = warp_features(ft, h_feat);
    const Image support =
        warp_global(Image(ft.height(), ft.width(), 1, 1.0), h_feat, fr.height(), fr.width());
    result.layer2_flow = ccl(fr, ft_w, cfg.patch, cfg.alpha);
    const auto valid = interior_cells(fr.height(), fr.width(), &support);
    r2_fit = flow_to_homography(result.layer2_flow, valid, cell, cfg.robust_fit);
  }
  Homography h12 = h1 * r2_fit;
  // Keep the composite only if it does not worsen the photometric fit.
  if (safe_content(ref, tgt, h12) > safe_content(ref, tgt, h1)) h12 = h1;
  const Homography h_polished = refine_global(ref, tgt, h12, cfg, &trace2);
  result.layer2_residual = h1.inverse() * h_polished;
  result.working_h = h_polished;
  result.global_trace = trace1.accepted;
  auto from = trace2.accepted.begin();
  if (from != trace2.accepted.end() && *from >= result.global_trace.back()) ++from;
  result.global_trace.insert(result.global_trace.end(), from, trace2.accepted.end());
  result.global_iterations = trace1.iterations + trace2.iterations;
  result.timings.push_back({"layer2", seconds_since(t0)});

  const GridDepthLevels flat =
      make_levels(cfg.grid_rows, cfg.grid_cols, 1,
                  std::vector<int>(static_cast<std::size_t>(cfg.grid_rows) * cfg.grid_cols, 0));
  result.history.push_back(objective(ref, tgt, {h1, h1, h1}, flat, params));
  result.history.push_back(objective(ref, tgt, {h1, h_polished, h_polished}, flat, params));

  // Layer 3: multi-grid refinement from the global estimate.
  t0 = Clock::now();
  Mesh mesh0 = mesh_from_homography(h_polished, cfg.grid_rows, cfg.grid_cols, res, res);
  if (!mesh_is_valid(mesh0)) mesh0 = regular_mesh(cfg.grid_rows, cfg.grid_cols, res, res);
  RefineTrace mesh_trace;
  result.working_mesh = refine_mesh(ref, tgt, mesh0, depth_w, cfg, &mesh_trace);
  result.mesh_trace = mesh_trace.accepted;
  result.mesh_iterations = mesh_trace.iterations;
  result.history.push_back(
      objective(ref, tgt, {h1, h_polished, result.working_mesh}, depth_w, params));
  result.timings.push_back({"refine_mesh", seconds_since(t0)});

  const Image mask = warp_mask(result.working_mesh, res, res);
  const double support =
      std::accumulate(mask.data().begin(), mask.data().end(), 0.0) / mask.data().size();
  if (support < kMinOverlapFraction) {
    throw NoOverlapError("align: warped target covers less than 1% of the reference canvas");
  }

  const double sx_r = static_cast<double>(i_r.width()) / res;
  const double sy_r = static_cast<double>(i_r.height()) / res;
  const double sx_t = static_cast<double>(i_t.width()) / res;
  const double sy_t = static_cast<double>(i_t.height()) / res;
  result.global_h =
      Homography::scaling(sx_t, sy_t) * h_polished * Homography::scaling(1 / sx_r, 1 / sy_r);
  result.mesh = scale_mesh(result.working_mesh, sx_t, sy_t, i_r.height(), i_r.width());
  result.mesh_valid = mesh_is_valid(result.mesh);
  return result;
}

std::string format_alignment_report(const AlignmentResult& r, const AlignConfig& cfg) {
  std::ostringstream out;
  out.precision(8);
  out << "[config]\n"
      << "grid = " << cfg.grid_rows << "x" << cfg.grid_cols << "\n"
      << "k = " << cfg.patch << "\n"
      << "alpha = " << cfg.alpha << "\n"
      << "levels = " << cfg.depth_levels << "\n"
      << "lambda = " << cfg.lambda << "\n"
      << "mu = " << cfg.mu << "\n"
      << "omega = " << cfg.omega[0] << "," << cfg.omega[1] << "," << cfg.omega[2] << "\n"
      << "iters = " << cfg.refine_iters << "\n"
      << "step = " << cfg.step_size << "\n"
      << "resolution = " << cfg.working_resolution << "\n"
      << "robust = " << (cfg.robust_fit ? "true" : "false") << "\n"
      << "freeze_levels = " << (cfg.freeze_depth_levels ? "true" : "false") << "\n";
  out << "[result]\n"
      << "global_h = " << serialize_homography(r.global_h) << "\n"
      << "mesh_valid = " << (r.mesh_valid ? "true" : "false") << "\n"
      << "global_iterations = " << r.global_iterations << "\n"
      << "mesh_iterations = " << r.mesh_iterations << "\n";
  const char* names[] = {"layer1", "layer2", "layer3"};
  for (std::size_t i = 0; i < r.history.size() && i < 3; ++i) {
    const LossBreakdown& b = r.history[i];
    out << "[loss." << names[i] << "]\n"
        << "content = " << b.content_per_layer[0] << "," << b.content_per_layer[1] << ","
        << b.content_per_layer[2] << "\n"
        << "content_total = " << b.content_total << "\n"
        << "shape = " << b.shape << "\n"
        << "objective = " << b.objective_total << "\n";
  }
  out << "[timing]\n";
  for (const auto& t : r.timings) out << t.stage << " = " << t.seconds << "\n";
  return out.str();
}

}  // namespace meshalign
