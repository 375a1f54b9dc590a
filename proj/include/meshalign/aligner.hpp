#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshalign/correlation.hpp"
#include "meshalign/homography.hpp"
#include "meshalign/image.hpp"
#include "meshalign/mesh_warp.hpp"
#include "meshalign/objective.hpp"

namespace meshalign {

struct AlignConfig {
  int grid_rows = 8;  ///< U
  int grid_cols = 8;  ///< V
  int patch = 3;      ///< K
  double alpha = 10.0;
  int depth_levels = 32;  ///< M
  double lambda = 1.0;
  double mu = 10.0;
  std::array<double, 3> omega{1.0, 4.0, 16.0};
  int refine_iters = 100;
  double step_size = 1.0;  ///< initial and maximum descent step, pixels
  int working_resolution = 128;
  bool robust_fit = true;
  /// Keep the depth levels computed on the initial mesh instead of
  /// recomputing them after every accepted step.
  bool freeze_depth_levels = false;

  ObjectiveParams objective_params() const;
  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

class NoOverlapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageTiming {
  std::string stage;
  double seconds = 0;
};

struct AlignmentResult {
  /// Composite of the two global layers, full resolution.
  Homography global_h;
  /// Final mesh on the full-resolution reference canvas.
  Mesh mesh;
  bool mesh_valid = false;

  /// Working-resolution quantities. Each global layer fits a residual to
  /// its CCL flow and polishes it photometrically; working_h =
  /// layer1_residual * layer2_residual.
  Homography layer1_residual;
  Homography layer2_residual;
  Homography working_h;
  Mesh working_mesh;
  FlowField layer1_flow;
  FlowField layer2_flow;

  /// Breakdown after layer 1, after layer 2 and after mesh refinement;
  /// each uses the warps available at that point.
  std::vector<LossBreakdown> history;
  /// Accepted objective values of the global polish (layer 1 then layer 2)
  /// and of the mesh descent.
  std::vector<double> global_trace;
  std::vector<double> mesh_trace;
  int global_iterations = 0;
  int mesh_iterations = 0;
  std::vector<StageTiming> timings;
};

/// Statistics of one descent run.
struct RefineTrace {
  std::vector<double> accepted;  ///< objective after each accepted step, [0] = start
  int iterations = 0;
};

/// Descent on the eight corner motions of h0 (over the canvas rectangle)
/// minimising the content loss. Returns h0 if no step decreases the loss.
Homography refine_global(const Image& i_r, const Image& i_t, const Homography& h0,
                         const AlignConfig& cfg, RefineTrace* trace = nullptr);

/// Descent on vertex positions minimising lambda * omega_3 * L_content^3 +
/// mu * L_shape with backtracking; steps that make a cell non-convex are
/// halved like any rejected step. Throws std::domain_error for an invalid
/// mesh0.
Mesh refine_mesh(const Image& i_r, const Image& i_t, const Mesh& mesh0,
                 const DepthMap& depth, const AlignConfig& cfg,
                 RefineTrace* trace = nullptr);

/// Three-layer coarse-to-fine alignment of i_t onto i_r's canvas.
AlignmentResult align(const Image& i_r, const Image& i_t, const AlignConfig& cfg,
                      const std::optional<DepthMap>& depth = std::nullopt);

/// Plain-text summary of a result and the configuration that produced it.
std::string format_alignment_report(const AlignmentResult& result, const AlignConfig& cfg);

}  // namespace meshalign
