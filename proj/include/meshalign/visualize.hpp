#pragma once

#include "meshalign/correlation.hpp"
#include "meshalign/image.hpp"
#include "meshalign/mesh_warp.hpp"

namespace meshalign {

/// Colour-wheel flow rendering: hue encodes direction, saturation the
/// magnitude relative to the largest motion in the field.
Image render_flow(const FlowField& flow);

/// Red/blue fusion: the reference with its blue channel zeroed plus the
/// warped target with its red channel zeroed. Gray inputs are replicated.
Image fuse_red_blue(const Image& reference, const Image& warped_target);

/// Mesh edges and vertices drawn over a copy of `img` (vertex coordinates
/// are in img's frame).
Image draw_mesh(const Image& img, const Mesh& mesh);

}  // namespace meshalign
