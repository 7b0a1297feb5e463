#pragma once

#include <cstdint>

namespace layoutdiff {

// Soft pairwise 3D overlap penalty over oriented boxes.
//
// Each row of geom is (tx, ty, tz, sx, sy, sz, cos, sin): centre, half-size
// and yaw about the vertical axis. Boxes are reduced to their world-frame
// AABBs (extents |c|*sx + |s|*sz etc.), half-sizes are clamped at zero, and
// the per-axis overlap uses softplus with the given sharpness so the loss
// stays differentiable across the contact boundary. The result is the mean
// over unordered pairs of soft IoU; fewer than two boxes yields 0.
//
// If grad is non-null it must hold n*8 doubles and is accumulated (+=).
double pairwise_iou_loss(const double* geom, int n, const uint8_t* active, double sharpness,
                         double* grad);

// Hard axis-aligned volumetric IoU of the two boxes' world AABBs. Used by the
// plausibility diagnostics and by the corpus generator's placement checks.
double hard_aabb_iou(const double* box_a, const double* box_b);

}  // namespace layoutdiff
