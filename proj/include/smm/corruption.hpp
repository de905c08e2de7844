#pragma once

#include <variant>

#include "smm/schedule.hpp"
#include "smm/tensor.hpp"

namespace smm {

struct ZeroMean {
    bool operator==(const ZeroMean&) const = default;
};

// sqrt(alpha_bar_t) * x + sigma_t * eps
struct NonZeroMean {
    bool operator==(const NonZeroMean&) const = default;
};

// x + sigma_t * c * eps, with c a per-pixel corruption degree that starts as
// a single hot pixel at the image centre and spreads by explicit 4-neighbour
// diffusion, `steps_per_t` updates per diffusion step.
struct SpatialDiffusion {
    double ratio = 0.1;
    int steps_per_t = 1;
    bool operator==(const SpatialDiffusion&) const = default;
};

using CorruptionKind = std::variant<ZeroMean, NonZeroMean, SpatialDiffusion>;

// Per-pixel corruption degrees in [0,1].
struct CorruptionField {
    Matrix grid;

    Index height() const { return grid.rows(); }
    Index width() const { return grid.cols(); }
};

CorruptionField init_center_field(Index height, Index width);

// c' = c + ratio * sum over existing 4-neighbours of (c_nb - c). Edges have
// fewer neighbours (no flux through the border), so total mass is conserved.
CorruptionField spatial_field_step(const CorruptionField& field, double ratio);

// Field used at diffusion step t: centre init evolved t * steps_per_t times.
CorruptionField field_at_step(Index height, Index width, int t, const SpatialDiffusion& kind);

// Multiplier applied to x.
Scalar signal_scale(int t, const NoiseSchedule& schedule, const CorruptionKind& kind);

// The additive noise part (eps * sigma_t, or eps * sigma_t * c). Not tracked.
Tensor noise_term(const Tensor& eps, int t, const NoiseSchedule& schedule, const CorruptionKind& kind);

// Corrupted sample; differentiable w.r.t. x.
Tensor corrupt(const Tensor& x, const Tensor& eps, int t, const NoiseSchedule& schedule, const CorruptionKind& kind);

}  // namespace smm
