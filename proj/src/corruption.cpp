#include "smm/corruption.hpp"

#include <cmath>
#include <string>

namespace smm {

namespace {

void check_ratio(double ratio) {
    if (!(ratio > 0.0) || ratio > 0.25) {
        throw ConfigError("spatial_diffusion", "ratio must lie in (0, 0.25], got " + std::to_string(ratio));
    }
}

}  // namespace

CorruptionField init_center_field(Index height, Index width) {
    if (height < 1 || width < 1) throw ShapeError("init_center_field", "grid extents must be >= 1");
    CorruptionField f{Matrix::Zero(height, width)};
    f.grid(height / 2, width / 2) = 1;
    return f;
}

CorruptionField spatial_field_step(const CorruptionField& field, double ratio) {
    check_ratio(ratio);
    const Index h = field.height();
    const Index w = field.width();
    const Matrix& c = field.grid;
    const auto r = static_cast<Scalar>(ratio);
    CorruptionField next{c};
    for (Index i = 0; i < h; ++i) {
        for (Index j = 0; j < w; ++j) {
            Scalar flux = 0;
            if (i > 0) flux += c(i - 1, j) - c(i, j);
            if (i + 1 < h) flux += c(i + 1, j) - c(i, j);
            if (j > 0) flux += c(i, j - 1) - c(i, j);
            if (j + 1 < w) flux += c(i, j + 1) - c(i, j);
            next.grid(i, j) = c(i, j) + flux * r;
        }
    }
    return next;
}

CorruptionField field_at_step(Index height, Index width, int t, const SpatialDiffusion& kind) {
    check_ratio(kind.ratio);
    if (kind.steps_per_t < 1) throw ConfigError("spatial_diffusion", "steps_per_t must be >= 1");
    CorruptionField f = init_center_field(height, width);
    for (int k = 0; k < t * kind.steps_per_t; ++k) f = spatial_field_step(f, kind.ratio);
    return f;
}

Scalar signal_scale(int t, const NoiseSchedule& schedule, const CorruptionKind& kind) {
    if (std::holds_alternative<NonZeroMean>(kind)) return static_cast<Scalar>(std::sqrt(schedule.alpha_bar(t)));
    schedule.index(t);
    return Scalar(1);
}

Tensor noise_term(const Tensor& eps, int t, const NoiseSchedule& schedule, const CorruptionKind& kind) {
    const auto sigma = static_cast<Scalar>(schedule.sigma(t));
    NoGradGuard guard;
    if (const auto* spatial = std::get_if<SpatialDiffusion>(&kind)) {
        if (eps.rank() != 4) {
            throw ShapeError("corrupt", "spatial diffusion needs [N,C,H,W] samples, got " + to_string(eps.shape()));
        }
        const CorruptionField f = field_at_step(eps.dim(2), eps.dim(3), t, *spatial);
        Vector c = Eigen::Map<const Vector>(f.grid.data(), f.grid.size());
        const Tensor field = Tensor::from(Shape{1, 1, eps.dim(2), eps.dim(3)}, c * sigma);
        return mul(eps.detach(), field);
    }
    return scale(eps.detach(), sigma);
}

Tensor corrupt(const Tensor& x, const Tensor& eps, int t, const NoiseSchedule& schedule, const CorruptionKind& kind) {
    if (x.shape() != eps.shape()) {
        throw ShapeError("corrupt", "sample " + to_string(x.shape()) + " and noise " + to_string(eps.shape()) +
                                        " differ");
    }
    const Tensor noise = noise_term(eps, t, schedule, kind);
    const Scalar a = signal_scale(t, schedule, kind);
    return add(a == Scalar(1) ? x : scale(x, a), noise);
}

}  // namespace smm
