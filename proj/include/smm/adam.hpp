#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smm/tensor.hpp"

namespace smm {

struct AdamOptions {
    Scalar learning_rate = Scalar(0.0025);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
    bool operator==(const AdamOptions&) const = default;
};

struct AdamState {
    AdamOptions options;
    std::int64_t step = 0;
    std::vector<Vector> first_moment;
    std::vector<Vector> second_moment;

    // Bitwise equality of options, step and moments.
    bool operator==(const AdamState& other) const;
};

// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<const Tensor> params, AdamOptions options = {});

// One bias-corrected Adam update of `params` in place. Throws on shape
// mismatch or a non-finite gradient (naming the parameter index).
void adam_step(std::span<Tensor> params, std::span<const Vector> grads, AdamState& state);

// Uses each parameter's accumulated grad; parameters without one count as zero.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace smm
