#pragma once

#include "smm/losses.hpp"
#include "smm/networks.hpp"

namespace smm::test {

// Tiny tanh nets: smooth everywhere, so finite differences have no kinks.
inline ScoreArch toy_score_arch(Index dim, bool paired = false) {
    ScoreArch a;
    a.body = MlpScoreArch{static_cast<int>(dim), {3, 3}, Activation::Tanh};
    a.paired = paired;
    a.time_dim = 4;
    return a;
}

inline GeneratorArch toy_generator_arch(Index dim, int latent = 3) {
    return MlpGeneratorArch{latent, {3}, static_cast<int>(dim), Activation::Tanh};
}

// S(x) = x * 0: output zero, but still on the tape.
struct ZeroScore final : ScoreModel {
    Tensor predict(const Tensor& x, int, ParamMode) const override { return x * Scalar(0); }
    Tensor predict_paired(const Tensor& a, const Tensor& b, int, ParamMode) const override {
        return a * Scalar(0) + b * Scalar(0);
    }
};

// Returns a fixed tensor, whatever the input.
struct FixedScore final : ScoreModel {
    Tensor value;
    Tensor predict(const Tensor& x, int, ParamMode) const override { return x * Scalar(0) + value; }
    Tensor predict_paired(const Tensor& a, const Tensor&, int, ParamMode) const override {
        return a * Scalar(0) + value;
    }
};

// Exact denoiser for a point mass at `centre`: (x - centre) / sigma_t.
struct PointDenoiser final : ScoreModel {
    Tensor centre;
    const NoiseSchedule* schedule = nullptr;
    Tensor predict(const Tensor& x, int t, ParamMode) const override {
        return (x - centre) * static_cast<Scalar>(1.0 / schedule->sigma(t));
    }
    Tensor predict_paired(const Tensor&, const Tensor&, int, ParamMode) const override {
        throw ConfigError("PointDenoiser", "not paired");
    }
};

}  // namespace smm::test
