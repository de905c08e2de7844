#pragma once

#include <optional>

#include "smm/config.hpp"
#include "smm/corruption.hpp"
#include "smm/networks.hpp"
#include "smm/schedule.hpp"

namespace smm {

// Everything a loss term needs besides the networks and the draws.
struct LossContext {
    const NoiseSchedule& schedule;
    CorruptionKind corruption = ZeroMean{};
    VariantKind variant = VariantKind::Original;
    int t = 1;
};

// Mean over the batch of the squared L2 norm of (prediction - target).
Tensor batch_mean_squared_error(const Tensor& prediction, const Tensor& target);

// Score update on real data. Original: ||S(x+eps1 s) - eps1||^2.
// Only S receives gradient.
Tensor score_real_term(const ScoreModel& score, const Tensor& x, const Tensor& eps1, const LossContext& ctx);

// Score update on fake data: G(z1) is a constant, the target is the
// independent eps3 (eps2 when `target_is_corruption_noise`, an ablation).
Tensor score_fake_term(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z1, const Tensor& eps2,
                       const Tensor& eps3, const LossContext& ctx, bool target_is_corruption_noise = false);

// Generator update: S's parameters are constants, gradient reaches G
// through S's input. With eps5 the fake batch is corrupted a second time.
Tensor generator_term(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z2, const Tensor& eps4,
                      const std::optional<Tensor>& eps5, const LossContext& ctx);

// Original-variant entry points.
Tensor loss_match_true(const ScoreModel& score, const Tensor& x, const Tensor& eps1, int t,
                       const NoiseSchedule& schedule, const CorruptionKind& corruption = ZeroMean{});
Tensor loss_mismatch_fake(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z1,
                          const Tensor& eps2, const Tensor& eps3, int t, const NoiseSchedule& schedule,
                          const CorruptionKind& corruption = ZeroMean{});
Tensor loss_generator(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z2, const Tensor& eps4,
                      int t, const NoiseSchedule& schedule, bool duplicate_fake = false,
                      const std::optional<Tensor>& eps5 = std::nullopt,
                      const CorruptionKind& corruption = ZeroMean{});

struct VariantLosses {
    Tensor score;      // real term + fake term
    Tensor generator;
};

// S(sample, eps s) predicts the noisy sample.
VariantLosses variant2_losses(const ScoreModel& score, const GeneratorModel& generator, const Tensor& x,
                              const Tensor& z1, const Tensor& z2, const Tensor& eps1, const Tensor& eps2,
                              const Tensor& eps3, const Tensor& eps4, int t, const NoiseSchedule& schedule);

// S(clean, noisy) predicts the noise.
VariantLosses variant3_losses(const ScoreModel& score, const GeneratorModel& generator, const Tensor& x,
                              const Tensor& z1, const Tensor& z2, const Tensor& eps1, const Tensor& eps2,
                              const Tensor& eps3, const Tensor& eps4, int t, const NoiseSchedule& schedule);

}  // namespace smm
