#include "smm/losses.hpp"

#include <cmath>

namespace smm {

namespace {

void check_finite(const char* op, const Tensor& loss) {
    if (!std::isfinite(loss.item())) throw NumericError(op, "loss is not finite");
}

// Prediction and regression target for one corrupted batch.
struct Term {
    Tensor prediction;
    Tensor target;
};

// `sample` may carry gradient (generator term) or not. `target_noise` is the
// eps the original/paired variants regress onto.
Term make_term(const ScoreModel& score, const Tensor& sample, const Tensor& eps, const Tensor& target_noise,
               const LossContext& ctx, ParamMode score_mode) {
    const Tensor noisy = corrupt(sample, eps, ctx.t, ctx.schedule, ctx.corruption);
    switch (ctx.variant) {
        case VariantKind::Original:
            return {score.predict(noisy, ctx.t, score_mode), target_noise};
        case VariantKind::NoisyTarget: {
            const Tensor target = corrupt(sample, target_noise, ctx.t, ctx.schedule, ctx.corruption);
            const Tensor noise = noise_term(eps, ctx.t, ctx.schedule, ctx.corruption);
            return {score.predict_paired(sample, noise, ctx.t, score_mode), target};
        }
        case VariantKind::PairedInput:
            return {score.predict_paired(sample, noisy, ctx.t, score_mode), target_noise};
    }
    throw ConfigError("loss", "unknown variant");
}

}  // namespace

Tensor batch_mean_squared_error(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        throw ShapeError("loss", "prediction " + to_string(prediction.shape()) + " vs target " +
                                     to_string(target.shape()));
    }
    const Index n = prediction.rank() ? prediction.dim(0) : 1;
    return squared_norm(prediction - target) * (Scalar(1) / static_cast<Scalar>(n));
}

Tensor score_real_term(const ScoreModel& score, const Tensor& x, const Tensor& eps1, const LossContext& ctx) {
    const Term term = make_term(score, x.detach(), eps1, eps1, ctx, ParamMode::Trainable);
    Tensor loss = batch_mean_squared_error(term.prediction, term.target);
    check_finite("loss_match_true", loss);
    return loss;
}

Tensor score_fake_term(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z1, const Tensor& eps2,
                       const Tensor& eps3, const LossContext& ctx, bool target_is_corruption_noise) {
    Tensor fake;
    {
        NoGradGuard no_grad;
        fake = generator.generate(z1, ParamMode::Frozen);
    }
    const Tensor& target = target_is_corruption_noise ? eps2 : eps3;
    const Term term = make_term(score, fake, eps2, target, ctx, ParamMode::Trainable);
    Tensor loss = batch_mean_squared_error(term.prediction, term.target);
    check_finite("loss_mismatch_fake", loss);
    return loss;
}

Tensor generator_term(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z2, const Tensor& eps4,
                      const std::optional<Tensor>& eps5, const LossContext& ctx) {
    const Tensor fake = generator.generate(z2, ParamMode::Trainable);
    const Term term = make_term(score, fake, eps4, eps4, ctx, ParamMode::Frozen);
    Tensor loss = batch_mean_squared_error(term.prediction, term.target);
    if (eps5) {
        const Term dup = make_term(score, fake, *eps5, *eps5, ctx, ParamMode::Frozen);
        loss = loss + batch_mean_squared_error(dup.prediction, dup.target);
    }
    check_finite("loss_generator", loss);
    return loss;
}

Tensor loss_match_true(const ScoreModel& score, const Tensor& x, const Tensor& eps1, int t,
                       const NoiseSchedule& schedule, const CorruptionKind& corruption) {
    return score_real_term(score, x, eps1, LossContext{schedule, corruption, VariantKind::Original, t});
}

Tensor loss_mismatch_fake(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z1,
                          const Tensor& eps2, const Tensor& eps3, int t, const NoiseSchedule& schedule,
                          const CorruptionKind& corruption) {
    return score_fake_term(score, generator, z1, eps2, eps3,
                           LossContext{schedule, corruption, VariantKind::Original, t});
}

Tensor loss_generator(const ScoreModel& score, const GeneratorModel& generator, const Tensor& z2, const Tensor& eps4,
                      int t, const NoiseSchedule& schedule, bool duplicate_fake, const std::optional<Tensor>& eps5,
                      const CorruptionKind& corruption) {
    if (duplicate_fake && !eps5) throw ConfigError("loss_generator", "duplicate_fake needs eps5");
    return generator_term(score, generator, z2, eps4, duplicate_fake ? eps5 : std::nullopt,
                          LossContext{schedule, corruption, VariantKind::Original, t});
}

namespace {

VariantLosses variant_losses(VariantKind variant, const ScoreModel& score, const GeneratorModel& generator,
                             const Tensor& x, const Tensor& z1, const Tensor& z2, const Tensor& eps1,
                             const Tensor& eps2, const Tensor& eps3, const Tensor& eps4, int t,
                             const NoiseSchedule& schedule) {
    const LossContext ctx{schedule, ZeroMean{}, variant, t};
    return {score_real_term(score, x, eps1, ctx) + score_fake_term(score, generator, z1, eps2, eps3, ctx),
            generator_term(score, generator, z2, eps4, std::nullopt, ctx)};
}

}  // namespace

VariantLosses variant2_losses(const ScoreModel& score, const GeneratorModel& generator, const Tensor& x,
                              const Tensor& z1, const Tensor& z2, const Tensor& eps1, const Tensor& eps2,
                              const Tensor& eps3, const Tensor& eps4, int t, const NoiseSchedule& schedule) {
    return variant_losses(VariantKind::NoisyTarget, score, generator, x, z1, z2, eps1, eps2, eps3, eps4, t, schedule);
}

VariantLosses variant3_losses(const ScoreModel& score, const GeneratorModel& generator, const Tensor& x,
                              const Tensor& z1, const Tensor& z2, const Tensor& eps1, const Tensor& eps2,
                              const Tensor& eps3, const Tensor& eps4, int t, const NoiseSchedule& schedule) {
    return variant_losses(VariantKind::PairedInput, score, generator, x, z1, z2, eps1, eps2, eps3, eps4, t, schedule);
}

}  // namespace smm
