#include "smm/trainer.hpp"

#include <chrono>

#include "smm/checkpoint.hpp"
#include "smm/metrics.hpp"
#include "smm/metrics_log.hpp"

namespace smm {

namespace {

constexpr int kEvalProjections = 64;

Shape batch_shape(Index n, const Shape& sample_shape) {
    Shape s{n};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    return s;
}

void update(ParamSet& params, AdamState& adam, const Tensor& loss) {
    params.zero_grad();
    backward(loss);
    adam_step(params.tensors(), adam);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

StepDraws draw_step(RngStreams& rng, int steps, Index batch_size, const Shape& sample_shape, Index latent_dim) {
    StepDraws d;
    // Modulo bias is below 1e-17 for any realistic T.
    d.t = 1 + static_cast<int>(rng.stream("t")() % static_cast<std::uint64_t>(steps));
    d.z1 = randn(rng.stream("z1"), Shape{batch_size, latent_dim});
    d.z2 = randn(rng.stream("z2"), Shape{batch_size, latent_dim});
    const Shape shape = batch_shape(batch_size, sample_shape);
    d.eps1 = randn(rng.stream("eps1"), shape);
    d.eps2 = randn(rng.stream("eps2"), shape);
    d.eps3 = randn(rng.stream("eps3"), shape);
    d.eps4 = randn(rng.stream("eps4"), shape);
    d.eps5 = randn(rng.stream("eps5"), shape);
    return d;
}

ScoreArch score_arch_for(const TrainingConfig& config, const Shape& sample_shape) {
    ScoreArch arch;
    arch.paired = config.variant != VariantKind::Original;
    if (sample_shape.size() == 1) {
        arch.body = MlpScoreArch{static_cast<int>(sample_shape[0]), {config.model.hidden, config.model.hidden},
                                 config.model.activation};
    } else if (sample_shape.size() == 3) {
        ConvScoreArch conv;
        conv.channels = static_cast<int>(sample_shape[0]);
        conv.height = static_cast<int>(sample_shape[1]);
        conv.width = static_cast<int>(sample_shape[2]);
        conv.activation = config.model.activation;
        arch.body = conv;
    } else {
        throw ShapeError("score_arch_for", "unsupported sample shape " + to_string(sample_shape));
    }
    return arch;
}

GeneratorArch generator_arch_for(const TrainingConfig& config, const Shape& sample_shape) {
    if (sample_shape.size() == 1) {
        return MlpGeneratorArch{config.model.latent_dim ? config.model.latent_dim : 64,
                                {config.model.hidden, config.model.hidden},
                                static_cast<int>(sample_shape[0]),
                                config.model.activation};
    }
    if (sample_shape.size() == 3) {
        ConvGeneratorArch conv;
        conv.latent_dim = config.model.latent_dim ? config.model.latent_dim : 128;
        conv.channels = static_cast<int>(sample_shape[0]);
        conv.height = static_cast<int>(sample_shape[1]);
        conv.width = static_cast<int>(sample_shape[2]);
        conv.activation = config.model.activation;
        return conv;
    }
    throw ShapeError("generator_arch_for", "unsupported sample shape " + to_string(sample_shape));
}

TrainerState init_trainer(const TrainingConfig& config, const Shape& sample_shape) {
    validate(config);
    ScoreNet score(score_arch_for(config, sample_shape), stream_seed(config.seed, "score-init"));
    GeneratorNet generator(generator_arch_for(config, sample_shape), stream_seed(config.seed, "generator-init"));
    AdamOptions adam;
    adam.learning_rate = static_cast<Scalar>(config.learning_rate);
    AdamState score_adam = make_adam_state(score.params().tensors(), adam);
    AdamState generator_adam = make_adam_state(generator.params().tensors(), adam);
    return TrainerState{config,
                        build_schedule(config.steps, config.beta_min, config.beta_max),
                        std::move(score),
                        std::move(generator),
                        std::move(score_adam),
                        std::move(generator_adam),
                        RngStreams(config.seed),
                        0};
}

bool same_state(const TrainerState& a, const TrainerState& b) {
    return a.config == b.config && a.score.arch() == b.score.arch() && a.generator.arch() == b.generator.arch() &&
           a.score.params().same_values(b.score.params()) &&
           a.generator.params().same_values(b.generator.params()) && a.score_adam == b.score_adam &&
           a.generator_adam == b.generator_adam && a.rng == b.rng && a.iteration == b.iteration;
}

LossRecord train_step(TrainerState& state, const Tensor& batch) {
    const auto start = std::chrono::steady_clock::now();
    const TrainingConfig& cfg = state.config;
    const Index n = batch.dim(0);
    const StepDraws d = draw_step(state.rng, cfg.steps, n, state.score.sample_shape(), state.generator.latent_dim());
    const LossContext ctx{state.schedule, cfg.corruption, cfg.variant, d.t};
    const std::int64_t iteration = state.iteration + 1;

    LossRecord rec;
    rec.iteration = iteration;
    try {
        if (cfg.sum_score_losses) {
            const Tensor real = score_real_term(state.score, batch, d.eps1, ctx);
            const Tensor fake = score_fake_term(state.score, state.generator, d.z1, d.eps2, d.eps3, ctx,
                                                cfg.mismatch_target_uses_corruption_noise);
            rec.loss_match = real.item();
            rec.loss_mismatch = fake.item();
            update(state.score.params(), state.score_adam, real + fake);
        } else {
            const Tensor real = score_real_term(state.score, batch, d.eps1, ctx);
            rec.loss_match = real.item();
            update(state.score.params(), state.score_adam, real);
            const Tensor fake = score_fake_term(state.score, state.generator, d.z1, d.eps2, d.eps3, ctx,
                                                cfg.mismatch_target_uses_corruption_noise);
            rec.loss_mismatch = fake.item();
            update(state.score.params(), state.score_adam, fake);
        }
        const Tensor gen = generator_term(state.score, state.generator, d.z2, d.eps4,
                                          cfg.duplicate_fake ? std::optional<Tensor>(d.eps5) : std::nullopt, ctx);
        rec.loss_generator = gen.item();
        update(state.generator.params(), state.generator_adam, gen);
    } catch (const NumericError& e) {
        throw NumericError("train_step", "iteration " + std::to_string(iteration) + ": " + e.what());
    }
    state.iteration = iteration;
    if (cfg.record_wall_time) rec.wall_time_s = seconds_since(start);
    return rec;
}

Tensor next_batch(TrainerState& state, const Dataset& data) {
    Tensor batch = data.batch(state.iteration, state.config.batch_size);
    if (!state.config.hflip) return batch;
    Engine& engine = state.rng.stream("hflip");
    std::vector<bool> mask(static_cast<std::size_t>(batch.dim(0)));
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (engine() >> 63) != 0;
    return hflip(batch, mask);
}

EvalResult evaluate_generator(const GeneratorNet& generator, const DatasetSpec& dataset, Index n, std::uint64_t seed) {
    const Tensor fake = sample_one_step(generator, n, stream_seed(seed, "eval-generate"));
    const Tensor real = heldout_samples(dataset, n, stream_seed(seed, "eval-real"));
    const MmdResult mmd = mmd_rbf(fake, real);
    return {mmd.value, mmd.bandwidth, sliced_wasserstein(fake, real, kEvalProjections, seed)};
}

TrainResult train_loop(const TrainingConfig& config, const TrainOptions& options) {
    validate(config);
    const Dataset data = make_dataset(config.dataset, config.seed);
    TrainResult result{options.resume ? *options.resume : init_trainer(config, data.sample_shape()), {}, {}};
    TrainerState& state = result.state;
    const std::int64_t stop = options.stop_at.value_or(config.iterations);
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t eval_seed = stream_seed(config.seed, "eval");

    while (state.iteration < stop) {
        const Tensor batch = next_batch(state, data);
        const LossRecord rec = train_step(state, batch);
        result.losses.push_back(rec);
        if (options.on_step) options.on_step(rec);

        if (state.iteration % config.log_every == 0 || state.iteration == config.iterations) {
            MetricsRow row{rec.iteration, rec.loss_match, rec.loss_mismatch, rec.loss_generator, 0, 0, 0,
                           config.seed};
            if (options.evaluate) {
                const EvalResult ev = evaluate_generator(state.generator, config.dataset, config.eval_samples,
                                                         eval_seed);
                row.mmd = ev.mmd;
                row.sliced_wasserstein = ev.sliced_wasserstein;
            }
            if (config.record_wall_time) row.wall_time_s = seconds_since(start);
            result.metrics.push_back(row);
            if (!config.metrics_path.empty()) append_metrics(config.metrics_path, {row});
        }
        if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 &&
            !config.checkpoint_path.empty()) {
            save_checkpoint(state, config.checkpoint_path);
        }
    }
    if (!config.checkpoint_path.empty()) save_checkpoint(state, config.checkpoint_path);
    return result;
}

Tensor sample_one_step(const GeneratorNet& generator, Index n, std::uint64_t seed) {
    if (n < 0) throw ConfigError("sample", "sample count must be >= 0");
    if (n == 0) return {};
    Engine engine(stream_seed(seed, "sample"));
    const Tensor z = randn(engine, Shape{n, generator.latent_dim()});
    NoGradGuard no_grad;
    return generator.generate(z, ParamMode::Frozen);
}

Tensor sample_one_step(const TrainerState& state, Index n, std::uint64_t seed) {
    return sample_one_step(state.generator, n, seed);
}

}  // namespace smm
