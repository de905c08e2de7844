#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "smm/adam.hpp"
#include "smm/config.hpp"
#include "smm/datasets.hpp"
#include "smm/losses.hpp"
#include "smm/networks.hpp"
#include "smm/rng.hpp"
#include "smm/schedule.hpp"

namespace smm {

struct LossRecord {
    std::int64_t iteration = 0;
    double loss_match = 0;
    double loss_mismatch = 0;
    double loss_generator = 0;
    double wall_time_s = 0;
    bool operator==(const LossRecord&) const = default;
};

// All random inputs of one training step.
struct StepDraws {
    int t = 1;
    Tensor z1, z2;
    Tensor eps1, eps2, eps3, eps4, eps5;
};

// Draws t, then z1, z2, eps1..eps5, each from its own stream.
StepDraws draw_step(RngStreams& rng, int steps, Index batch_size, const Shape& sample_shape, Index latent_dim);

// Network descriptors implied by a config and the data's sample shape.
ScoreArch score_arch_for(const TrainingConfig& config, const Shape& sample_shape);
GeneratorArch generator_arch_for(const TrainingConfig& config, const Shape& sample_shape);

struct TrainerState {
    TrainingConfig config;
    NoiseSchedule schedule;
    ScoreNet score;
    GeneratorNet generator;
    AdamState score_adam;
    AdamState generator_adam;
    RngStreams rng;
    std::int64_t iteration = 0;  // completed steps
};

TrainerState init_trainer(const TrainingConfig& config, const Shape& sample_shape);

// Bitwise comparison of everything a checkpoint stores.
bool same_state(const TrainerState& a, const TrainerState& b);

// One step of the training algorithm on `batch`: score update on the real
// term, score update on the fake term, generator update. Throws
// NumericError naming the iteration if any loss is not finite.
LossRecord train_step(TrainerState& state, const Tensor& batch);

// Training batch for the next step, including flip augmentation.
Tensor next_batch(TrainerState& state, const Dataset& data);

struct MetricsRow {
    std::int64_t iteration = 0;
    double loss_match = 0;
    double loss_mismatch = 0;
    double loss_generator = 0;
    double mmd = 0;
    double sliced_wasserstein = 0;
    double wall_time_s = 0;
    std::uint64_t seed = 0;
    bool operator==(const MetricsRow&) const = default;
};

struct TrainResult {
    TrainerState state;
    std::vector<LossRecord> losses;
    std::vector<MetricsRow> metrics;
};

struct TrainOptions {
    // Continue from this state instead of a fresh init.
    std::optional<TrainerState> resume;
    // Stop after this many total iterations (defaults to config.iterations).
    std::optional<std::int64_t> stop_at;
    // Skip MMD / sliced-Wasserstein evaluation at log points.
    bool evaluate = true;
    std::function<void(const LossRecord&)> on_step;
};

// Runs the configured number of steps, logging every `log_every` steps
// (and at the end), appending to config.metrics_path and writing
// config.checkpoint_path when set.
TrainResult train_loop(const TrainingConfig& config, const TrainOptions& options = {});

// Generated-vs-held-out metrics for the current generator.
struct EvalResult {
    double mmd = 0;
    double mmd_bandwidth = 0;
    double sliced_wasserstein = 0;
};
EvalResult evaluate_generator(const GeneratorNet& generator, const DatasetSpec& dataset, Index n, std::uint64_t seed);

// n samples from a single generator forward pass. n = 0 gives an empty,
// undefined tensor.
Tensor sample_one_step(const GeneratorNet& generator, Index n, std::uint64_t seed);
Tensor sample_one_step(const TrainerState& state, Index n, std::uint64_t seed);

}  // namespace smm
