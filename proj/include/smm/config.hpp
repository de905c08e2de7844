#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "smm/corruption.hpp"
#include "smm/datasets.hpp"
#include "smm/networks.hpp"

namespace smm {

enum class VariantKind {
    Original,
    NoisyTarget,  // variant 2: S(sample, noise) regresses the noisy sample
    PairedInput,  // variant 3: S(clean, noisy) regresses the noise
};

struct ModelConfig {
    int hidden = 128;
    // 0 picks the default: 64 for vector data, 128 for images.
    int latent_dim = 0;
    Activation activation = Activation::LeakyRelu;
    bool operator==(const ModelConfig&) const = default;
};

// Full description of one experiment. Defaults are the published settings:
// T = 10, beta 1e-4 -> 0.02, Adam lr 0.0025, batch 32.
struct TrainingConfig {
    VariantKind variant = VariantKind::Original;
    CorruptionKind corruption = ZeroMean{};
    int steps = kDefaultSteps;
    double beta_min = kDefaultBetaMin;
    double beta_max = kDefaultBetaMax;
    double learning_rate = 0.0025;
    int batch_size = 32;
    bool duplicate_fake = false;
    bool hflip = false;
    std::int64_t iterations = 20000;
    std::uint64_t seed = 0;
    DatasetSpec dataset;
    ModelConfig model;

    // One summed update for the two score losses instead of two.
    bool sum_score_losses = false;
    // Ablation: regress fake samples onto their own corruption noise (eps2)
    // instead of the independent eps3. Not exposed in config files.
    bool mismatch_target_uses_corruption_noise = false;

    std::string checkpoint_path;
    std::string metrics_path;
    std::int64_t log_every = 500;
    std::int64_t checkpoint_every = 0;
    Index eval_samples = 1024;
    bool record_wall_time = false;

    bool operator==(const TrainingConfig&) const = default;
};

// Flat `key = value` text, `#` comments. Throws ConfigError naming the key
// on unknown keys, malformed values and out-of-range values.
TrainingConfig parse_config_text(const std::string& text);
TrainingConfig parse_config(const std::filesystem::path& path);

// Applies one override on top of a config (same validation).
void set_config_value(TrainingConfig& config, const std::string& key, const std::string& value);

void validate(const TrainingConfig& config);

// Every key, in a fixed order; parse_config_text(to_config_text(c)) == c.
std::string to_config_text(const TrainingConfig& config);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace smm
