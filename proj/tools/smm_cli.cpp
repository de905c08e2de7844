// smm: train / sample / eval entry points.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "smm/checkpoint.hpp"
#include "smm/metrics.hpp"
#include "smm/metrics_log.hpp"
#include "smm/pgm.hpp"

namespace fs = std::filesystem;
using namespace smm;

namespace {

fs::path default_output_dir() {
    const char* env = std::getenv("SMM_OUTPUT_DIR");
    return env && *env ? fs::path(env) : fs::path("runs");
}

void apply_override(TrainingConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set", "expected key=value, got '" + assignment + "'");
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
    };
    set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void write_samples(const Tensor& samples, Index n, const fs::path& out) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    if (n == 0) {
        std::ofstream(out, std::ios::trunc);
        return;
    }
    if (samples.rank() == 4) {
        write_pgm(make_grid(samples), out);
        return;
    }
    std::ofstream os(out, std::ios::trunc);
    const Matrix rows = as_rows(samples);
    for (Index i = 0; i < rows.rows(); ++i) {
        for (Index k = 0; k < rows.cols(); ++k) {
            os << (k ? "," : "") << format_double(static_cast<double>(rows(i, k)));
        }
        os << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score-mismatching one-step generator: train, sample, eval"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Train from a config file");
    std::string config_path, resume_path, out_dir;
    std::optional<std::int64_t> iterations;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    train->add_option("--config", config_path, "Config file (key = value lines)")->required();
    train->add_option("--iterations", iterations, "Override iterations");
    train->add_option("--seed", seed, "Override seed");
    train->add_option("--out", out_dir, "Output directory (default $SMM_OUTPUT_DIR or ./runs)");
    train->add_option("--set", overrides, "Override any config key: --set key=value");
    train->add_option("--resume", resume_path, "Continue from a checkpoint");

    auto* sample = app.add_subcommand("sample", "Draw samples with one generator pass");
    std::string ckpt_path, sample_out;
    Index n = 16;
    std::uint64_t sample_seed = 0;
    sample->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    sample->add_option("--n", n, "Number of samples")->check(CLI::NonNegativeNumber);
    sample->add_option("--seed", sample_seed, "Sampling seed");
    sample->add_option("--out", sample_out, "Output file (.csv for 2D, .pgm grid for images)");

    auto* eval = app.add_subcommand("eval", "MMD and sliced Wasserstein against held-out data");
    std::string eval_ckpt, eval_config;
    Index eval_n = 2048;
    std::uint64_t eval_seed = 0;
    std::vector<std::string> eval_overrides;
    bool against_self = false;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--n", eval_n, "Samples per side");
    eval->add_option("--seed", eval_seed, "Evaluation seed");
    eval->add_option("--config", eval_config, "Take the dataset spec from this config instead of the checkpoint");
    eval->add_option("--set", eval_overrides, "Override dataset keys: --set key=value");
    eval->add_flag("--against-self", against_self, "Use a second generated set as the reference");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            if (!fs::exists(config_path)) throw ConfigError("train", "config file not found: " + config_path);
            TrainingConfig config = parse_config(config_path);
            for (const auto& o : overrides) apply_override(config, o);
            if (iterations) config.iterations = *iterations;
            if (seed) config.seed = *seed;
            const fs::path dir = out_dir.empty() ? default_output_dir() : fs::path(out_dir);
            if (!out_dir.empty() || config.checkpoint_path.empty()) config.checkpoint_path = (dir / "checkpoint.smm").string();
            if (!out_dir.empty() || config.metrics_path.empty()) config.metrics_path = (dir / "metrics.csv").string();
            validate(config);

            TrainOptions options;
            if (!resume_path.empty()) {
                TrainerState state = load_checkpoint(resume_path);
                options.resume = std::move(state);
            } else {
                fs::remove(config.metrics_path);
            }
            const TrainResult result = train_loop(config, options);
            std::cout << "trained " << result.state.iteration << " iterations\n"
                      << "checkpoint " << config.checkpoint_path << "\nmetrics " << config.metrics_path << '\n';
            if (!result.metrics.empty()) {
                const auto& last = result.metrics.back();
                std::cout << "final mmd " << format_double(last.mmd) << " sliced_wasserstein "
                          << format_double(last.sliced_wasserstein) << '\n';
            }
        } else if (*sample) {
            const TrainerState state = load_checkpoint(ckpt_path);
            const fs::path out = sample_out.empty()
                                     ? default_output_dir() / (state.generator.sample_shape().size() == 3
                                                                   ? "samples.pgm"
                                                                   : "samples.csv")
                                     : fs::path(sample_out);
            forward_counters().reset();
            const Tensor samples = sample_one_step(state, n, sample_seed);
            write_samples(samples, n, out);
            std::cout << "wrote " << n << " samples to " << out.string() << " (generator passes "
                      << forward_counters().generator.load() << ", score passes " << forward_counters().score.load()
                      << ")\n";
        } else if (*eval) {
            if (eval_n < 2) throw ConfigError("eval", "--n must be >= 2 (metrics need two samples per side)");
            const TrainerState state = load_checkpoint(eval_ckpt);
            TrainingConfig config = eval_config.empty() ? state.config : parse_config(eval_config);
            for (const auto& o : eval_overrides) apply_override(config, o);
            const Tensor fake = sample_one_step(state, eval_n, stream_seed(eval_seed, "eval-generate"));
            const Tensor real = against_self ? sample_one_step(state, eval_n, stream_seed(eval_seed, "eval-self"))
                                             : heldout_samples(config.dataset, eval_n, stream_seed(eval_seed, "eval-real"));
            const MmdResult mmd = mmd_rbf(fake, real);
            const double sw = sliced_wasserstein(fake, real, 64, eval_seed);
            std::cout << "metric,value,n_generated,n_reference,bandwidth,seed\n"
                      << "mmd2_unbiased," << format_double(mmd.value) << ',' << eval_n << ',' << eval_n << ','
                      << format_double(mmd.bandwidth) << ',' << eval_seed << '\n'
                      << "sliced_wasserstein," << format_double(sw) << ',' << eval_n << ',' << eval_n << ",,"
                      << eval_seed << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
