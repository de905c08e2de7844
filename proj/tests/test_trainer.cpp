#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "smm/checkpoint.hpp"
#include "smm/metrics_log.hpp"
#include "smm/trainer.hpp"
#include "toy_models.hpp"

using namespace smm;
namespace fs = std::filesystem;

namespace {

TrainingConfig small_config(std::uint64_t seed = 1) {
    TrainingConfig c;
    c.seed = seed;
    c.model.hidden = 32;
    c.dataset.size = 512;
    c.eval_samples = 64;
    c.log_every = 10;
    return c;
}

double param_norm(const ParamSet& p) {
    double s = 0;
    for (const auto& t : p.tensors()) s += static_cast<double>(t.data().squaredNorm());
    return std::sqrt(s);
}

double param_distance(const ParamSet& a, const ParamSet& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += static_cast<double>((a.at(i).data() - b.at(i).data()).squaredNorm());
    return std::sqrt(s);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("smm_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("one step moves both networks by a bounded amount") {
    TrainerState s = init_trainer(small_config(), Shape{2});
    const ParamSet score0 = s.score.params();
    const ParamSet gen0 = s.generator.params();
    const Dataset data = make_dataset(s.config.dataset, s.config.seed);
    const LossRecord r = train_step(s, next_batch(s, data));
    CHECK(std::isfinite(r.loss_match));
    CHECK(std::isfinite(r.loss_mismatch));
    CHECK(std::isfinite(r.loss_generator));
    const double ds = param_distance(score0, s.score.params());
    const double dg = param_distance(gen0, s.generator.params());
    CHECK(ds > 0);
    CHECK(dg > 0);
    // Adam moves each coordinate by at most ~lr per update (two score updates).
    const double lr = s.config.learning_rate;
    CHECK(ds <= 2 * lr * std::sqrt(static_cast<double>(score0.count())) * 1.01);
    CHECK(dg <= lr * std::sqrt(static_cast<double>(gen0.count())) * 1.01);
    CHECK(param_norm(s.score.params()) > 0);
    CHECK(s.iteration == 1);
}

TEST_CASE("1-D two-point data: the real-data loss goes down") {
    TrainingConfig c = small_config(4);
    const Dataset data(Tensor::from(Shape{2, 1}, {-0.5, 0.5}), 4);
    TrainerState s = init_trainer(c, Shape{1});
    std::vector<double> match;
    for (int i = 0; i < 400; ++i) {
        const LossRecord r = train_step(s, next_batch(s, data));
        REQUIRE(std::isfinite(r.loss_generator));
        match.push_back(r.loss_match);
    }
    const double first = std::accumulate(match.begin(), match.begin() + 50, 0.0) / 50;
    const double last = std::accumulate(match.end() - 50, match.end(), 0.0) / 50;
    CHECK(last < first);
}

TEST_CASE("identical seeds give identical loss sequences") {
    TrainingConfig c = small_config(9);
    c.iterations = 25;
    TrainOptions o;
    o.evaluate = false;
    const TrainResult a = train_loop(c, o);
    const TrainResult b = train_loop(c, o);
    REQUIRE(a.losses.size() == 25);
    CHECK(a.losses == b.losses);
    CHECK(same_state(a.state, b.state));
    c.seed = 10;
    const TrainResult other = train_loop(c, o);
    CHECK(other.losses != a.losses);
}

TEST_CASE("z1 and z2 are uncorrelated") {
    RngStreams rng(5);
    const int n = 10000;
    Eigen::ArrayXd sxy = Eigen::ArrayXd::Zero(64), sx = sxy, sy = sxy, sxx = sxy, syy = sxy;
    for (int i = 0; i < n; ++i) {
        const StepDraws d = draw_step(rng, 10, 1, Shape{2}, 64);
        const Eigen::ArrayXd x = d.z1.data().cast<double>().array(), y = d.z2.data().cast<double>().array();
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    const Eigen::ArrayXd cov = sxy / n - (sx / n) * (sy / n);
    const Eigen::ArrayXd corr = cov / ((sxx / n - (sx / n).square()) * (syy / n - (sy / n).square())).sqrt();
    CHECK(corr.abs().maxCoeff() < 0.05);
}

TEST_CASE("draws: t is in range and every noise tensor differs") {
    RngStreams rng(6);
    std::vector<int> seen(11, 0);
    for (int i = 0; i < 500; ++i) {
        const StepDraws d = draw_step(rng, 10, 4, Shape{2}, 8);
        REQUIRE(d.t >= 1);
        REQUIRE(d.t <= 10);
        ++seen[static_cast<std::size_t>(d.t)];
        CHECK(d.eps1.data() != d.eps2.data());
        CHECK(d.eps2.data() != d.eps3.data());
        CHECK(d.eps3.data() != d.eps4.data());
        CHECK(d.eps4.data() != d.eps5.data());
    }
    for (int t = 1; t <= 10; ++t) CHECK(seen[static_cast<std::size_t>(t)] > 20);
}

TEST_CASE("generator alone converges onto a single target under a perfect denoiser") {
    const NoiseSchedule sched = build_schedule();
    test::PointDenoiser oracle;
    oracle.schedule = &sched;
    oracle.centre = Tensor::from(Shape{1, 2}, {0.3, -0.4});
    GeneratorNet g(MlpGeneratorArch{}, 2);
    AdamState adam = make_adam_state(g.params().tensors());
    RngStreams rng(3);
    for (int i = 0; i < 4000; ++i) {
        const StepDraws d = draw_step(rng, 10, 32, Shape{2}, 64);
        const LossContext ctx{sched, ZeroMean{}, VariantKind::Original, d.t};
        const Tensor loss = generator_term(oracle, g, d.z2, d.eps4, std::nullopt, ctx);
        g.params().zero_grad();
        backward(loss);
        adam_step(g.params().tensors(), adam);
    }
    const Tensor out = sample_one_step(g, 256, 11);
    double worst = 0;
    for (Index i = 0; i < 256; ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(out.data()[2 * i]) - 0.3));
        worst = std::max(worst, std::abs(static_cast<double>(out.data()[2 * i + 1]) + 0.4));
    }
    CHECK(worst < 0.05);
}

TEST_CASE("zero iterations: initialized checkpoint, empty metrics") {
    const fs::path dir = scratch_dir("zero");
    TrainingConfig c = small_config(3);
    c.iterations = 0;
    c.checkpoint_path = (dir / "ckpt.bin").string();
    c.metrics_path = (dir / "metrics.csv").string();
    const TrainResult r = train_loop(c);
    CHECK(r.losses.empty());
    CHECK(r.metrics.empty());
    const TrainerState loaded = load_checkpoint(c.checkpoint_path);
    CHECK(same_state(loaded, init_trainer(c, Shape{2})));
    CHECK((!fs::exists(c.metrics_path) || read_metrics(c.metrics_path).empty()));
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted run bitwise") {
    const fs::path dir = scratch_dir("resume");
    TrainingConfig c = small_config(12);
    c.iterations = 40;
    c.log_every = 20;
    TrainOptions straight;
    const TrainResult full = train_loop(c, straight);

    TrainingConfig half = c;
    half.checkpoint_path = (dir / "half.bin").string();
    TrainOptions first;
    first.stop_at = 20;
    const TrainResult a = train_loop(half, first);
    CHECK(a.state.iteration == 20);
    TrainOptions second;
    second.resume = load_checkpoint(half.checkpoint_path);
    const TrainResult b = train_loop(half, second);
    CHECK(b.state.iteration == 40);

    std::vector<LossRecord> joined = a.losses;
    joined.insert(joined.end(), b.losses.begin(), b.losses.end());
    CHECK(joined == full.losses);
    CHECK(b.state.score.params().same_values(full.state.score.params()));
    CHECK(b.state.generator.params().same_values(full.state.generator.params()));
    REQUIRE(full.metrics.size() == 2);
    REQUIRE(b.metrics.size() == 1);
    CHECK(b.metrics[0] == full.metrics[1]);
}

TEST_CASE("one-step sampling uses one generator pass and no score pass") {
    const TrainerState s = init_trainer(small_config(), Shape{2});
    forward_counters().reset();
    const Tensor x = sample_one_step(s, 100, 1);
    CHECK(forward_counters().generator == 1);
    CHECK(forward_counters().score == 0);
    CHECK(x.shape() == Shape{100, 2});
    CHECK(x.data().cwiseAbs().maxCoeff() <= 1);
    CHECK_FALSE(sample_one_step(s, 0, 1).defined());
    CHECK(sample_one_step(s, 10, 7).data() == sample_one_step(s, 10, 7).data());
}

TEST_CASE("non-finite batches abort naming the iteration") {
    TrainerState s = init_trainer(small_config(), Shape{2});
    const Tensor bad = Tensor::full(Shape{4, 2}, std::numeric_limits<Scalar>::quiet_NaN());
    try {
        train_step(s, bad);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}
