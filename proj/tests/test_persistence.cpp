#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smm/checkpoint.hpp"
#include "smm/config.hpp"
#include "smm/metrics_log.hpp"
#include "smm/pgm.hpp"
#include "smm/trainer.hpp"

using namespace smm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("smm_persist_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(SMM_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kGauss8 = std::string(SMM_SOURCE_DIR) + "/configs/gauss8.cfg";
const std::string kMnist = std::string(SMM_SOURCE_DIR) + "/configs/mnist.cfg";
const std::string kMnistData = std::string(SMM_SOURCE_DIR) + "/data/mnist";

double csv_value(const std::string& text, const std::string& metric) {
    const auto at = text.find(metric + ",");
    REQUIRE(at != std::string::npos);
    return std::stod(text.substr(at + metric.size() + 1));
}

}  // namespace

TEST_CASE("config: empty text gives the published defaults") {
    const TrainingConfig c = parse_config_text("");
    CHECK(c.steps == 10);
    CHECK(c.learning_rate == 0.0025);
    CHECK(c.batch_size == 32);
    CHECK(c.beta_min == 1e-4);
    CHECK(c.beta_max == 0.02);
    CHECK(c == TrainingConfig{});
}

TEST_CASE("config: errors name the key") {
    CHECK_THROWS_WITH_AS(parse_config_text("T = 0"), doctest::Contains("T"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("momentum = 0.9"), doctest::Contains("momentum"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("lr = fast"), doctest::Contains("lr"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("batch_size = 2.5"), doctest::Contains("batch_size"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("lr = -1"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("variant = variant9"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("just some words"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("hflip = true"), ConfigError);  // needs image data
    CHECK_THROWS_AS(parse_config(fs::path("/nonexistent/smm.cfg")), Error);
}

TEST_CASE("config: comments, whitespace, and a full round trip") {
    const TrainingConfig c = parse_config_text(
        "# comment\n  variant = variant3 \nT=25\nbeta_max = 0.03\nlr = 1e-3\nduplicate_fake = yes\n"
        "dataset.kind = two_moons\ndataset.noise = 0.1\nseed = 42   # trailing\nmodel.activation = tanh\n");
    CHECK(c.variant == VariantKind::PairedInput);
    CHECK(c.steps == 25);
    CHECK(c.duplicate_fake);
    CHECK(c.seed == 42);
    CHECK(std::get<TwoMoons>(c.dataset.kind).noise == 0.1);
    CHECK(parse_config_text(to_config_text(c)) == c);

    TrainingConfig img;
    set_config_value(img, "dataset.kind", "mnist");
    set_config_value(img, "dataset.path", "/data/x");
    set_config_value(img, "dataset.digit", "3");
    set_config_value(img, "corruption", "spatial");
    set_config_value(img, "corruption.ratio", "0.2");
    set_config_value(img, "hflip", "true");
    CHECK(parse_config_text(to_config_text(img)) == img);
}

TEST_CASE("checkpoint: fresh and mid-training states round-trip bitwise") {
    const fs::path dir = scratch("ckpt");
    TrainingConfig c;
    c.model.hidden = 16;
    c.seed = 5;
    TrainerState s = init_trainer(c, Shape{2});
    save_checkpoint(s, dir / "fresh.smm");
    CHECK(same_state(load_checkpoint(dir / "fresh.smm"), s));

    const Dataset data = make_dataset(c.dataset, c.seed);
    for (int i = 0; i < 7; ++i) train_step(s, next_batch(s, data));
    const std::string bytes = encode_checkpoint(s);
    const TrainerState back = decode_checkpoint(bytes);
    CHECK(same_state(back, s));
    CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("checkpoint: corruption, version and truncation are rejected") {
    TrainingConfig c;
    c.model.hidden = 8;
    const std::string bytes = encode_checkpoint(init_trainer(c, Shape{2}));
    std::string flipped = bytes;
    flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x10);
    CHECK_THROWS_WITH_AS(decode_checkpoint(flipped), doctest::Contains("checksum"), FormatError);
    std::string version = bytes;
    version[8] = 2;
    CHECK_THROWS_WITH_AS(decode_checkpoint(version), doctest::Contains("version"), FormatError);
    CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), doctest::Contains("truncated"),
                         FormatError);
    CHECK_THROWS_AS(decode_checkpoint(""), FormatError);
    CHECK_THROWS_AS(decode_checkpoint("NOTACKPT" + bytes.substr(8)), FormatError);
}

TEST_CASE("architecture descriptors round-trip through text") {
    ScoreArch s;
    s.body = ConvScoreArch{1, 28, 28, {4, 8, 8}, Activation::Tanh};
    s.paired = true;
    CHECK(parse_score_arch(to_text(s)) == s);
    const GeneratorArch g = MlpGeneratorArch{16, {32, 8}, 2, Activation::Relu};
    CHECK(parse_generator_arch(to_text(g)) == g);
}

TEST_CASE("metrics log: header, append, read back") {
    const fs::path p = scratch("metrics") / "m.csv";
    MetricsRow a{10, 1.5, 2.25, 0.125, 0.01, 0.2, 0, 3};
    MetricsRow b{20, 1.25, 2.5, 0.25, 0.005, 0.1, 0, 3};
    append_metrics(p, {a});
    append_metrics(p, {b});
    const std::string text = slurp(p);
    CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    CHECK(read_metrics(p) == std::vector<MetricsRow>{a, b});
    std::ofstream(p, std::ios::app) << "30,nan,1,1,1,1,0,3\n";
    CHECK_THROWS(read_metrics(p));
    std::ofstream(p, std::ios::trunc) << "iteration,loss\n";
    CHECK_THROWS(read_metrics(p));
}

TEST_CASE("PGM grid: 16 tiles, byte mapping, round trip") {
    Tensor imgs = Tensor::full(Shape{16, 1, 28, 28}, Scalar(-1));
    imgs.mutable_data()[0] = 1;
    const GridImage g = make_grid(imgs);
    CHECK(g.tiles == 16);
    CHECK(g.rows == 4 * 29 + 1);
    CHECK(g.cols == 4 * 29 + 1);
    CHECK(static_cast<unsigned char>(g.pixels[static_cast<std::size_t>(g.cols + 1)]) == 255);
    const fs::path p = scratch("pgm") / "g.pgm";
    write_pgm(g, p);
    const GridImage back = read_pgm(p);
    CHECK(back.rows == g.rows);
    CHECK(back.cols == g.cols);
    CHECK(back.pixels == g.pixels);
}

TEST_CASE("cli: train, determinism, sample, eval") {
    const fs::path dir = scratch("cli");
    const fs::path log = dir / "log.txt";
    REQUIRE(run("train --config " + kGauss8 + " --iterations 100 --seed 7 --out " + (dir / "a").string(), log) == 0);
    const auto rows = read_metrics(dir / "a" / "metrics.csv");
    CHECK(rows.size() >= 1);
    CHECK(rows.back().iteration == 100);
    // The checkpoint stores its own output paths, so rerun into the same place.
    const std::string metrics = slurp(dir / "a" / "metrics.csv");
    const std::string ckpt_bytes = slurp(dir / "a" / "checkpoint.smm");
    REQUIRE(run("train --config " + kGauss8 + " --iterations 100 --seed 7 --out " + (dir / "a").string(), log) == 0);
    CHECK(slurp(dir / "a" / "metrics.csv") == metrics);
    CHECK(slurp(dir / "a" / "checkpoint.smm") == ckpt_bytes);

    // Flags beat config keys.
    REQUIRE(run("train --config " + kGauss8 + " --iterations 3 --set iterations=50 --set seed=2 --out " +
                    (dir / "c").string(),
                log) == 0);
    CHECK(load_checkpoint(dir / "c" / "checkpoint.smm").iteration == 3);

    CHECK(run("train --config " + (dir / "missing.cfg").string(), log) != 0);
    CHECK(slurp(log).find("missing.cfg") != std::string::npos);
    CHECK(run("train --config " + kGauss8 + " --set momentum=1 --out " + (dir / "d").string(), log) != 0);
    CHECK(slurp(log).find("momentum") != std::string::npos);

    const std::string ckpt = (dir / "a" / "checkpoint.smm").string();
    REQUIRE(run("sample --checkpoint " + ckpt + " --n 64 --seed 3 --out " + (dir / "s1.csv").string(), log) == 0);
    REQUIRE(run("sample --checkpoint " + ckpt + " --n 64 --seed 3 --out " + (dir / "s2.csv").string(), log) == 0);
    CHECK(slurp(dir / "s1.csv") == slurp(dir / "s2.csv"));
    const std::string csv = slurp(dir / "s1.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 64);
    REQUIRE(run("sample --checkpoint " + ckpt + " --n 0 --out " + (dir / "s0.csv").string(), log) == 0);
    CHECK(fs::file_size(dir / "s0.csv") == 0);
    CHECK(run("sample --checkpoint " + (dir / "log.txt").string() + " --out " + (dir / "x.csv").string(), log) != 0);

    REQUIRE(run("eval --checkpoint " + ckpt + " --n 512 --against-self", log) == 0);
    CHECK(std::abs(csv_value(slurp(log), "mmd2_unbiased")) < 5e-3);
    CHECK(run("eval --checkpoint " + ckpt + " --n 1", log) != 0);
}

TEST_CASE("cli: training lowers MMD against held-out data") {
    const fs::path dir = scratch("cli_eval");
    const fs::path log = dir / "log.txt";
    REQUIRE(run("train --config " + kGauss8 + " --iterations 0 --out " + (dir / "init").string(), log) == 0);
    REQUIRE(run("train --config " + kGauss8 + " --iterations 3000 --out " + (dir / "trained").string(), log) == 0);
    REQUIRE(run("eval --checkpoint " + (dir / "init" / "checkpoint.smm").string() + " --n 1024", log) == 0);
    const double before = csv_value(slurp(log), "mmd2_unbiased");
    REQUIRE(run("eval --checkpoint " + (dir / "trained" / "checkpoint.smm").string() + " --n 1024", log) == 0);
    const double after = csv_value(slurp(log), "mmd2_unbiased");
    CHECK(after < before);
}

TEST_CASE("cli: MNIST sample grid has 16 tiles") {
    const fs::path dir = scratch("cli_mnist");
    const fs::path log = dir / "log.txt";
    REQUIRE(run("train --config " + kMnist + " --iterations 1 --set dataset.path=" + kMnistData +
                    " --set eval_samples=16 --out " + dir.string(),
                log) == 0);
    REQUIRE(run("sample --checkpoint " + (dir / "checkpoint.smm").string() + " --n 16 --out " +
                    (dir / "grid.pgm").string(),
                log) == 0);
    const GridImage g = read_pgm(dir / "grid.pgm");
    CHECK(g.rows == 4 * 29 + 1);
    CHECK(g.cols == 4 * 29 + 1);
}
