#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "smm/gradcheck.hpp"
#include "test_support.hpp"
#include "toy_models.hpp"

using namespace smm;
using test::FixedScore;
using test::ZeroScore;

namespace {

const NoiseSchedule& schedule() {
    static const NoiseSchedule s = build_schedule();
    return s;
}

double mean_sq_norm(const Tensor& eps) {
    return static_cast<double>(eps.data().squaredNorm()) / static_cast<double>(eps.dim(0));
}

}  // namespace

TEST_CASE("match loss: perfect predictor gives zero, zero predictor gives E|eps|^2 = d") {
    Engine e(1);
    const Index n = 10000;
    const Tensor x = test::random_tensor(e, Shape{n, 2});
    const Tensor eps1 = randn(e, Shape{n, 2});
    FixedScore oracle;
    oracle.value = eps1;
    CHECK(loss_match_true(oracle, x, eps1, 3, schedule()).item() == 0);
    const double l = loss_match_true(ZeroScore{}, x, eps1, 3, schedule()).item();
    CHECK(l == doctest::Approx(mean_sq_norm(eps1)));
    CHECK(std::abs(l - 2.0) < 0.1);
}

TEST_CASE("match loss is invariant to batch permutation") {
    Engine e(2);
    const ScoreNet net(ScoreArch{}, 2);
    const Tensor x = test::random_tensor(e, Shape{4, 2});
    const Tensor eps = test::random_tensor(e, Shape{4, 2});
    const std::vector<Index> perm{2, 0, 3, 1};
    const double a = loss_match_true(net, x, eps, 5, schedule()).item();
    const double b = loss_match_true(net, take_rows(x, perm), take_rows(eps, perm), 5, schedule()).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("mismatch loss targets the independent noise") {
    Engine e(3);
    const Index n = 10000;
    const GeneratorNet g(MlpGeneratorArch{}, 3);
    const Tensor z1 = randn(e, Shape{n, 64});
    const Tensor eps2 = randn(e, Shape{n, 2});
    const Tensor eps3 = randn(e, Shape{n, 2});
    const double l = loss_mismatch_fake(ZeroScore{}, g, z1, eps2, eps3, 4, schedule()).item();
    CHECK(l == doctest::Approx(mean_sq_norm(eps3)));
    CHECK(std::abs(l - 2.0) < 0.1);
    FixedScore cheat;
    cheat.value = eps3;
    CHECK(loss_mismatch_fake(cheat, g, z1, eps2, eps3, 4, schedule()).item() == 0);
    // Regressing onto eps2 instead is a different objective.
    const LossContext ctx{schedule(), ZeroMean{}, VariantKind::Original, 4};
    const double swapped = score_fake_term(ZeroScore{}, g, z1, eps2, eps3, ctx, true).item();
    CHECK(swapped != l);
    CHECK(swapped == doctest::Approx(mean_sq_norm(eps2)));
}

TEST_CASE("generator loss against a perfect denoiser is zero with zero gradient") {
    Engine e(4);
    GeneratorNet g(test::toy_generator_arch(2), 4);
    const Tensor z2 = randn(e, Shape{8, 3});
    const Tensor eps4 = randn(e, Shape{8, 2});
    // S(x) = (x - G(z2)) / sigma with G(z2) held constant returns exactly eps4.
    test::PointDenoiser oracle;
    oracle.schedule = &schedule();
    {
        NoGradGuard guard;
        oracle.centre = g.generate(z2, ParamMode::Frozen);
    }
    const Tensor loss = loss_generator(oracle, g, z2, eps4, 6, schedule());
    CHECK(loss.item() < 1e-20);
    g.params().zero_grad();
    backward(loss);
    for (const auto& p : g.params().tensors()) CHECK(p.grad().norm() < 1e-9);
}

TEST_CASE("generator loss against a zero score is E|eps4|^2 with no gradient") {
    Engine e(5);
    GeneratorNet g(MlpGeneratorArch{}, 5);
    const Index n = 10000;
    const Tensor z2 = randn(e, Shape{n, 64});
    const Tensor eps4 = randn(e, Shape{n, 2});
    const Tensor loss = loss_generator(ZeroScore{}, g, z2, eps4, 6, schedule());
    CHECK(loss.item() == doctest::Approx(mean_sq_norm(eps4)));
    CHECK(std::abs(loss.item() - 2.0) < 0.1);
    g.params().zero_grad();
    backward(loss);
    double norm = 0;
    for (const auto& p : g.params().tensors()) norm += static_cast<double>(p.grad().squaredNorm());
    CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("duplicated generator loss with eps5 = eps4 is exactly twice the single term") {
    Engine e(6);
    const ScoreNet s(ScoreArch{}, 6);
    const GeneratorNet g(MlpGeneratorArch{}, 6);
    const Tensor z2 = randn(e, Shape{5, 64});
    const Tensor eps4 = randn(e, Shape{5, 2});
    const double single = loss_generator(s, g, z2, eps4, 2, schedule()).item();
    const double doubled = loss_generator(s, g, z2, eps4, 2, schedule(), true, eps4).item();
    CHECK(doubled == 2 * single);
    CHECK_THROWS_AS(loss_generator(s, g, z2, eps4, 2, schedule(), true), ConfigError);
}

TEST_CASE("stop-gradients: mismatch leaves G untouched, generator loss leaves S untouched") {
    Engine e(7);
    ScoreNet s(ScoreArch{}, 7);
    GeneratorNet g(MlpGeneratorArch{}, 7);
    const Tensor z = randn(e, Shape{4, 64});
    const Tensor eps = randn(e, Shape{4, 2});
    s.params().zero_grad();
    g.params().zero_grad();
    backward(loss_mismatch_fake(s, g, z, eps, eps * Scalar(0.5), 3, schedule()));
    for (const auto& p : g.params().tensors()) CHECK(p.grad().isZero(0));
    double score_grad = 0;
    for (const auto& p : s.params().tensors()) score_grad += static_cast<double>(p.grad().squaredNorm());
    CHECK(score_grad > 0);

    s.params().zero_grad();
    g.params().zero_grad();
    backward(loss_generator(s, g, z, eps, 3, schedule()));
    for (const auto& p : s.params().tensors()) CHECK(p.grad().isZero(0));
}

TEST_CASE("variant 2: perfect oracle and zero-noise reduction") {
    Engine e(8);
    const Index n = 6;
    const GeneratorNet g(MlpGeneratorArch{}, 8);
    const Tensor x = test::random_tensor(e, Shape{n, 2});
    const Tensor z1 = randn(e, Shape{n, 64}), z2 = randn(e, Shape{n, 64});
    const Tensor zero = Tensor::zeros(Shape{n, 2});
    // S(a, b) = a + b reproduces the noisy sample whenever the target noise is the injected one.
    struct SumScore final : ScoreModel {
        Tensor predict(const Tensor& x, int, ParamMode) const override { return x; }
        Tensor predict_paired(const Tensor& a, const Tensor& b, int, ParamMode) const override { return a + b; }
    };
    const Tensor eps = randn(e, Shape{n, 2});
    const VariantLosses perfect = variant2_losses(SumScore{}, g, x, z1, z2, eps, eps, eps, eps, 4, schedule());
    CHECK(perfect.score.item() < 1e-24);
    CHECK(perfect.generator.item() < 1e-24);

    ScoreArch arch;
    arch.paired = true;
    const ScoreNet s(arch, 8);
    const VariantLosses clean = variant2_losses(s, g, x, z1, z2, zero, zero, zero, zero, 4, schedule());
    Tensor fake;
    {
        NoGradGuard guard;
        fake = g.generate(z1, ParamMode::Frozen);
    }
    const double expected = batch_mean_squared_error(s.predict_paired(x, zero, 4), x).item() +
                            batch_mean_squared_error(s.predict_paired(fake, zero, 4), fake).item();
    CHECK(clean.score.item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("variant 3: perfect oracle and zero score") {
    Engine e(9);
    const Index n = 10000;
    const GeneratorNet g(MlpGeneratorArch{}, 9);
    const Tensor x = test::random_tensor(e, Shape{n, 2});
    const Tensor z1 = randn(e, Shape{n, 64}), z2 = randn(e, Shape{n, 64});
    const Tensor e1 = randn(e, Shape{n, 2}), e2 = randn(e, Shape{n, 2}), e3 = randn(e, Shape{n, 2}),
                 e4 = randn(e, Shape{n, 2});
    const VariantLosses zero = variant3_losses(ZeroScore{}, g, x, z1, z2, e1, e2, e3, e4, 3, schedule());
    CHECK(zero.score.item() == doctest::Approx(mean_sq_norm(e1) + mean_sq_norm(e3)));
    CHECK(std::abs(zero.score.item() - 4.0) < 0.2);
    // Recovers eps from (clean, noisy) exactly.
    struct Recover final : ScoreModel {
        double sigma;
        Tensor predict(const Tensor& x, int, ParamMode) const override { return x; }
        Tensor predict_paired(const Tensor& a, const Tensor& b, int, ParamMode) const override {
            return (b - a) * static_cast<Scalar>(1.0 / sigma);
        }
    };
    Recover r;
    r.sigma = schedule().sigma(3);
    const VariantLosses perfect = variant3_losses(r, g, x, z1, z2, e1, e2, e2, e4, 3, schedule());
    CHECK(perfect.score.item() < 1e-20);
    CHECK(perfect.generator.item() < 1e-20);
}

TEST_CASE("non-finite losses abort") {
    Engine e(10);
    const Tensor x = test::random_tensor(e, Shape{2, 2});
    FixedScore huge;
    huge.value = Tensor::full(Shape{2, 2}, std::numeric_limits<Scalar>::max());
    CHECK_THROWS_AS(loss_match_true(huge, x, x, 1, schedule()), NumericError);
}

namespace {

struct GradcheckCase {
    ScoreNet score;
    GeneratorNet generator;
    Tensor x, z1, z2, e1, e2, e3, e4, e5;
    int t;
};

GradcheckCase make_case(std::uint64_t seed, bool paired) {
    Engine e(seed);
    const Index n = 3;
    GradcheckCase c{ScoreNet(test::toy_score_arch(2, paired), seed),
                    GeneratorNet(test::toy_generator_arch(2), seed + 1),
                    randn(e, Shape{n, 2}),
                    randn(e, Shape{n, 3}),
                    randn(e, Shape{n, 3}),
                    randn(e, Shape{n, 2}),
                    randn(e, Shape{n, 2}),
                    randn(e, Shape{n, 2}),
                    randn(e, Shape{n, 2}),
                    randn(e, Shape{n, 2}),
                    1 + static_cast<int>(e() % 10)};
    return c;
}

}  // namespace

TEST_CASE("full losses pass finite-difference checks") {
    const auto& sched = schedule();
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        CAPTURE(trial);
        GradcheckCase c = make_case(100 + trial, false);
        CHECK(finite_diff_gradcheck_params([&] { return loss_match_true(c.score, c.x, c.e1, c.t, sched); },
                                           c.score.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] { return loss_mismatch_fake(c.score, c.generator, c.z1, c.e2, c.e3, c.t, sched); },
                  c.score.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] { return loss_generator(c.score, c.generator, c.z2, c.e4, c.t, sched); },
                  c.generator.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] { return loss_generator(c.score, c.generator, c.z2, c.e4, c.t, sched, true, c.e5); },
                  c.generator.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] {
                      return loss_match_true(c.score, c.x, c.e1, c.t, sched, NonZeroMean{}) +
                             loss_mismatch_fake(c.score, c.generator, c.z1, c.e2, c.e3, c.t, sched, NonZeroMean{});
                  },
                  c.score.params().tensors()) < 1e-4);

        GradcheckCase p = make_case(200 + trial, true);
        CHECK(finite_diff_gradcheck_params(
                  [&] {
                      return variant2_losses(p.score, p.generator, p.x, p.z1, p.z2, p.e1, p.e2, p.e3, p.e4, p.t, sched)
                          .score;
                  },
                  p.score.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] {
                      return variant2_losses(p.score, p.generator, p.x, p.z1, p.z2, p.e1, p.e2, p.e3, p.e4, p.t, sched)
                          .generator;
                  },
                  p.generator.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] {
                      return variant3_losses(p.score, p.generator, p.x, p.z1, p.z2, p.e1, p.e2, p.e3, p.e4, p.t, sched)
                          .score;
                  },
                  p.score.params().tensors()) < 1e-4);
        CHECK(finite_diff_gradcheck_params(
                  [&] {
                      return variant3_losses(p.score, p.generator, p.x, p.z1, p.z2, p.e1, p.e2, p.e3, p.e4, p.t, sched)
                          .generator;
                  },
                  p.generator.params().tensors()) < 1e-4);
    }
}
