#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smm/gradcheck.hpp"
#include "smm/networks.hpp"
#include "test_support.hpp"

using namespace smm;

namespace {

ScoreArch small_mlp(bool paired = false, Activation act = Activation::Tanh) {
    ScoreArch a;
    a.body = MlpScoreArch{2, {4, 4}, act};
    a.paired = paired;
    a.time_dim = 4;
    return a;
}

ScoreArch small_conv(bool paired = false) {
    ScoreArch a;
    a.body = ConvScoreArch{1, 4, 4, {2, 2, 2}, Activation::Tanh};
    a.paired = paired;
    a.time_dim = 4;
    return a;
}

}  // namespace

TEST_CASE("score output has the input shape") {
    Engine e(1);
    const ScoreNet mlp(ScoreArch{}, 1);
    CHECK(score_forward(mlp, test::random_tensor(e, Shape{5, 2}), 3).shape() == Shape{5, 2});
    ScoreArch conv_arch;
    conv_arch.body = ConvScoreArch{};
    const ScoreNet conv(conv_arch, 1);
    CHECK(score_forward(conv, test::random_tensor(e, Shape{2, 1, 28, 28}), 3).shape() == Shape{2, 1, 28, 28});
    CHECK_THROWS_AS(score_forward(mlp, test::random_tensor(e, Shape{5, 3}), 3), ShapeError);
}

TEST_CASE("score net depends on t") {
    Engine e(2);
    const ScoreNet net(ScoreArch{}, 2);
    const Tensor x = test::random_tensor(e, Shape{3, 2});
    CHECK(score_forward(net, x, 1).data() != score_forward(net, x, 10).data());
}

TEST_CASE("forward passes are deterministic") {
    Engine e(3);
    const Tensor x = test::random_tensor(e, Shape{3, 2});
    CHECK(score_forward(ScoreNet(ScoreArch{}, 7), x, 4).data() == score_forward(ScoreNet(ScoreArch{}, 7), x, 4).data());
    const Tensor z = test::random_tensor(e, Shape{3, 64});
    CHECK(generator_forward(GeneratorNet(MlpGeneratorArch{}, 7), z).data() ==
          generator_forward(GeneratorNet(MlpGeneratorArch{}, 7), z).data());
}

TEST_CASE("paired score net") {
    Engine e(4);
    ScoreArch arch;
    arch.paired = true;
    const ScoreNet net(arch, 4);
    const Tensor a = test::random_tensor(e, Shape{3, 2});
    const Tensor b = test::random_tensor(e, Shape{3, 2});
    CHECK(score_forward_paired(net, a, b, 2).shape() == a.shape());
    CHECK(score_forward_paired(net, a, b, 2).data() != score_forward_paired(net, b, a, 2).data());
    const Tensor zero = Tensor::zeros(Shape{3, 2});
    CHECK(score_forward_paired(net, zero, zero, 2).data().allFinite());
    CHECK_THROWS_AS(score_forward_paired(net, a, Tensor::zeros(Shape{2, 2}), 2), ShapeError);
}

TEST_CASE("generator output lies strictly inside (-1,1)") {
    Engine e(5);
    const GeneratorNet g(MlpGeneratorArch{}, 5);
    const Tensor x = generator_forward(g, test::random_tensor(e, Shape{100, 64}));
    CHECK(x.shape() == Shape{100, 2});
    CHECK(x.data().cwiseAbs().maxCoeff() < 1);
    const GeneratorNet conv(ConvGeneratorArch{}, 5);
    const Tensor img = generator_forward(conv, test::random_tensor(e, Shape{3, 128}));
    CHECK(img.shape() == Shape{3, 1, 28, 28});
    CHECK(img.data().cwiseAbs().maxCoeff() < 1);
    CHECK_THROWS_AS(generator_forward(g, test::random_tensor(e, Shape{3, 63})), ShapeError);
}

TEST_CASE("parameter initialisation") {
    CHECK(init_params(ScoreArch{}, 3).same_values(init_params(ScoreArch{}, 3)));
    CHECK_FALSE(init_params(ScoreArch{}, 3).same_values(init_params(ScoreArch{}, 4)));
    const ParamSet p = init_params(GeneratorArch{MlpGeneratorArch{}}, 1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.names()[i].ends_with(".bias")) CHECK(p.at(i).data().isZero());
    }
    // Fan-in bound on the first layer: 1/sqrt(64).
    CHECK(p.at(0).data().cwiseAbs().maxCoeff() <= 0.125);
    ScoreArch zero_width;
    zero_width.body = MlpScoreArch{2, {128, 0}, Activation::LeakyRelu};
    CHECK_THROWS_AS(init_params(zero_width, 0), ConfigError);
    CHECK_THROWS_AS(init_params(GeneratorArch{MlpGeneratorArch{0}}, 0), ConfigError);
}

TEST_CASE("parameter sets copy deeply") {
    ParamSet a = init_params(ScoreArch{}, 1);
    const ParamSet b = a;
    a.tensors()[0].mutable_data()[0] += 1;
    CHECK_FALSE(a.same_values(b));
}

TEST_CASE("frozen mode blocks parameter gradients but not input gradients") {
    Engine e(6);
    ScoreNet net(small_mlp(), 6);
    Tensor x = test::random_tensor(e, Shape{3, 2}, true);
    backward(sum(net.predict(x, 2, ParamMode::Frozen)));
    CHECK(x.has_grad());
    for (const auto& p : net.params().tensors()) CHECK_FALSE(p.has_grad());
}

TEST_CASE("network outputs pass gradient checks w.r.t. every parameter") {
    Engine e(7);
    SUBCASE("mlp score") {
        ScoreNet net(small_mlp(), 7);
        const Tensor x = test::random_tensor(e, Shape{3, 2});
        CHECK(finite_diff_gradcheck_params([&] { return test::weighted_sum(net.predict(x, 3), 1); },
                                           net.params().tensors()) < 1e-4);
    }
    SUBCASE("paired mlp score") {
        ScoreNet net(small_mlp(true), 7);
        const Tensor a = test::random_tensor(e, Shape{3, 2}), b = test::random_tensor(e, Shape{3, 2});
        CHECK(finite_diff_gradcheck_params([&] { return test::weighted_sum(net.predict_paired(a, b, 3), 1); },
                                           net.params().tensors()) < 1e-4);
    }
    SUBCASE("conv score") {
        ScoreNet net(small_conv(), 7);
        const Tensor x = test::random_tensor(e, Shape{2, 1, 4, 4});
        CHECK(finite_diff_gradcheck_params([&] { return test::weighted_sum(net.predict(x, 3), 1); },
                                           net.params().tensors()) < 1e-4);
    }
    SUBCASE("mlp generator") {
        GeneratorNet g(MlpGeneratorArch{3, {4, 4}, 2, Activation::Tanh}, 7);
        const Tensor z = test::random_tensor(e, Shape{3, 3});
        CHECK(finite_diff_gradcheck_params([&] { return test::weighted_sum(g.generate(z), 1); },
                                           g.params().tensors()) < 1e-4);
    }
    SUBCASE("conv generator") {
        GeneratorNet g(ConvGeneratorArch{3, 1, 4, 4, 2, Activation::Tanh}, 7);
        const Tensor z = test::random_tensor(e, Shape{2, 3});
        CHECK(finite_diff_gradcheck_params([&] { return test::weighted_sum(g.generate(z), 1); },
                                           g.params().tensors()) < 1e-4);
    }
}

TEST_CASE("forward counters count network passes") {
    forward_counters().reset();
    const GeneratorNet g(MlpGeneratorArch{}, 1);
    Engine e(8);
    generator_forward(g, test::random_tensor(e, Shape{4, 64}));
    CHECK(forward_counters().generator == 1);
    CHECK(forward_counters().score == 0);
}
