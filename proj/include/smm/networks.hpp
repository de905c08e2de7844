#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "smm/tensor.hpp"

namespace smm {

enum class Activation { Relu, LeakyRelu, Tanh };

Tensor activate(const Tensor& x, Activation kind);

// "relu", "leaky_relu", "tanh".
const char* activation_name(Activation kind);
Activation parse_activation(const std::string& name);

inline constexpr int kTimeEmbeddingDim = 16;

// Sinusoidal features of the diffusion step, shape [1, dim].
Tensor time_embedding(int t, int dim = kTimeEmbeddingDim);

// Score network on flat vectors: [N, data_dim] -> [N, data_dim].
struct MlpScoreArch {
    int data_dim = 2;
    std::vector<int> hidden{128, 128};
    Activation activation = Activation::LeakyRelu;
    bool operator==(const MlpScoreArch&) const = default;
};

// Score network on images: small U-Net with convs at full, half and quarter
// resolution and skip connections; [N,C,H,W] -> [N,C,H,W]. H and W must be
// divisible by 4.
struct ConvScoreArch {
    int channels = 1;
    int height = 28;
    int width = 28;
    std::vector<int> widths{16, 32, 32};
    Activation activation = Activation::LeakyRelu;
    bool operator==(const ConvScoreArch&) const = default;
};

struct ScoreArch {
    std::variant<MlpScoreArch, ConvScoreArch> body;
    // Two same-shaped inputs concatenated on the feature/channel axis.
    bool paired = false;
    int time_dim = kTimeEmbeddingDim;
    bool operator==(const ScoreArch&) const = default;
};

struct MlpGeneratorArch {
    int latent_dim = 64;
    std::vector<int> hidden{128, 128};
    int data_dim = 2;
    Activation activation = Activation::LeakyRelu;
    bool operator==(const MlpGeneratorArch&) const = default;
};

// Linear projection to a quarter-resolution map, then two nearest-upsample +
// conv stages. H and W must be divisible by 4.
struct ConvGeneratorArch {
    int latent_dim = 128;
    int channels = 1;
    int height = 28;
    int width = 28;
    int base_channels = 32;
    Activation activation = Activation::LeakyRelu;
    bool operator==(const ConvGeneratorArch&) const = default;
};

using GeneratorArch = std::variant<MlpGeneratorArch, ConvGeneratorArch>;

struct NamedParam {
    std::string name;
    Tensor value;
};

// Copies are deep: optimizers update values in place, so two ParamSets never
// share storage.
class ParamSet {
public:
    ParamSet() = default;
    ParamSet(const ParamSet& other);
    ParamSet& operator=(const ParamSet& other);
    ParamSet(ParamSet&&) noexcept = default;
    ParamSet& operator=(ParamSet&&) noexcept = default;

    void add(std::string name, Tensor value);
    std::size_t size() const { return tensors_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    std::span<Tensor> tensors() { return tensors_; }
    std::span<const Tensor> tensors() const { return tensors_; }
    const Tensor& at(std::size_t i) const { return tensors_.at(i); }
    void zero_grad();
    Index count() const;
    // Bitwise equality of names, shapes and values.
    bool same_values(const ParamSet& other) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
// biases; each tensor is drawn from its own (seed, name) stream.
ParamSet init_params(const ScoreArch& arch, std::uint64_t seed);
ParamSet init_params(const GeneratorArch& arch, std::uint64_t seed);

// Trainable: parameters are recorded on the tape. Frozen: parameters enter
// the graph as constants, so no gradient reaches them.
enum class ParamMode { Trainable, Frozen };

struct ForwardCounters {
    std::atomic<std::int64_t> score{0};
    std::atomic<std::int64_t> generator{0};
    void reset() {
        score = 0;
        generator = 0;
    }
};

ForwardCounters& forward_counters();

class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual Tensor predict(const Tensor& x_tilde, int t, ParamMode mode) const = 0;
    virtual Tensor predict_paired(const Tensor& a, const Tensor& b, int t, ParamMode mode) const = 0;
};

class GeneratorModel {
public:
    virtual ~GeneratorModel() = default;
    virtual Tensor generate(const Tensor& z, ParamMode mode) const = 0;
    virtual Index latent_dim() const = 0;
};

class ScoreNet final : public ScoreModel {
public:
    ScoreNet(ScoreArch arch, std::uint64_t seed);
    ScoreNet(ScoreArch arch, ParamSet params);

    Tensor predict(const Tensor& x_tilde, int t, ParamMode mode = ParamMode::Trainable) const override;
    Tensor predict_paired(const Tensor& a, const Tensor& b, int t,
                          ParamMode mode = ParamMode::Trainable) const override;

    const ScoreArch& arch() const { return arch_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    // Shape of one sample, e.g. {2} or {1,28,28}.
    Shape sample_shape() const;

private:
    Tensor forward(const Tensor& input, int t, ParamMode mode) const;

    ScoreArch arch_;
    ParamSet params_;
};

class GeneratorNet final : public GeneratorModel {
public:
    GeneratorNet(GeneratorArch arch, std::uint64_t seed);
    GeneratorNet(GeneratorArch arch, ParamSet params);

    Tensor generate(const Tensor& z, ParamMode mode = ParamMode::Trainable) const override;
    Index latent_dim() const override;

    const GeneratorArch& arch() const { return arch_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    Shape sample_shape() const;

private:
    GeneratorArch arch_;
    ParamSet params_;
};

Tensor score_forward(const ScoreNet& net, const Tensor& x_tilde, int t);
Tensor score_forward_paired(const ScoreNet& net, const Tensor& a, const Tensor& b, int t);
Tensor generator_forward(const GeneratorNet& net, const Tensor& z);

}  // namespace smm
