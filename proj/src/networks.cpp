#include "smm/networks.hpp"

#include <cmath>

#include "smm/rng.hpp"

namespace smm {

namespace {

constexpr int kKernel = 3;

Tensor uniform_weight(std::uint64_t seed, const std::string& name, Shape shape, Index fan_in) {
    Engine engine(stream_seed(seed, name));
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in));
    Tensor w = rand_uniform(engine, std::move(shape), -bound, bound);
    w.set_requires_grad(true);
    return w;
}

Tensor zero_bias(Index n) { return Tensor::zeros(Shape{n}, true); }

void require_width(const char* what, int width) {
    if (width < 1) throw ConfigError("init_params", std::string(what) + " must be >= 1, got " + std::to_string(width));
}

// Walks a ParamSet in creation order during a forward pass.
class ParamCursor {
public:
    ParamCursor(const ParamSet& params, ParamMode mode) : params_(params), mode_(mode) {}
    Tensor next() {
        const Tensor& p = params_.at(pos_++);
        return mode_ == ParamMode::Frozen ? p.detach() : p;
    }

private:
    const ParamSet& params_;
    ParamMode mode_;
    std::size_t pos_ = 0;
};

Tensor dense(const Tensor& x, ParamCursor& cursor) {
    Tensor w = cursor.next();
    Tensor b = cursor.next();
    return add_channel_bias(matmul(x, w), b);
}

Tensor conv_layer(const Tensor& x, ParamCursor& cursor) {
    Tensor w = cursor.next();
    Tensor b = cursor.next();
    return add_channel_bias(conv2d(x, w, Padding::Same), b);
}

Tensor time_bias(const Tensor& h, const Tensor& emb, ParamCursor& cursor) {
    return add_channel_bias(h, matmul(emb, cursor.next()));
}

void check_image_arch(const char* op, int channels, int height, int width, int divisor) {
    if (channels < 1 || height < 1 || width < 1) throw ConfigError(op, "image extents must be >= 1");
    if (height % divisor != 0 || width % divisor != 0) {
        throw ConfigError(op, "image extents must be divisible by " + std::to_string(divisor));
    }
}

}  // namespace

Tensor activate(const Tensor& x, Activation kind) {
    switch (kind) {
        case Activation::Relu: return relu(x);
        case Activation::LeakyRelu: return leaky_relu(x, Scalar(0.2));
        case Activation::Tanh: return tanh(x);
    }
    return x;
}

const char* activation_name(Activation kind) {
    switch (kind) {
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Tanh: return "tanh";
    }
    return "leaky_relu";
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "leaky_relu") return Activation::LeakyRelu;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigError("activation", "expected relu|leaky_relu|tanh, got '" + name + "'");
}

Tensor time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("time_embedding", "dimension must be even and >= 2");
    const int half = dim / 2;
    Vector e(dim);
    for (int k = 0; k < half; ++k) {
        const Scalar freq = std::exp(-std::log(Scalar(1000)) * static_cast<Scalar>(k) / static_cast<Scalar>(half));
        e[k] = std::sin(static_cast<Scalar>(t) * freq);
        e[half + k] = std::cos(static_cast<Scalar>(t) * freq);
    }
    return Tensor::from(Shape{1, dim}, std::move(e));
}

// ---------------------------------------------------------------------------
// ParamSet

ParamSet::ParamSet(const ParamSet& other) : names_(other.names_) {
    tensors_.reserve(other.tensors_.size());
    for (const auto& t : other.tensors_) tensors_.push_back(t.clone());
}

ParamSet& ParamSet::operator=(const ParamSet& other) {
    if (this != &other) *this = ParamSet(other);
    return *this;
}

void ParamSet::add(std::string name, Tensor value) {
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
}

void ParamSet::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

Index ParamSet::count() const {
    Index n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

bool ParamSet::same_values(const ParamSet& other) const {
    if (names_ != other.names_) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].shape() != other.tensors_[i].shape()) return false;
        if (tensors_[i].data() != other.tensors_[i].data()) return false;
    }
    return true;
}

ParamSet init_params(const ScoreArch& arch, std::uint64_t seed) {
    require_width("time embedding dimension", arch.time_dim);
    ParamSet ps;
    const int factor = arch.paired ? 2 : 1;
    if (const auto* mlp = std::get_if<MlpScoreArch>(&arch.body)) {
        require_width("data dimension", mlp->data_dim);
        Index in = mlp->data_dim * factor;
        for (std::size_t i = 0; i < mlp->hidden.size(); ++i) {
            const int h = mlp->hidden[i];
            require_width("hidden width", h);
            const std::string p = "hidden" + std::to_string(i);
            ps.add(p + ".weight", uniform_weight(seed, p + ".weight", Shape{in, h}, in));
            ps.add(p + ".bias", zero_bias(h));
            ps.add(p + ".time", uniform_weight(seed, p + ".time", Shape{arch.time_dim, h}, arch.time_dim));
            in = h;
        }
        ps.add("out.weight", uniform_weight(seed, "out.weight", Shape{in, mlp->data_dim}, in));
        ps.add("out.bias", zero_bias(mlp->data_dim));
        return ps;
    }
    const auto& conv = std::get<ConvScoreArch>(arch.body);
    check_image_arch("init_params", conv.channels, conv.height, conv.width, 4);
    if (conv.widths.size() != 3) throw ConfigError("init_params", "conv score net takes exactly 3 widths");
    for (int w : conv.widths) require_width("conv width", w);
    const auto add_conv = [&](const std::string& p, Index in, Index out, bool timed) {
        ps.add(p + ".weight",
               uniform_weight(seed, p + ".weight", Shape{out, in, kKernel, kKernel}, in * kKernel * kKernel));
        ps.add(p + ".bias", zero_bias(out));
        if (timed) ps.add(p + ".time", uniform_weight(seed, p + ".time", Shape{arch.time_dim, out}, arch.time_dim));
    };
    const Index w0 = conv.widths[0], w1 = conv.widths[1], w2 = conv.widths[2];
    add_conv("conv0", conv.channels * factor, w0, true);
    add_conv("conv1", w0, w1, true);
    add_conv("conv2", w1, w2, true);
    add_conv("up1", w2 + w1, w1, true);
    add_conv("out", w1 + w0, conv.channels, false);
    return ps;
}

ParamSet init_params(const GeneratorArch& arch, std::uint64_t seed) {
    ParamSet ps;
    if (const auto* mlp = std::get_if<MlpGeneratorArch>(&arch)) {
        require_width("latent dimension", mlp->latent_dim);
        require_width("data dimension", mlp->data_dim);
        Index in = mlp->latent_dim;
        for (std::size_t i = 0; i < mlp->hidden.size(); ++i) {
            const int h = mlp->hidden[i];
            require_width("hidden width", h);
            const std::string p = "hidden" + std::to_string(i);
            ps.add(p + ".weight", uniform_weight(seed, p + ".weight", Shape{in, h}, in));
            ps.add(p + ".bias", zero_bias(h));
            in = h;
        }
        ps.add("out.weight", uniform_weight(seed, "out.weight", Shape{in, mlp->data_dim}, in));
        ps.add("out.bias", zero_bias(mlp->data_dim));
        return ps;
    }
    const auto& conv = std::get<ConvGeneratorArch>(arch);
    require_width("latent dimension", conv.latent_dim);
    require_width("base channels", conv.base_channels);
    if (conv.base_channels < 2) throw ConfigError("init_params", "base channels must be >= 2");
    check_image_arch("init_params", conv.channels, conv.height, conv.width, 4);
    const Index base = conv.base_channels;
    const Index half = base / 2;
    const Index projected = base * (conv.height / 4) * (conv.width / 4);
    ps.add("project.weight", uniform_weight(seed, "project.weight", Shape{conv.latent_dim, projected}, conv.latent_dim));
    ps.add("project.bias", zero_bias(projected));
    ps.add("conv0.weight", uniform_weight(seed, "conv0.weight", Shape{base, base, kKernel, kKernel}, base * 9));
    ps.add("conv0.bias", zero_bias(base));
    ps.add("conv1.weight", uniform_weight(seed, "conv1.weight", Shape{half, base, kKernel, kKernel}, base * 9));
    ps.add("conv1.bias", zero_bias(half));
    ps.add("out.weight", uniform_weight(seed, "out.weight", Shape{conv.channels, half, kKernel, kKernel}, half * 9));
    ps.add("out.bias", zero_bias(conv.channels));
    return ps;
}

ForwardCounters& forward_counters() {
    static ForwardCounters counters;
    return counters;
}

// ---------------------------------------------------------------------------
// ScoreNet

ScoreNet::ScoreNet(ScoreArch arch, std::uint64_t seed) : arch_(std::move(arch)), params_(init_params(arch_, seed)) {}

ScoreNet::ScoreNet(ScoreArch arch, ParamSet params) : arch_(std::move(arch)), params_(std::move(params)) {
    const ParamSet reference = init_params(arch_, 0);
    if (reference.names() != params_.names()) throw FormatError("ScoreNet", "parameter names do not match architecture");
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (reference.at(i).shape() != params_.at(i).shape()) {
            throw FormatError("ScoreNet", "parameter '" + reference.names()[i] + "' has wrong shape");
        }
    }
}

Shape ScoreNet::sample_shape() const {
    if (const auto* mlp = std::get_if<MlpScoreArch>(&arch_.body)) return Shape{mlp->data_dim};
    const auto& conv = std::get<ConvScoreArch>(arch_.body);
    return Shape{conv.channels, conv.height, conv.width};
}

Tensor ScoreNet::predict(const Tensor& x_tilde, int t, ParamMode mode) const {
    if (arch_.paired) throw ConfigError("score_forward", "paired network needs two inputs");
    Shape expected = sample_shape();
    expected.insert(expected.begin(), x_tilde.rank() ? x_tilde.dim(0) : 1);
    if (x_tilde.shape() != expected) {
        throw ShapeError("score_forward", "input " + to_string(x_tilde.shape()) + " does not match sample shape " +
                                              to_string(sample_shape()));
    }
    return forward(x_tilde, t, mode);
}

Tensor ScoreNet::predict_paired(const Tensor& a, const Tensor& b, int t, ParamMode mode) const {
    if (!arch_.paired) throw ConfigError("score_forward_paired", "network was not built for paired input");
    if (a.shape() != b.shape()) {
        throw ShapeError("score_forward_paired", "inputs " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                                                     " differ");
    }
    Shape expected = sample_shape();
    expected.insert(expected.begin(), a.rank() ? a.dim(0) : 1);
    if (a.shape() != expected) {
        throw ShapeError("score_forward_paired", "input " + to_string(a.shape()) + " does not match sample shape " +
                                                     to_string(sample_shape()));
    }
    return forward(concat({a, b}, 1), t, mode);
}

Tensor ScoreNet::forward(const Tensor& input, int t, ParamMode mode) const {
    if (t < 1) throw ConfigError("score_forward", "diffusion step must be >= 1, got " + std::to_string(t));
    forward_counters().score += 1;
    const Tensor emb = time_embedding(t, arch_.time_dim);
    ParamCursor cursor(params_, mode);
    if (const auto* mlp = std::get_if<MlpScoreArch>(&arch_.body)) {
        Tensor h = input;
        for (std::size_t i = 0; i < mlp->hidden.size(); ++i) {
            h = dense(h, cursor);
            h = activate(time_bias(h, emb, cursor), mlp->activation);
        }
        return dense(h, cursor);
    }
    const auto& conv = std::get<ConvScoreArch>(arch_.body);
    const auto block = [&](const Tensor& x) {
        return activate(time_bias(conv_layer(x, cursor), emb, cursor), conv.activation);
    };
    // Two pooling levels: at 28x28 the bottom layer sees the whole image.
    const Tensor h0 = block(input);
    const Tensor h1 = block(avg_pool2x(h0));
    const Tensor h2 = block(avg_pool2x(h1));
    const Tensor u1 = block(concat({upsample_nearest2x(h2), h1}, 1));
    return conv_layer(concat({upsample_nearest2x(u1), h0}, 1), cursor);
}

// ---------------------------------------------------------------------------
// GeneratorNet

GeneratorNet::GeneratorNet(GeneratorArch arch, std::uint64_t seed)
    : arch_(std::move(arch)), params_(init_params(arch_, seed)) {}

GeneratorNet::GeneratorNet(GeneratorArch arch, ParamSet params) : arch_(std::move(arch)), params_(std::move(params)) {
    const ParamSet reference = init_params(arch_, 0);
    if (reference.names() != params_.names()) {
        throw FormatError("GeneratorNet", "parameter names do not match architecture");
    }
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (reference.at(i).shape() != params_.at(i).shape()) {
            throw FormatError("GeneratorNet", "parameter '" + reference.names()[i] + "' has wrong shape");
        }
    }
}

Index GeneratorNet::latent_dim() const {
    return std::visit([](const auto& a) -> Index { return a.latent_dim; }, arch_);
}

Shape GeneratorNet::sample_shape() const {
    if (const auto* mlp = std::get_if<MlpGeneratorArch>(&arch_)) return Shape{mlp->data_dim};
    const auto& conv = std::get<ConvGeneratorArch>(arch_);
    return Shape{conv.channels, conv.height, conv.width};
}

Tensor GeneratorNet::generate(const Tensor& z, ParamMode mode) const {
    if (z.rank() != 2 || z.dim(1) != latent_dim()) {
        throw ShapeError("generator_forward", "latent batch must be [N," + std::to_string(latent_dim()) + "], got " +
                                                  to_string(z.shape()));
    }
    forward_counters().generator += 1;
    ParamCursor cursor(params_, mode);
    if (const auto* mlp = std::get_if<MlpGeneratorArch>(&arch_)) {
        Tensor h = z;
        for (std::size_t i = 0; i < mlp->hidden.size(); ++i) h = activate(dense(h, cursor), mlp->activation);
        return tanh(dense(h, cursor));
    }
    const auto& conv = std::get<ConvGeneratorArch>(arch_);
    Tensor h = activate(dense(z, cursor), conv.activation);
    h = reshape(h, Shape{z.dim(0), conv.base_channels, conv.height / 4, conv.width / 4});
    h = activate(conv_layer(upsample_nearest2x(h), cursor), conv.activation);
    h = activate(conv_layer(upsample_nearest2x(h), cursor), conv.activation);
    return tanh(conv_layer(h, cursor));
}

Tensor score_forward(const ScoreNet& net, const Tensor& x_tilde, int t) { return net.predict(x_tilde, t); }

Tensor score_forward_paired(const ScoreNet& net, const Tensor& a, const Tensor& b, int t) {
    return net.predict_paired(a, b, t);
}

Tensor generator_forward(const GeneratorNet& net, const Tensor& z) { return net.generate(z); }

}  // namespace smm
