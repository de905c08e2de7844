#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smm/errors.hpp"

namespace smm {

// Precision is a build-wide choice. Oracle/test builds use double; the
// SMM_FLOAT32 option switches training builds to float.
#ifdef SMM_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Index = Eigen::Index;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    ChannelBias,
    Conv2d,
    Relu,
    LeakyRelu,
    Tanh,
    Sum,
    Mean,
    SquaredNorm,
    Concat,
    Reshape,
    Upsample2x,
    AvgPool2x,
};

const char* op_name(OpKind op);

// One recorded operation. The graph of nodes reachable from a loss is the
// tape for that loss: append-only, released by backward().
struct Node {
    using BackwardFn = std::function<void(const Vector& upstream, std::span<Vector*> input_grads)>;

    OpKind op = OpKind::Leaf;
    Shape shape;
    std::shared_ptr<Vector> value;
    bool requires_grad = false;
    std::optional<Vector> grad;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
    bool released = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, Vector values, bool requires_grad = false);
    static Tensor from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Scalar value);
    static Tensor scalar(Scalar value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    Index dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    Index numel() const { return static_cast<Index>(node_->value->size()); }
    OpKind op() const { return node_->op; }

    const Vector& data() const { return *node_->value; }
    Scalar operator[](Index i) const { return (*node_->value)[i]; }
    Scalar item() const;

    // Writable view of the values. Only optimizers and gradient checks
    // mutate tensors; every other operation produces a new value.
    Vector& mutable_data() { return *node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag);
    bool has_grad() const { return node_->grad.has_value(); }
    const Vector& grad() const;
    void zero_grad();

    // Same storage, no history, no gradient tracking.
    Tensor detach() const;
    Tensor clone() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

// Disables tape recording on this thread while alive. Values computed under
// the guard are bitwise identical to the taped ones.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

// Elementwise binary ops broadcast numpy-style (right-aligned extents,
// an extent of 1 stretches).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Scalar factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& x, Scalar s) { return scale(x, s); }
inline Tensor operator*(Scalar s, const Tensor& x) { return scale(x, s); }
inline Tensor operator-(const Tensor& x) { return scale(x, Scalar(-1)); }

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [N,C,...]; bias: [C], [1,C] or [N,C]. Adds bias[n,c] to every element
// of channel c of sample n.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

enum class Padding { Same, Valid };

// x: [N,C,H,W], weight: [O,C,KH,KW]; stride 1. Same padding needs odd kernels.
Tensor conv2d(const Tensor& x, const Tensor& weight, Padding padding = Padding::Same);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Scalar negative_slope = Scalar(0.2));
Tensor tanh(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// ||x||^2 over every element.
Tensor squared_norm(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);

// Nearest-neighbour 2x upsampling and 2x2 average pooling on [N,C,H,W].
Tensor upsample_nearest2x(const Tensor& x);
Tensor avg_pool2x(const Tensor& x);

// Populates grad on every requires_grad leaf reachable from `loss`
// (accumulating into existing grads), then releases the tape.
void backward(const Tensor& loss);

}  // namespace smm
