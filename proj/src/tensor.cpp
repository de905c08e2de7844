#include "smm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace smm {

namespace {

thread_local bool g_grad_mode = true;

void require_finite(const char* op, const Tensor& t) {
    if (!t.data().allFinite()) {
        throw NumericError(op, "non-finite value in input of shape " + to_string(t.shape()));
    }
}

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) {
        throw ShapeError(op, "undefined tensor");
    }
}

Tensor make_result(OpKind op, Shape shape, std::shared_ptr<Vector> value,
                   std::initializer_list<Tensor> inputs, Node::BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    const bool any_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (g_grad_mode && any_grad) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(fn);
    }
    return Tensor(std::move(node));
}

Tensor make_result(OpKind op, Shape shape, Vector value, std::initializer_list<Tensor> inputs,
                   Node::BackwardFn fn) {
    return make_result(op, std::move(shape), std::make_shared<Vector>(std::move(value)), inputs,
                       std::move(fn));
}

// Index maps from each output element to the element of a and b it reads.
struct Broadcast {
    Shape out;
    bool same = false;
    std::vector<Index> a_index;
    std::vector<Index> b_index;
};

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
    Broadcast bc;
    if (a == b) {
        bc.out = a;
        bc.same = true;
        return bc;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    auto extent = [rank](const Shape& s, std::size_t axis) -> Index {
        const std::size_t offset = rank - s.size();
        return axis < offset ? 1 : s[axis - offset];
    };
    bc.out.resize(rank);
    for (std::size_t ax = 0; ax < rank; ++ax) {
        const Index ea = extent(a, ax);
        const Index eb = extent(b, ax);
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError(op, "cannot broadcast " + to_string(a) + " with " + to_string(b));
        }
        bc.out[ax] = std::max(ea, eb);
    }
    auto strides = [&](const Shape& s) {
        std::vector<Index> st(rank, 0);
        Index running = 1;
        for (std::size_t k = rank; k-- > 0;) {
            const Index e = extent(s, k);
            st[k] = e == 1 ? 0 : running;
            running *= e;
        }
        return st;
    };
    const auto sa = strides(a);
    const auto sb = strides(b);
    const Index total = numel(bc.out);
    bc.a_index.resize(static_cast<std::size_t>(total));
    bc.b_index.resize(static_cast<std::size_t>(total));
    std::vector<Index> counter(rank, 0);
    Index ia = 0;
    Index ib = 0;
    for (Index i = 0; i < total; ++i) {
        bc.a_index[static_cast<std::size_t>(i)] = ia;
        bc.b_index[static_cast<std::size_t>(i)] = ib;
        for (std::size_t k = rank; k-- > 0;) {
            ++counter[k];
            ia += sa[k];
            ib += sb[k];
            if (counter[k] < bc.out[k]) break;
            ia -= sa[k] * counter[k];
            ib -= sb[k] * counter[k];
            counter[k] = 0;
        }
    }
    return bc;
}

template <typename Fn>
Vector apply_binary(const Broadcast& bc, const Vector& a, const Vector& b, Fn fn) {
    if (bc.same) return a.binaryExpr(b, fn);
    Vector out(static_cast<Index>(bc.a_index.size()));
    for (std::size_t i = 0; i < bc.a_index.size(); ++i) {
        out[static_cast<Index>(i)] = fn(a[bc.a_index[i]], b[bc.b_index[i]]);
    }
    return out;
}

// Sums `g` (output-shaped) back into an operand through its index map.
void reduce_into(Vector& target, const Vector& g, const std::vector<Index>& index, bool same) {
    if (same) {
        target += g;
        return;
    }
    for (std::size_t i = 0; i < index.size(); ++i) target[index[i]] += g[static_cast<Index>(i)];
}

Tensor binary_op(OpKind kind, const char* name, const Tensor& a, const Tensor& b) {
    require_defined(name, a);
    require_defined(name, b);
    require_finite(name, a);
    require_finite(name, b);
    auto bc = std::make_shared<Broadcast>(broadcast(name, a.shape(), b.shape()));
    Vector value;
    switch (kind) {
        case OpKind::Add:
            value = apply_binary(*bc, a.data(), b.data(), [](Scalar x, Scalar y) { return x + y; });
            break;
        case OpKind::Sub:
            value = apply_binary(*bc, a.data(), b.data(), [](Scalar x, Scalar y) { return x - y; });
            break;
        default:
            value = apply_binary(*bc, a.data(), b.data(), [](Scalar x, Scalar y) { return x * y; });
            break;
    }
    auto av = a.node()->value;
    auto bv = b.node()->value;
    Shape out_shape = bc->out;
    return make_result(kind, std::move(out_shape), std::move(value), {a, b},
                       [kind, bc, av, bv](const Vector& g, std::span<Vector*> grads) {
                           if (kind == OpKind::Mul) {
                               if (grads[0]) {
                                   Vector ga = bc->same ? Vector(g.cwiseProduct(*bv)) : Vector(g.size());
                                   if (!bc->same) {
                                       for (std::size_t i = 0; i < bc->b_index.size(); ++i)
                                           ga[static_cast<Index>(i)] =
                                               g[static_cast<Index>(i)] * (*bv)[bc->b_index[i]];
                                   }
                                   reduce_into(*grads[0], ga, bc->a_index, bc->same);
                               }
                               if (grads[1]) {
                                   Vector gb = bc->same ? Vector(g.cwiseProduct(*av)) : Vector(g.size());
                                   if (!bc->same) {
                                       for (std::size_t i = 0; i < bc->a_index.size(); ++i)
                                           gb[static_cast<Index>(i)] =
                                               g[static_cast<Index>(i)] * (*av)[bc->a_index[i]];
                                   }
                                   reduce_into(*grads[1], gb, bc->b_index, bc->same);
                               }
                               return;
                           }
                           if (grads[0]) reduce_into(*grads[0], g, bc->a_index, bc->same);
                           if (grads[1]) {
                               if (kind == OpKind::Sub) {
                                   reduce_into(*grads[1], -g, bc->b_index, bc->same);
                               } else {
                                   reduce_into(*grads[1], g, bc->b_index, bc->same);
                               }
                           }
                       });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(OpKind kind, const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
    require_defined(name, x);
    require_finite(name, x);
    auto xv = x.node()->value;
    Vector value = xv->unaryExpr(fwd);
    auto yv = std::make_shared<Vector>(std::move(value));
    return make_result(kind, x.shape(), yv, {x}, [xv, yv, deriv](const Vector& g, std::span<Vector*> grads) {
        if (!grads[0]) return;
        for (Index i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * deriv((*xv)[i], (*yv)[i]);
    });
}

void require_rank4(const char* op, const Tensor& x) {
    if (x.rank() != 4) throw ShapeError(op, "expected [N,C,H,W], got " + to_string(x.shape()));
}

// Lowers sample n of x into a [C*KH*KW, Ho*Wo] patch matrix.
// Output columns ow whose input column ow + kj - pad lies inside [0, width).
std::pair<Index, Index> valid_cols(Index kj, Index pad, Index width, Index out_w) {
    const Index lo = std::clamp<Index>(pad - kj, 0, out_w);
    const Index hi = std::clamp<Index>(width + pad - kj, lo, out_w);
    return {lo, hi};
}

void im2col(const Scalar* x, Index channels, Index height, Index width, Index kh, Index kw, Index pad,
            Index out_h, Index out_w, Matrix& col) {
    col.resize(channels * kh * kw, out_h * out_w);
    for (Index c = 0; c < channels; ++c) {
        for (Index ki = 0; ki < kh; ++ki) {
            for (Index kj = 0; kj < kw; ++kj) {
                const Index row = (c * kh + ki) * kw + kj;
                Scalar* dst = col.row(row).data();
                const auto [lo, hi] = valid_cols(kj, pad, width, out_w);
                for (Index oh = 0; oh < out_h; ++oh) {
                    Scalar* out = dst + oh * out_w;
                    const Index ih = oh + ki - pad;
                    if (ih < 0 || ih >= height) {
                        std::fill(out, out + out_w, Scalar(0));
                        continue;
                    }
                    std::fill(out, out + lo, Scalar(0));
                    const Index base = (c * height + ih) * width + kj - pad;  // base + lo >= 0
                    std::copy(x + base + lo, x + base + hi, out + lo);
                    std::fill(out + hi, out + out_w, Scalar(0));
                }
            }
        }
    }
}

void col2im(const Matrix& col, Index channels, Index height, Index width, Index kh, Index kw, Index pad,
            Index out_h, Index out_w, Scalar* dx) {
    for (Index c = 0; c < channels; ++c) {
        for (Index ki = 0; ki < kh; ++ki) {
            for (Index kj = 0; kj < kw; ++kj) {
                const Index row = (c * kh + ki) * kw + kj;
                const Scalar* src = col.row(row).data();
                const auto [lo, hi] = valid_cols(kj, pad, width, out_w);
                for (Index oh = 0; oh < out_h; ++oh) {
                    const Index ih = oh + ki - pad;
                    if (ih < 0 || ih >= height) continue;
                    Scalar* out = dx + (c * height + ih) * width;
                    const Scalar* in = src + oh * out_w;
                    for (Index ow = lo; ow < hi; ++ow) out[ow + kj - pad] += in[ow];
                }
            }
        }
    }
}

}  // namespace

Index numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::MatMul: return "matmul";
        case OpKind::ChannelBias: return "add_channel_bias";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Relu: return "relu";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Tanh: return "tanh";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::SquaredNorm: return "squared_norm";
        case OpKind::Concat: return "concat";
        case OpKind::Reshape: return "reshape";
        case OpKind::Upsample2x: return "upsample_nearest2x";
        case OpKind::AvgPool2x: return "avg_pool2x";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, Vector values, bool requires_grad) {
    for (Index e : shape) {
        if (e <= 0) throw ShapeError("tensor", "extents must be positive, got " + to_string(shape));
    }
    if (smm::numel(shape) != values.size()) {
        throw ShapeError("tensor", "shape " + to_string(shape) + " does not hold " +
                                       std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::make_shared<Vector>(std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad) {
    Vector v(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), v.data());
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const Index n = smm::numel(shape);
    return from(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value) {
    const Index n = smm::numel(shape);
    return from(std::move(shape), Vector::Constant(n, value));
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
    return from(Shape{}, Vector::Constant(1, value), requires_grad);
}

Scalar Tensor::item() const {
    if (numel() != 1) throw ShapeError("item", "tensor of shape " + to_string(shape()) + " is not a scalar");
    return (*node_->value)[0];
}

void Tensor::set_requires_grad(bool flag) {
    if (node_->op != OpKind::Leaf) throw TapeError("set_requires_grad", "only leaves can be marked");
    node_->requires_grad = flag;
}

const Vector& Tensor::grad() const {
    if (!node_->grad) throw TapeError("grad", "tensor has no gradient");
    return *node_->grad;
}

void Tensor::zero_grad() { node_->grad = Vector::Zero(numel()); }

Tensor Tensor::detach() const {
    auto node = std::make_shared<Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
    auto node = std::make_shared<Node>();
    node->shape = node_->shape;
    node->value = std::make_shared<Vector>(*node_->value);
    node->requires_grad = node_->requires_grad && node_->op == OpKind::Leaf;
    return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

// ---------------------------------------------------------------------------
// Ops

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(OpKind::Add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(OpKind::Sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(OpKind::Mul, "mul", a, b); }

Tensor scale(const Tensor& x, Scalar factor) {
    require_defined("scale", x);
    require_finite("scale", x);
    if (!std::isfinite(factor)) throw NumericError("scale", "non-finite factor");
    return make_result(OpKind::Scale, x.shape(), Vector(x.data() * factor), {x},
                       [factor](const Vector& g, std::span<Vector*> grads) {
                           if (grads[0]) *grads[0] += g * factor;
                       });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined("matmul", a);
    require_defined("matmul", b);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul", "cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
    }
    require_finite("matmul", a);
    require_finite("matmul", b);
    const Index m = a.dim(0);
    const Index k = a.dim(1);
    const Index n = b.dim(1);
    auto av = a.node()->value;
    auto bv = b.node()->value;
    Vector out(m * n);
    MatrixMap(out.data(), m, n).noalias() = ConstMatrixMap(av->data(), m, k) * ConstMatrixMap(bv->data(), k, n);
    return make_result(OpKind::MatMul, Shape{m, n}, std::move(out), {a, b},
                       [av, bv, m, k, n](const Vector& g, std::span<Vector*> grads) {
                           ConstMatrixMap gm(g.data(), m, n);
                           if (grads[0]) {
                               MatrixMap(grads[0]->data(), m, k).noalias() +=
                                   gm * ConstMatrixMap(bv->data(), k, n).transpose();
                           }
                           if (grads[1]) {
                               MatrixMap(grads[1]->data(), k, n).noalias() +=
                                   ConstMatrixMap(av->data(), m, k).transpose() * gm;
                           }
                       });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    require_defined("add_channel_bias", x);
    require_defined("add_channel_bias", bias);
    if (x.rank() < 2) throw ShapeError("add_channel_bias", "input needs [N,C,...], got " + to_string(x.shape()));
    const Index batch = x.dim(0);
    const Index channels = x.dim(1);
    bool per_sample = false;
    if (bias.shape() == Shape{channels} || bias.shape() == Shape{1, channels}) {
        per_sample = false;
    } else if (bias.shape() == Shape{batch, channels}) {
        per_sample = true;
    } else {
        throw ShapeError("add_channel_bias",
                         "bias " + to_string(bias.shape()) + " does not match input " + to_string(x.shape()));
    }
    require_finite("add_channel_bias", x);
    require_finite("add_channel_bias", bias);
    const Index spatial = x.numel() / (batch * channels);
    Vector out = x.data();
    const Vector& b = bias.data();
    for (Index n = 0; n < batch; ++n) {
        for (Index c = 0; c < channels; ++c) {
            const Scalar v = b[per_sample ? n * channels + c : c];
            out.segment((n * channels + c) * spatial, spatial).array() += v;
        }
    }
    return make_result(OpKind::ChannelBias, x.shape(), std::move(out), {x, bias},
                       [batch, channels, spatial, per_sample](const Vector& g, std::span<Vector*> grads) {
                           if (grads[0]) *grads[0] += g;
                           if (grads[1]) {
                               for (Index n = 0; n < batch; ++n) {
                                   for (Index c = 0; c < channels; ++c) {
                                       (*grads[1])[per_sample ? n * channels + c : c] +=
                                           g.segment((n * channels + c) * spatial, spatial).sum();
                                   }
                               }
                           }
                       });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, Padding padding) {
    require_defined("conv2d", x);
    require_defined("conv2d", weight);
    require_rank4("conv2d", x);
    if (weight.rank() != 4 || weight.dim(1) != x.dim(1)) {
        throw ShapeError("conv2d", "weight " + to_string(weight.shape()) + " does not match input " +
                                       to_string(x.shape()));
    }
    const Index batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
    const Index out_c = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    Index pad = 0;
    if (padding == Padding::Same) {
        if (kh != kw || kh % 2 == 0) throw ShapeError("conv2d", "same padding needs an odd square kernel");
        pad = (kh - 1) / 2;
    }
    const Index out_h = height + 2 * pad - kh + 1;
    const Index out_w = width + 2 * pad - kw + 1;
    if (out_h <= 0 || out_w <= 0) {
        throw ShapeError("conv2d", "kernel " + to_string(weight.shape()) + " larger than input " +
                                       to_string(x.shape()));
    }
    require_finite("conv2d", x);
    require_finite("conv2d", weight);
    auto xv = x.node()->value;
    auto wv = weight.node()->value;
    const Index patch = channels * kh * kw;
    const Index in_size = channels * height * width;
    const Index out_size = out_c * out_h * out_w;
    Vector out(batch * out_size);
    ConstMatrixMap wm(wv->data(), out_c, patch);
    Matrix col;
    for (Index n = 0; n < batch; ++n) {
        im2col(xv->data() + n * in_size, channels, height, width, kh, kw, pad, out_h, out_w, col);
        MatrixMap(out.data() + n * out_size, out_c, out_h * out_w).noalias() = wm * col;
    }
    return make_result(
        OpKind::Conv2d, Shape{batch, out_c, out_h, out_w}, std::move(out), {x, weight},
        [=](const Vector& g, std::span<Vector*> grads) {
            ConstMatrixMap wm(wv->data(), out_c, patch);
            Matrix col;
            Matrix dcol;
            for (Index n = 0; n < batch; ++n) {
                ConstMatrixMap gm(g.data() + n * out_size, out_c, out_h * out_w);
                if (grads[1]) {
                    im2col(xv->data() + n * in_size, channels, height, width, kh, kw, pad, out_h, out_w, col);
                    MatrixMap(grads[1]->data(), out_c, patch).noalias() += gm * col.transpose();
                }
                if (grads[0]) {
                    dcol.noalias() = wm.transpose() * gm;
                    col2im(dcol, channels, height, width, kh, kw, pad, out_h, out_w,
                           grads[0]->data() + n * in_size);
                }
            }
        });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        OpKind::Relu, "relu", x, [](Scalar v) { return v > 0 ? v : Scalar(0); },
        [](Scalar v, Scalar) { return v > 0 ? Scalar(1) : Scalar(0); });
}

Tensor leaky_relu(const Tensor& x, Scalar negative_slope) {
    return unary_op(
        OpKind::LeakyRelu, "leaky_relu", x, [negative_slope](Scalar v) { return v > 0 ? v : negative_slope * v; },
        [negative_slope](Scalar v, Scalar) { return v > 0 ? Scalar(1) : negative_slope; });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        OpKind::Tanh, "tanh", x, [](Scalar v) { return std::tanh(v); },
        [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Tensor sum(const Tensor& x) {
    require_defined("sum", x);
    require_finite("sum", x);
    return make_result(OpKind::Sum, Shape{}, Vector::Constant(1, x.data().sum()), {x},
                       [](const Vector& g, std::span<Vector*> grads) {
                           if (grads[0]) grads[0]->array() += g[0];
                       });
}

Tensor mean(const Tensor& x) {
    require_defined("mean", x);
    require_finite("mean", x);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(x.numel());
    return make_result(OpKind::Mean, Shape{}, Vector::Constant(1, x.data().sum() * inv), {x},
                       [inv](const Vector& g, std::span<Vector*> grads) {
                           if (grads[0]) grads[0]->array() += g[0] * inv;
                       });
}

Tensor squared_norm(const Tensor& x) {
    require_defined("squared_norm", x);
    require_finite("squared_norm", x);
    auto xv = x.node()->value;
    return make_result(OpKind::SquaredNorm, Shape{}, Vector::Constant(1, xv->squaredNorm()), {x},
                       [xv](const Vector& g, std::span<Vector*> grads) {
                           if (grads[0]) *grads[0] += (2 * g[0]) * *xv;
                       });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat", "no inputs");
    for (const auto& p : parts) require_defined("concat", p);
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat", "axis out of range for " + to_string(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != first.size()) {
            throw ShapeError("concat", "rank mismatch " + to_string(first) + " vs " + to_string(s));
        }
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (k != axis && s[k] != first[k]) {
                throw ShapeError("concat", "extent mismatch " + to_string(first) + " vs " + to_string(s));
            }
        }
        out_shape[axis] += s[axis];
        require_finite("concat", p);
    }
    const Index outer = numel(Shape(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(axis)));
    const Index inner = numel(Shape(first.begin() + static_cast<std::ptrdiff_t>(axis) + 1, first.end()));
    const Index out_block = out_shape[axis] * inner;
    std::vector<Index> widths;
    for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
    Vector out(numel(out_shape));
    Index offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Vector& v = parts[k].data();
        for (Index o = 0; o < outer; ++o) out.segment(o * out_block + offset, widths[k]) = v.segment(o * widths[k], widths[k]);
        offset += widths[k];
    }
    auto node = std::make_shared<Node>();
    node->op = OpKind::Concat;
    node->shape = out_shape;
    node->value = std::make_shared<Vector>(std::move(out));
    const bool any_grad = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (g_grad_mode && any_grad) {
        node->requires_grad = true;
        for (const auto& p : parts) node->inputs.push_back(p.node());
        node->backward = [outer, out_block, widths](const Vector& g, std::span<Vector*> grads) {
            Index off = 0;
            for (std::size_t k = 0; k < widths.size(); ++k) {
                if (grads[k]) {
                    for (Index o = 0; o < outer; ++o)
                        grads[k]->segment(o * widths[k], widths[k]) += g.segment(o * out_block + off, widths[k]);
                }
                off += widths[k];
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor reshape(const Tensor& x, Shape shape) {
    require_defined("reshape", x);
    for (Index e : shape) {
        if (e <= 0) throw ShapeError("reshape", "extents must be positive, got " + to_string(shape));
    }
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    require_finite("reshape", x);
    return make_result(OpKind::Reshape, std::move(shape), x.node()->value, {x},
                       [](const Vector& g, std::span<Vector*> grads) {
                           if (grads[0]) *grads[0] += g;
                       });
}

Tensor upsample_nearest2x(const Tensor& x) {
    require_defined("upsample_nearest2x", x);
    require_rank4("upsample_nearest2x", x);
    require_finite("upsample_nearest2x", x);
    const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index oh = 2 * h, ow = 2 * w;
    const Vector& in = x.data();
    Vector out(planes * oh * ow);
    for (Index p = 0; p < planes; ++p)
        for (Index i = 0; i < oh; ++i)
            for (Index j = 0; j < ow; ++j) out[(p * oh + i) * ow + j] = in[(p * h + i / 2) * w + j / 2];
    return make_result(OpKind::Upsample2x, Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                       [planes, h, w, oh, ow](const Vector& g, std::span<Vector*> grads) {
                           if (!grads[0]) return;
                           for (Index p = 0; p < planes; ++p)
                               for (Index i = 0; i < oh; ++i)
                                   for (Index j = 0; j < ow; ++j)
                                       (*grads[0])[(p * h + i / 2) * w + j / 2] += g[(p * oh + i) * ow + j];
                       });
}

Tensor avg_pool2x(const Tensor& x) {
    require_defined("avg_pool2x", x);
    require_rank4("avg_pool2x", x);
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
        throw ShapeError("avg_pool2x", "spatial extents must be even, got " + to_string(x.shape()));
    }
    require_finite("avg_pool2x", x);
    const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index oh = h / 2, ow = w / 2;
    const Vector& in = x.data();
    Vector out(planes * oh * ow);
    for (Index p = 0; p < planes; ++p)
        for (Index i = 0; i < oh; ++i)
            for (Index j = 0; j < ow; ++j) {
                const Index base = (p * h + 2 * i) * w + 2 * j;
                out[(p * oh + i) * ow + j] = Scalar(0.25) * (in[base] + in[base + 1] + in[base + w] + in[base + w + 1]);
            }
    return make_result(OpKind::AvgPool2x, Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                       [planes, h, w, oh, ow](const Vector& g, std::span<Vector*> grads) {
                           if (!grads[0]) return;
                           for (Index p = 0; p < planes; ++p)
                               for (Index i = 0; i < oh; ++i)
                                   for (Index j = 0; j < ow; ++j) {
                                       const Scalar v = Scalar(0.25) * g[(p * oh + i) * ow + j];
                                       const Index base = (p * h + 2 * i) * w + 2 * j;
                                       (*grads[0])[base] += v;
                                       (*grads[0])[base + 1] += v;
                                       (*grads[0])[base + w] += v;
                                       (*grads[0])[base + w + 1] += v;
                                   }
                       });
}

// ---------------------------------------------------------------------------
// Reverse pass

void backward(const Tensor& loss) {
    if (!loss.defined()) throw TapeError("backward", "undefined loss");
    if (loss.numel() != 1) throw TapeError("backward", "loss must be scalar, got shape " + to_string(loss.shape()));
    Node* root = loss.node().get();
    if (root->released) throw TapeError("backward", "tape already consumed by a previous backward");
    if (!root->requires_grad) throw TapeError("backward", "loss does not depend on any tracked tensor");
    if (!std::isfinite((*root->value)[0])) throw NumericError("backward", "loss is not finite");

    // Post-order DFS gives a topological order; iterate it in reverse.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        if (node->op != OpKind::Leaf && (node->released || !node->backward)) {
            throw TapeError("backward", std::string("tape node '") + op_name(node->op) + "' was already released");
        }
        order.push_back(node);
        stack.pop_back();
    }

    std::unordered_map<Node*, Vector> grads;
    grads.emplace(root, Vector::Ones(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto found = grads.find(node);
        if (found == grads.end()) continue;
        Vector g = std::move(found->second);
        grads.erase(found);
        if (node->op == OpKind::Leaf) {
            if (!node->grad) node->grad = Vector::Zero(g.size());
            *node->grad += g;
            continue;
        }
        std::vector<Vector*> input_grads(node->inputs.size(), nullptr);
        for (std::size_t k = 0; k < node->inputs.size(); ++k) {
            Node* in = node->inputs[k].get();
            if (!in->requires_grad) continue;
            auto [slot, inserted] = grads.try_emplace(in);
            if (inserted) slot->second = Vector::Zero(static_cast<Index>(in->value->size()));
            input_grads[k] = &slot->second;
        }
        node->backward(g, input_grads);
    }
    for (Node* node : order) {
        if (node->op == OpKind::Leaf) continue;
        node->backward = nullptr;
        node->inputs.clear();
        node->released = true;
    }
}

}  // namespace smm
