#include "smm/adam.hpp"

#include <cmath>
#include <string>

namespace smm {

namespace {

bool same_vectors(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size() || a[i] != b[i]) return false;
    }
    return true;
}

}  // namespace

bool AdamState::operator==(const AdamState& other) const {
    return options == other.options && step == other.step && same_vectors(first_moment, other.first_moment) &&
           same_vectors(second_moment, other.second_moment);
}

AdamState make_adam_state(std::span<const Tensor> params, AdamOptions options) {
    if (!(options.learning_rate > 0)) throw ConfigError("adam", "learning rate must be positive");
    AdamState state;
    state.options = options;
    for (const auto& p : params) {
        state.first_moment.push_back(Vector::Zero(p.numel()));
        state.second_moment.push_back(Vector::Zero(p.numel()));
    }
    return state;
}

void adam_step(std::span<Tensor> params, std::span<const Vector> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw ShapeError("adam_step", "parameter, gradient and state counts differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Index n = params[k].numel();
        if (grads[k].size() != n || state.first_moment[k].size() != n || state.second_moment[k].size() != n) {
            throw ShapeError("adam_step", "parameter " + std::to_string(k) + " of shape " +
                                              to_string(params[k].shape()) + " does not match its gradient/state");
        }
        if (!grads[k].allFinite()) {
            throw NumericError("adam_step", "non-finite gradient for parameter " + std::to_string(k));
        }
    }

    const auto& opt = state.options;
    state.step += 1;
    const Scalar t = static_cast<Scalar>(state.step);
    const Scalar correction1 = Scalar(1) - std::pow(opt.beta1, t);
    const Scalar correction2 = Scalar(1) - std::pow(opt.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Vector& m = state.first_moment[k];
        Vector& v = state.second_moment[k];
        const Vector& g = grads[k];
        m = opt.beta1 * m + (Scalar(1) - opt.beta1) * g;
        v = opt.beta2 * v + (Scalar(1) - opt.beta2) * g.cwiseProduct(g);
        Vector& w = params[k].mutable_data();
        w.array() -= opt.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + opt.eps);
    }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
    std::vector<Vector> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(p.has_grad() ? p.grad() : Vector::Zero(p.numel()));
    adam_step(params, grads, state);
}

}  // namespace smm
