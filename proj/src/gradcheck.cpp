#include "smm/gradcheck.hpp"

#include <cmath>

namespace smm {

namespace {

Scalar evaluate(const std::function<Tensor()>& f) {
    NoGradGuard guard;
    const Scalar v = f().item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_gradcheck", "function returned a non-finite value");
    return v;
}

Scalar relative_error(Scalar analytic, Scalar numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + Scalar(1e-12));
}

}  // namespace

Scalar finite_diff_gradcheck_params(const std::function<Tensor()>& f, std::span<Tensor> params, Scalar h) {
    if (!(h > 0)) throw NumericError("finite_diff_gradcheck", "step must be positive");
    for (auto& p : params) p.zero_grad();
    const Tensor loss = f();
    if (!std::isfinite(loss.item())) {
        throw NumericError("finite_diff_gradcheck", "function returned a non-finite value");
    }
    backward(loss);

    Scalar worst = 0;
    for (auto& p : params) {
        const Vector analytic = p.grad();
        Vector& values = p.mutable_data();
        for (Index i = 0; i < values.size(); ++i) {
            const Scalar saved = values[i];
            values[i] = saved + h;
            const Scalar up = evaluate(f);
            values[i] = saved - h;
            const Scalar down = evaluate(f);
            values[i] = saved;
            const Scalar numeric = (up - down) / (2 * h);
            worst = std::max(worst, relative_error(analytic[i], numeric));
        }
    }
    return worst;
}

Scalar finite_diff_gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, Scalar h) {
    Tensor x = Tensor::from(point.shape(), point.data(), true);
    Tensor params[] = {x};
    return finite_diff_gradcheck_params([&] { return f(x); }, params, h);
}

}  // namespace smm
