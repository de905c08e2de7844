#include "smm/oracles.hpp"

#include <cmath>
#include <limits>

#include "smm/adam.hpp"
#include "smm/rng.hpp"

namespace smm {

namespace {

// Unnormalized Gaussian posterior weights p_i exp(-|x - x_i|^2 / (2 s^2)).
Vector raw_weights(const DiscreteDistribution& d, const Vector& x, double sigma) {
    Vector w(d.size());
    for (Index i = 0; i < d.size(); ++i) {
        const double sq = static_cast<double>((d.support.row(i).transpose() - x).squaredNorm());
        w[i] = static_cast<Scalar>(static_cast<double>(d.probs[i]) * std::exp(-sq / (2.0 * sigma * sigma)));
    }
    return w;
}

double log_total_weight(const DiscreteDistribution& a, const DiscreteDistribution& b, const Vector& x,
                        double sigma) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logs;
    for (const auto* d : {&a, &b}) {
        for (Index i = 0; i < d->size(); ++i) {
            if (d->probs[i] <= 0) continue;
            const double sq = static_cast<double>((d->support.row(i).transpose() - x).squaredNorm());
            logs.push_back(std::log(static_cast<double>(d->probs[i])) - sq / (2.0 * sigma * sigma));
            best = std::max(best, logs.back());
        }
    }
    if (logs.empty()) return best;
    double s = 0;
    for (double l : logs) s += std::exp(l - best);
    return best + std::log(s);
}

Index draw_index(const Vector& probs, Engine& engine) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(engine);
    double acc = 0;
    for (Index i = 0; i < probs.size(); ++i) {
        acc += static_cast<double>(probs[i]);
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

Tensor draw_points(const DiscreteDistribution& d, Index n, Engine& engine) {
    Vector v(n * d.dim());
    for (Index k = 0; k < n; ++k) v.segment(k * d.dim(), d.dim()) = d.support.row(draw_index(d.probs, engine));
    return Tensor::from(Shape{n, d.dim()}, std::move(v));
}

bool same_distribution(const DiscreteDistribution& a, const DiscreteDistribution& b) {
    if (a.size() != b.size() || a.dim() != b.dim()) return false;
    for (Index i = 0; i < a.size(); ++i) {
        bool found = false;
        for (Index j = 0; j < b.size() && !found; ++j) {
            found = a.support.row(i) == b.support.row(j) &&
                    std::abs(static_cast<double>(a.probs[i] - b.probs[j])) <= 1e-12;
        }
        if (!found) return false;
    }
    return true;
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(Matrix s, Vector p) : support(std::move(s)), probs(std::move(p)) {
    if (support.rows() != probs.size()) {
        throw ShapeError("DiscreteDistribution", std::to_string(support.rows()) + " points but " +
                                                     std::to_string(probs.size()) + " probabilities");
    }
    if (size() == 0) return;
    if ((probs.array() < 0).any()) throw ConfigError("DiscreteDistribution", "negative probability");
    if (std::abs(static_cast<double>(probs.sum()) - 1.0) > 1e-12) {
        throw ConfigError("DiscreteDistribution", "probabilities must sum to 1");
    }
    for (Index i = 0; i < size(); ++i) {
        for (Index j = i + 1; j < size(); ++j) {
            if (support.row(i) == support.row(j)) throw ConfigError("DiscreteDistribution", "repeated support point");
        }
    }
}

DiscreteDistribution DiscreteDistribution::empty(Index dim) { return {Matrix(0, dim), Vector(0)}; }

DiscreteDistribution DiscreteDistribution::point(std::initializer_list<Scalar> x) {
    Matrix s(1, static_cast<Index>(x.size()));
    Index k = 0;
    for (Scalar v : x) s(0, k++) = v;
    return {s, Vector::Ones(1)};
}

Vector optimal_score_posterior(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                               const Vector& x_tilde, double sigma) {
    if (!(sigma > 0)) throw ConfigError("optimal_score_posterior", "sigma must be positive");
    const Index d = x_tilde.size();
    if ((p_data.size() && p_data.dim() != d) || (p_g.size() && p_g.dim() != d)) {
        throw ShapeError("optimal_score_posterior", "support dimension differs from the query point");
    }
    const Vector wd = raw_weights(p_data, x_tilde, sigma);
    const Vector wg = raw_weights(p_g, x_tilde, sigma);
    const double total = static_cast<double>(wd.sum() + wg.sum());
    if (!(total > 0)) throw NumericError("optimal_score_posterior", "posterior weight underflows at this point");
    // Fake points contribute target mean 0, so only real points add to the sum.
    Vector num = Vector::Zero(d);
    for (Index i = 0; i < p_data.size(); ++i) {
        num += wd[i] * (x_tilde - p_data.support.row(i).transpose()) / static_cast<Scalar>(sigma);
    }
    return num / static_cast<Scalar>(total);
}

Vector optimal_score_posterior(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                               const Vector& x_tilde, int t, const NoiseSchedule& schedule) {
    return optimal_score_posterior(p_data, p_g, x_tilde, schedule.sigma(t));
}

Prop1Deviation verify_prop1(const ScoreModel& score, const DiscreteDistribution& p_data,
                            const DiscreteDistribution& p_g, int t, const NoiseSchedule& schedule,
                            const Matrix& grid) {
    const double sigma = schedule.sigma(t);
    const Index n = grid.rows();
    std::vector<double> log_w(static_cast<std::size_t>(n));
    double best = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
        log_w[static_cast<std::size_t>(i)] = log_total_weight(p_data, p_g, grid.row(i).transpose(), sigma);
        best = std::max(best, log_w[static_cast<std::size_t>(i)]);
    }
    Tensor prediction;
    {
        NoGradGuard no_grad;
        Vector flat = Eigen::Map<const Vector>(grid.data(), grid.size());
        prediction = score.predict(Tensor::from(Shape{n, grid.cols()}, std::move(flat)), t, ParamMode::Frozen);
    }
    const ConstMatrixMap pred(prediction.data().data(), n, grid.cols());
    Prop1Deviation out;
    const double cutoff = best + std::log(1e-4);
    for (Index i = 0; i < n; ++i) {
        if (log_w[static_cast<std::size_t>(i)] < cutoff) continue;
        const Vector x = grid.row(i).transpose();
        const Vector opt = optimal_score_posterior(p_data, p_g, x, sigma);
        out.max_deviation =
            std::max(out.max_deviation, static_cast<double>((pred.row(i).transpose() - opt).norm()));
        ++out.points_used;
    }
    return out;
}

ScoreNet train_score_against_fixed_fake(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                                        const NoiseSchedule& schedule, const Prop1Training& options) {
    if (p_data.size() == 0 || p_g.size() == 0) {
        throw ConfigError("train_score_against_fixed_fake", "both distributions need support");
    }
    const Index d = p_data.dim();
    ScoreArch arch;
    arch.body = MlpScoreArch{static_cast<int>(d), {options.hidden, options.hidden}, Activation::LeakyRelu};
    ScoreNet net(arch, stream_seed(options.seed, "prop1-init"));
    AdamOptions adam_options;
    adam_options.learning_rate = static_cast<Scalar>(options.learning_rate);
    AdamState adam = make_adam_state(net.params().tensors(), adam_options);
    Engine points(stream_seed(options.seed, "prop1-points"));
    Engine noise(stream_seed(options.seed, "prop1-noise"));
    const double sigma = schedule.sigma(options.t);
    const int decay_step = static_cast<int>(options.decay_at * options.steps);
    const Shape shape{options.batch_size, d};

    for (int step = 0; step < options.steps; ++step) {
        if (step == decay_step) adam.options.learning_rate = static_cast<Scalar>(options.learning_rate / 10);
        const Tensor real = draw_points(p_data, options.batch_size, points);
        const Tensor fake = draw_points(p_g, options.batch_size, points);
        const Tensor eps1 = randn(noise, shape);
        const Tensor eps2 = randn(noise, shape);
        const Tensor eps3 = randn(noise, shape);
        const Scalar inv_n = Scalar(1) / static_cast<Scalar>(options.batch_size);
        const Tensor real_loss =
            squared_norm(net.predict(real + eps1 * static_cast<Scalar>(sigma), options.t) - eps1) * inv_n;
        const Tensor fake_loss =
            squared_norm(net.predict(fake + eps2 * static_cast<Scalar>(sigma), options.t) - eps3) * inv_n;
        net.params().zero_grad();
        backward(real_loss + fake_loss);
        adam_step(net.params().tensors(), adam);
    }
    return net;
}

NoiseCancellationResult noise_cancellation_experiment(const Vector& x, std::int64_t steps, double learning_rate,
                                                      double sigma, std::uint64_t seed, double noise_offset) {
    if (steps < 1) throw ConfigError("noise_cancellation_experiment", "need at least one step");
    Engine engine(stream_seed(seed, "noise-cancellation"));
    std::normal_distribution<double> normal;
    Eigen::VectorXd target = x.cast<double>();
    Eigen::VectorXd y = target.array() + 1.0;
    Eigen::VectorXd noisy(y.size());
    for (std::int64_t s = 0; s < steps; ++s) {
        for (Index k = 0; k < noisy.size(); ++k) noisy[k] = target[k] + (normal(engine) + noise_offset) * sigma;
        y -= learning_rate * 2.0 * (y - noisy);
    }
    return {(y - target).cwiseAbs().maxCoeff(), y.cast<Scalar>()};
}

Theorem1Estimate theorem1_bound_estimate(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g, int t,
                                         const NoiseSchedule& schedule, Index mc_samples, std::uint64_t seed) {
    if (mc_samples < 1) throw ConfigError("theorem1_bound_estimate", "need at least one sample");
    if (p_g.size() == 0) throw ConfigError("theorem1_bound_estimate", "p_g needs support");
    const double sigma = schedule.sigma(t);
    const Index d = p_g.dim();
    Engine engine(stream_seed(seed, "theorem1"));
    std::normal_distribution<double> normal;
    Matrix eps(mc_samples, d);
    for (Index i = 0; i < mc_samples; ++i) {
        for (Index k = 0; k < d; ++k) eps(i, k) = static_cast<Scalar>(normal(engine));
    }
    double l_g = 0;
    for (Index j = 0; j < p_g.size(); ++j) {
        if (p_g.probs[j] <= 0) continue;
        double acc = 0;
        for (Index i = 0; i < mc_samples; ++i) {
            const Vector e = eps.row(i).transpose();
            const Vector x = p_g.support.row(j).transpose() + e * static_cast<Scalar>(sigma);
            acc += static_cast<double>((optimal_score_posterior(p_data, p_g, x, sigma) - e).squaredNorm());
        }
        l_g += static_cast<double>(p_g.probs[j]) * acc / static_cast<double>(mc_samples);
    }
    return {l_g, same_distribution(p_data, p_g)};
}

}  // namespace smm
