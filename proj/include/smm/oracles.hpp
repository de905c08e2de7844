#pragma once

#include <cstdint>
#include <vector>

#include "smm/networks.hpp"
#include "smm/schedule.hpp"
#include "smm/tensor.hpp"

namespace smm {

// Finite-support probability mass over points in R^d (support rows).
struct DiscreteDistribution {
    Matrix support;  // [k, d]
    Vector probs;    // [k]

    // Validates: probs >= 0 summing to 1 within 1e-12, distinct points.
    // An empty distribution (k = 0) is allowed and contributes nothing.
    DiscreteDistribution(Matrix support, Vector probs);
    static DiscreteDistribution empty(Index dim);
    static DiscreteDistribution point(std::initializer_list<Scalar> x);

    Index size() const { return support.rows(); }
    Index dim() const { return support.cols(); }
};

// L2-optimal prediction of a score net at x_tilde when real samples are
// regressed onto their corruption noise and fake samples onto an
// independent draw: the posterior mean of the target given x_tilde.
// Throws NumericError when every posterior weight underflows.
Vector optimal_score_posterior(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                               const Vector& x_tilde, double sigma);
Vector optimal_score_posterior(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                               const Vector& x_tilde, int t, const NoiseSchedule& schedule);

struct Prop1Deviation {
    double max_deviation = 0;
    Index points_used = 0;
};

// Max over grid rows of |S(x,t) - optimal(x)|, restricted to points whose
// total posterior weight is at least 1e-4 of the largest on the grid.
Prop1Deviation verify_prop1(const ScoreModel& score, const DiscreteDistribution& p_data,
                            const DiscreteDistribution& p_g, int t, const NoiseSchedule& schedule,
                            const Matrix& grid);

// Score net trained on the two score terms only, with the generator
// replaced by draws from a fixed p_g.
struct Prop1Training {
    int steps = 20000;
    Index batch_size = 256;
    double learning_rate = 1e-3;
    // Fraction of steps after which the learning rate drops 10x.
    double decay_at = 0.75;
    int hidden = 64;
    int t = 10;
    std::uint64_t seed = 0;
};
ScoreNet train_score_against_fixed_fake(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                                        const NoiseSchedule& schedule, const Prop1Training& options);

// SGD on a free vector y with loss |y - (x + (eps + offset) sigma)|^2, fresh
// eps each step, starting from x + 1. Returns |y_final - x|_inf.
struct NoiseCancellationResult {
    double final_error = 0;
    Vector y;
};
NoiseCancellationResult noise_cancellation_experiment(const Vector& x, std::int64_t steps, double learning_rate,
                                                      double sigma, std::uint64_t seed, double noise_offset = 0.0);

struct Theorem1Estimate {
    double l_g = 0;
    bool at_equality = false;
};

// l_G = E_{x~p_g, eps} |S*(x + eps sigma) - eps|^2 with S* the optimal
// score for (p_data, p_g). Exact over the support of p_g, Monte Carlo over
// eps; the same eps draws are used for every support point.
Theorem1Estimate theorem1_bound_estimate(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g, int t,
                                         const NoiseSchedule& schedule, Index mc_samples, std::uint64_t seed);

}  // namespace smm
