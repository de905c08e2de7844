#pragma once

#include <vector>

#include "smm/tensor.hpp"

namespace smm {

// Linear beta ladder with alpha_bar_t = prod_{i<=t}(1 - beta_i) and
// sigma_t = sqrt(1 - alpha_bar_t). Steps are 1-based.
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;
    std::vector<double> sigmas;

    double beta(int t) const { return betas.at(index(t)); }
    double alpha_bar(int t) const { return alpha_bars.at(index(t)); }
    double sigma(int t) const { return sigmas.at(index(t)); }

    std::size_t index(int t) const;
};

inline constexpr int kDefaultSteps = 10;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.02;

NoiseSchedule build_schedule(int steps = kDefaultSteps, double beta_min = kDefaultBetaMin,
                             double beta_max = kDefaultBetaMax);

}  // namespace smm
