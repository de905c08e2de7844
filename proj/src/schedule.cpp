#include "smm/schedule.hpp"

#include <cmath>
#include <string>

namespace smm {

std::size_t NoiseSchedule::index(int t) const {
    if (t < 1 || t > steps) {
        throw ConfigError("schedule", "step " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
    }
    return static_cast<std::size_t>(t - 1);
}

NoiseSchedule build_schedule(int steps, double beta_min, double beta_max) {
    if (steps < 1) throw ConfigError("build_schedule", "T must be >= 1, got " + std::to_string(steps));
    if (!(beta_min > 0) || !(beta_max < 1) || !(beta_min <= beta_max)) {
        throw ConfigError("build_schedule", "need 0 < beta_min <= beta_max < 1, got " + std::to_string(beta_min) +
                                                ", " + std::to_string(beta_max));
    }
    NoiseSchedule s;
    s.steps = steps;
    double product = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double beta =
            steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * static_cast<double>(i) / (steps - 1);
        product *= 1.0 - beta;
        s.betas.push_back(beta);
        s.alpha_bars.push_back(product);
        s.sigmas.push_back(std::sqrt(1.0 - product));
    }
    return s;
}

}  // namespace smm
