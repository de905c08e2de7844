#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smm/tensor.hpp"

namespace smm {

// Samples as rows: [N, ...] -> N x prod(rest), row-major.
Matrix as_rows(const Tensor& samples);

enum class MmdEstimator { Biased, Unbiased };

struct MmdResult {
    double value = 0;
    double bandwidth = 0;
};

// Median pairwise Euclidean distance over the union of a and b.
double median_pairwise_distance(const Matrix& a, const Matrix& b);

// Squared MMD with k(x,y) = exp(-|x-y|^2 / (2 h^2)). No bandwidth means the
// median heuristic. Unbiased drops the diagonal of the within-set sums.
MmdResult mmd_rbf(const Matrix& a, const Matrix& b, std::optional<double> bandwidth = std::nullopt,
                  MmdEstimator estimator = MmdEstimator::Unbiased);
MmdResult mmd_rbf(const Tensor& a, const Tensor& b, std::optional<double> bandwidth = std::nullopt,
                  MmdEstimator estimator = MmdEstimator::Unbiased);

// Exact 2-Wasserstein distance between two 1D empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

// Mean over random unit directions of the 1D W2 between the projections.
double sliced_wasserstein(const Matrix& a, const Matrix& b, int n_projections, std::uint64_t seed);
double sliced_wasserstein(const Tensor& a, const Tensor& b, int n_projections, std::uint64_t seed);

// Fraction of samples whose nearest centre is each row of `centers`.
std::vector<double> mode_coverage(const Matrix& samples, const Matrix& centers);

struct MetricRecord {
    std::string name;
    double value = 0;
    Index size_a = 0;
    Index size_b = 0;
    std::optional<double> bandwidth;
    std::uint64_t seed = 0;
};

}  // namespace smm
