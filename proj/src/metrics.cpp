#include "smm/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "smm/rng.hpp"

namespace smm {

namespace {

using DMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

DMatrix squared_distances(const DMatrix& a, const DMatrix& b) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    DMatrix d = -2.0 * a * b.transpose();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

void require_same_dim(const char* op, const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError(op, "sample dimensions differ: " + std::to_string(a.cols()) + " vs " +
                                 std::to_string(b.cols()));
    }
}

}  // namespace

Matrix as_rows(const Tensor& samples) {
    if (samples.rank() < 1) throw ShapeError("metrics", "samples need a batch axis");
    const Index n = samples.dim(0);
    const Index d = n ? samples.numel() / n : 0;
    return ConstMatrixMap(samples.data().data(), n, d);
}

double median_pairwise_distance(const Matrix& a, const Matrix& b) {
    require_same_dim("median_pairwise_distance", a, b);
    DMatrix all(a.rows() + b.rows(), a.cols());
    all << a.cast<double>(), b.cast<double>();
    const DMatrix d2 = squared_distances(all, all);
    std::vector<double> upper;
    upper.reserve(static_cast<std::size_t>(all.rows() * (all.rows() - 1) / 2));
    for (Index i = 0; i < all.rows(); ++i) {
        for (Index j = i + 1; j < all.rows(); ++j) upper.push_back(d2(i, j));
    }
    if (upper.empty()) throw ConfigError("median_pairwise_distance", "need at least two samples");
    auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
    std::nth_element(upper.begin(), mid, upper.end());
    return std::sqrt(*mid);
}

MmdResult mmd_rbf(const Matrix& a, const Matrix& b, std::optional<double> bandwidth, MmdEstimator estimator) {
    require_same_dim("mmd_rbf", a, b);
    if (a.rows() < 2 || b.rows() < 2) throw ConfigError("mmd_rbf", "each sample set needs at least 2 points");
    const double h = bandwidth ? *bandwidth : median_pairwise_distance(a, b);
    if (!(h > 0) || !std::isfinite(h)) throw ConfigError("mmd_rbf", "bandwidth must be positive and finite");
    const double gamma = 1.0 / (2.0 * h * h);
    const DMatrix da = a.cast<double>();
    const DMatrix db = b.cast<double>();

    const auto kernel_sum = [&](const DMatrix& x, const DMatrix& y, bool drop_diagonal) {
        const DMatrix k = (-gamma * squared_distances(x, y).array()).exp().matrix();
        double s = k.sum();
        if (drop_diagonal) s -= k.diagonal().sum();
        return s;
    };
    const double n = static_cast<double>(a.rows());
    const double m = static_cast<double>(b.rows());
    const bool unbiased = estimator == MmdEstimator::Unbiased;
    const double kaa = kernel_sum(da, da, unbiased) / (unbiased ? n * (n - 1) : n * n);
    const double kbb = kernel_sum(db, db, unbiased) / (unbiased ? m * (m - 1) : m * m);
    const double kab = kernel_sum(da, db, false) / (n * m);
    return {kaa + kbb - 2.0 * kab, h};
}

MmdResult mmd_rbf(const Tensor& a, const Tensor& b, std::optional<double> bandwidth, MmdEstimator estimator) {
    return mmd_rbf(as_rows(a), as_rows(b), bandwidth, estimator);
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigError("wasserstein_1d", "empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    // Integrate the squared quantile difference over the merged breakpoints
    // of the two step-function quantile curves.
    std::size_t i = 0, j = 0;
    double u = 0, total = 0;
    while (i < a.size() && j < b.size()) {
        const double next_a = static_cast<double>(i + 1) / n;
        const double next_b = static_cast<double>(j + 1) / m;
        const double next = std::min(next_a, next_b);
        const double diff = a[i] - b[j];
        total += (next - u) * diff * diff;
        u = next;
        if (next_a <= next) ++i;
        if (next_b <= next) ++j;
    }
    return std::sqrt(total);
}

double sliced_wasserstein(const Matrix& a, const Matrix& b, int n_projections, std::uint64_t seed) {
    require_same_dim("sliced_wasserstein", a, b);
    if (a.rows() == 0 || b.rows() == 0) throw ConfigError("sliced_wasserstein", "empty sample set");
    if (n_projections < 1) throw ConfigError("sliced_wasserstein", "need at least one projection");
    Engine engine(stream_seed(seed, "sliced-wasserstein"));
    std::normal_distribution<double> normal;
    const DMatrix da = a.cast<double>();
    const DMatrix db = b.cast<double>();
    double total = 0;
    for (int p = 0; p < n_projections; ++p) {
        Eigen::VectorXd dir(a.cols());
        do {
            for (Index k = 0; k < dir.size(); ++k) dir[k] = normal(engine);
        } while (dir.norm() == 0.0);
        dir.normalize();
        const Eigen::VectorXd pa = da * dir;
        const Eigen::VectorXd pb = db * dir;
        total += wasserstein_1d({pa.data(), pa.data() + pa.size()}, {pb.data(), pb.data() + pb.size()});
    }
    return total / n_projections;
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, int n_projections, std::uint64_t seed) {
    return sliced_wasserstein(as_rows(a), as_rows(b), n_projections, seed);
}

std::vector<double> mode_coverage(const Matrix& samples, const Matrix& centers) {
    require_same_dim("mode_coverage", samples, centers);
    std::vector<double> counts(static_cast<std::size_t>(centers.rows()), 0.0);
    if (samples.rows() == 0) return counts;
    for (Index i = 0; i < samples.rows(); ++i) {
        Index best = 0;
        (centers.rowwise() - samples.row(i)).rowwise().squaredNorm().minCoeff(&best);
        counts[static_cast<std::size_t>(best)] += 1;
    }
    for (auto& c : counts) c /= static_cast<double>(samples.rows());
    return counts;
}

}  // namespace smm
