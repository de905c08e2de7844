#include "smm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>

#include "smm/rng.hpp"

namespace smm {

namespace {

constexpr Index kMaxRejections = 1000;

double gauss8_scale(const Gauss8& g) { return 0.8 / (g.radius + 3.0 * g.std); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("idx", "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& path) {
    if (bytes.size() < offset + 4) throw FormatError("idx", "truncated header in '" + path + "'");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08X", v);
    return buf;
}

void check_magic(std::uint32_t got, std::uint32_t expected, const std::string& path) {
    if (got != expected) {
        throw FormatError("idx", "bad magic " + hex(got) + " in '" + path + "', expected " + hex(expected));
    }
}

std::filesystem::path resolve_images(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return path / "train-images-idx3-ubyte";
    return path;
}

std::filesystem::path resolve_labels(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return path / "train-labels-idx1-ubyte";
    auto name = path.filename().string();
    if (auto pos = name.find("images-idx3"); pos != std::string::npos) {
        name.replace(pos, 11, "labels-idx1");
        return path.parent_path() / name;
    }
    return {};
}

// One raw (unnormalized) 2D draw.
Eigen::Vector2d draw_raw(const DatasetSpec& spec, Engine& engine) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    if (const auto* g = std::get_if<Gauss8>(&spec.kind)) {
        const int k = static_cast<int>(std::uniform_int_distribution<int>(0, 7)(engine));
        const double angle = 2.0 * std::numbers::pi * k / 8.0;
        const double nx = normal(engine);
        const double ny = normal(engine);
        return {g->radius * std::cos(angle) + g->std * nx, g->radius * std::sin(angle) + g->std * ny};
    }
    if (const auto* m = std::get_if<TwoMoons>(&spec.kind)) {
        const bool upper = uniform(engine) < 0.5;
        const double a = std::numbers::pi * uniform(engine);
        const double nx = normal(engine);
        const double ny = normal(engine);
        Eigen::Vector2d p = upper ? Eigen::Vector2d(std::cos(a), std::sin(a))
                                  : Eigen::Vector2d(1.0 - std::cos(a), 0.5 - std::sin(a));
        return p + m->noise * Eigen::Vector2d(nx, ny);
    }
    const auto& s = std::get<SwissRoll2D>(spec.kind);
    const double a = 1.5 * std::numbers::pi * (1.0 + 2.0 * uniform(engine));
    const double nx = normal(engine);
    const double ny = normal(engine);
    return Eigen::Vector2d(a * std::cos(a), a * std::sin(a)) + s.noise * Eigen::Vector2d(nx, ny);
}

Eigen::Vector2d normalize_point(const DatasetSpec& spec, const Eigen::Vector2d& p) {
    if (const auto* g = std::get_if<Gauss8>(&spec.kind)) return p * gauss8_scale(*g);
    if (std::holds_alternative<TwoMoons>(spec.kind)) return (p - Eigen::Vector2d(0.5, 0.25)) * 0.6;
    return p * (0.9 / (4.5 * std::numbers::pi));
}

}  // namespace

bool is_image(const DatasetSpec& spec) { return std::holds_alternative<Mnist>(spec.kind); }

Matrix gauss8_centers(const Gauss8& g, bool normalize) {
    Matrix c(8, 2);
    const double s = normalize ? gauss8_scale(g) : 1.0;
    for (int k = 0; k < 8; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / 8.0;
        c(k, 0) = static_cast<Scalar>(g.radius * std::cos(angle) * s);
        c(k, 1) = static_cast<Scalar>(g.radius * std::sin(angle) * s);
    }
    return c;
}

Tensor sample_synthetic(const DatasetSpec& spec, Index n, std::uint64_t seed) {
    if (is_image(spec)) throw ConfigError("sample_synthetic", "image datasets are loaded, not sampled");
    if (n < 1) throw ConfigError("sample_synthetic", "n must be >= 1");
    if (const auto* g = std::get_if<Gauss8>(&spec.kind); g && (g->std < 0 || !(g->radius > 0))) {
        throw ConfigError("sample_synthetic", "gauss8 needs radius > 0 and std >= 0");
    }
    if (const auto* m = std::get_if<TwoMoons>(&spec.kind); m && m->noise < 0) {
        throw ConfigError("sample_synthetic", "noise must be >= 0");
    }
    if (const auto* s = std::get_if<SwissRoll2D>(&spec.kind); s && s->noise < 0) {
        throw ConfigError("sample_synthetic", "noise must be >= 0");
    }
    Engine engine(stream_seed(seed, "synthetic"));
    Vector out(2 * n);
    for (Index i = 0; i < n; ++i) {
        Eigen::Vector2d p;
        for (Index attempt = 0;; ++attempt) {
            p = draw_raw(spec, engine);
            if (!spec.normalize) break;
            p = normalize_point(spec, p);
            if (std::abs(p.x()) < 1.0 && std::abs(p.y()) < 1.0) break;
            if (attempt > kMaxRejections) throw ConfigError("sample_synthetic", "noise too large to fit (-1,1)");
        }
        out[2 * i] = static_cast<Scalar>(p.x());
        out[2 * i + 1] = static_cast<Scalar>(p.y());
    }
    return Tensor::from(Shape{n, 2}, std::move(out));
}

IdxImages read_idx_images(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const auto name = path.string();
    if (bytes.empty()) throw FormatError("idx", "truncated file '" + name + "' (empty)");
    check_magic(read_be32(bytes, 0, name), kIdxImageMagic, name);
    IdxImages img;
    img.count = read_be32(bytes, 4, name);
    img.rows = read_be32(bytes, 8, name);
    img.cols = read_be32(bytes, 12, name);
    const std::size_t expected = static_cast<std::size_t>(img.count * img.rows * img.cols);
    if (bytes.size() - 16 < expected) {
        throw FormatError("idx", "truncated file '" + name + "': header declares " + std::to_string(img.count) +
                                     " images, payload holds " + std::to_string(bytes.size() - 16) + " bytes");
    }
    if (bytes.size() - 16 > expected) {
        throw FormatError("idx", "count mismatch in '" + name + "': trailing bytes after " +
                                     std::to_string(img.count) + " images");
    }
    img.pixels.assign(bytes.begin() + 16, bytes.end());
    return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const auto name = path.string();
    if (bytes.empty()) throw FormatError("idx", "truncated file '" + name + "' (empty)");
    check_magic(read_be32(bytes, 0, name), kIdxLabelMagic, name);
    const std::size_t count = read_be32(bytes, 4, name);
    if (bytes.size() - 8 != count) {
        throw FormatError("idx", "count mismatch in '" + name + "': header declares " + std::to_string(count) +
                                     " labels, payload holds " + std::to_string(bytes.size() - 8));
    }
    return {bytes.begin() + 8, bytes.end()};
}

MnistSet load_mnist_idx(const std::filesystem::path& path, std::optional<int> digit) {
    const IdxImages img = read_idx_images(resolve_images(path));
    std::vector<std::uint8_t> labels;
    const auto label_path = resolve_labels(path);
    if (!label_path.empty() && std::filesystem::exists(label_path)) {
        labels = read_idx_labels(label_path);
        if (static_cast<Index>(labels.size()) != img.count) {
            throw FormatError("idx", "label count " + std::to_string(labels.size()) + " != image count " +
                                         std::to_string(img.count));
        }
    } else if (digit) {
        throw FormatError("idx", "digit filter needs a label file next to '" + path.string() + "'");
    }
    const Index plane = img.rows * img.cols;
    std::vector<Index> keep;
    for (Index i = 0; i < img.count; ++i) {
        if (!digit || labels[static_cast<std::size_t>(i)] == *digit) keep.push_back(i);
    }
    if (keep.empty()) throw FormatError("idx", "no images selected from '" + path.string() + "'");
    std::vector<Scalar> values;
    values.reserve(keep.size() * static_cast<std::size_t>(plane));
    MnistSet set;
    for (Index i : keep) {
        const auto* p = img.pixels.data() + i * plane;
        values.insert(values.end(), p, p + plane);
        if (!labels.empty()) set.labels.push_back(labels[static_cast<std::size_t>(i)]);
    }
    set.images = normalize_to_unit_range(values, Shape{static_cast<Index>(keep.size()), 1, img.rows, img.cols});
    return set;
}

Tensor normalize_to_unit_range(std::span<const Scalar> values, Shape shape) {
    Vector out(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Scalar v = values[i];
        if (!(v >= 0 && v <= 255)) {
            throw ConfigError("normalize_to_unit_range", "value " + std::to_string(v) + " outside [0,255]");
        }
        out[static_cast<Index>(i)] = v / Scalar(127.5) - Scalar(1);
    }
    return Tensor::from(std::move(shape), std::move(out));
}

Tensor hflip(const Tensor& images, const std::vector<bool>& mask) {
    if (images.rank() != 4) throw ShapeError("hflip", "expected [N,C,H,W], got " + to_string(images.shape()));
    if (static_cast<Index>(mask.size()) != images.dim(0)) {
        throw ShapeError("hflip", "mask has " + std::to_string(mask.size()) + " entries for " +
                                      std::to_string(images.dim(0)) + " samples");
    }
    const Index c = images.dim(1), h = images.dim(2), w = images.dim(3);
    Vector out = images.data();
    const Vector& in = images.data();
    for (Index n = 0; n < images.dim(0); ++n) {
        if (!mask[static_cast<std::size_t>(n)]) continue;
        for (Index row = 0; row < c * h; ++row) {
            const Index base = (n * c * h + row) * w;
            for (Index j = 0; j < w; ++j) out[base + j] = in[base + w - 1 - j];
        }
    }
    return Tensor::from(images.shape(), std::move(out));
}

Dataset::Dataset(Tensor samples, std::uint64_t seed) : samples_(std::move(samples)), seed_(seed) {
    if (!samples_.defined() || samples_.rank() < 2) throw ShapeError("dataset", "samples must be [N,...]");
}

Shape Dataset::sample_shape() const { return Shape(samples_.shape().begin() + 1, samples_.shape().end()); }

const std::vector<Index>& Dataset::permutation(std::int64_t epoch) const {
    if (epoch != cached_epoch_) {
        cached_perm_.resize(static_cast<std::size_t>(size()));
        std::iota(cached_perm_.begin(), cached_perm_.end(), Index{0});
        Engine engine(stream_seed(seed_, "data-shuffle", static_cast<std::uint64_t>(epoch)));
        // Fisher-Yates with an explicit draw so the order does not depend on
        // the standard library's shuffle.
        for (Index i = size() - 1; i > 0; --i) {
            const auto j = static_cast<Index>(engine() % static_cast<std::uint64_t>(i + 1));
            std::swap(cached_perm_[static_cast<std::size_t>(i)], cached_perm_[static_cast<std::size_t>(j)]);
        }
        cached_epoch_ = epoch;
    }
    return cached_perm_;
}

Tensor Dataset::batch(std::int64_t iteration, Index batch_size) const {
    if (batch_size < 1) throw ConfigError("dataset", "batch size must be >= 1");
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(batch_size));
    for (Index k = 0; k < batch_size; ++k) {
        const std::int64_t position = iteration * batch_size + k;
        const auto& perm = permutation(position / size());
        rows.push_back(perm[static_cast<std::size_t>(position % size())]);
    }
    return take_rows(samples_, rows);
}

Tensor take_rows(const Tensor& x, std::span<const Index> rows) {
    const Index stride = x.numel() / x.dim(0);
    Vector out(static_cast<Index>(rows.size()) * stride);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= x.dim(0)) throw ShapeError("take_rows", "row index out of range");
        out.segment(static_cast<Index>(k) * stride, stride) = x.data().segment(rows[k] * stride, stride);
    }
    Shape shape = x.shape();
    shape[0] = static_cast<Index>(rows.size());
    return Tensor::from(std::move(shape), std::move(out));
}

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (const auto* m = std::get_if<Mnist>(&spec.kind)) return Dataset(load_mnist_idx(m->path, m->digit).images, seed);
    if (spec.size < 1) throw ConfigError("dataset", "size must be >= 1");
    return Dataset(sample_synthetic(spec, spec.size, stream_seed(seed, "train-set")), seed);
}

Tensor heldout_samples(const DatasetSpec& spec, Index n, std::uint64_t seed) {
    if (const auto* m = std::get_if<Mnist>(&spec.kind)) {
        const Tensor all = load_mnist_idx(m->path, m->digit).images;
        Engine engine(stream_seed(seed, "heldout"));
        std::vector<Index> rows;
        for (Index k = 0; k < n; ++k) {
            rows.push_back(static_cast<Index>(engine() % static_cast<std::uint64_t>(all.dim(0))));
        }
        return take_rows(all, rows);
    }
    return sample_synthetic(spec, n, stream_seed(seed, "heldout"));
}

}  // namespace smm
