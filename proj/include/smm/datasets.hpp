#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "smm/tensor.hpp"

namespace smm {

// Equal-weight mixture of 8 Gaussians with centres on a circle.
struct Gauss8 {
    double radius = 1.0;
    double std = 0.05;
    bool operator==(const Gauss8&) const = default;
};

struct TwoMoons {
    double noise = 0.05;
    bool operator==(const TwoMoons&) const = default;
};

struct SwissRoll2D {
    double noise = 0.05;
    bool operator==(const SwissRoll2D&) const = default;
};

// IDX files; `path` is a directory holding train-images-idx3-ubyte (and
// optionally train-labels-idx1-ubyte) or the image file itself.
struct Mnist {
    std::string path;
    std::optional<int> digit;
    bool operator==(const Mnist&) const = default;
};

struct DatasetSpec {
    std::variant<Gauss8, TwoMoons, SwissRoll2D, Mnist> kind = Gauss8{};
    // Rescale synthetic data into the open box (-1,1)^2.
    bool normalize = true;
    // Training-set size for synthetic data.
    Index size = 8192;
    bool operator==(const DatasetSpec&) const = default;
};

bool is_image(const DatasetSpec& spec);

// Scaled Gauss8 centres as an [8,2] matrix (the std = 0 support).
Matrix gauss8_centers(const Gauss8& g, bool normalize);

// n i.i.d. draws as [n,2]. With normalization, draws outside (-1,1)^2 are
// rejected and redrawn.
Tensor sample_synthetic(const DatasetSpec& spec, Index n, std::uint64_t seed);

struct IdxImages {
    Index count = 0;
    Index rows = 0;
    Index cols = 0;
    std::vector<std::uint8_t> pixels;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

struct MnistSet {
    Tensor images;  // [N,1,rows,cols] in [-1,1]
    std::vector<std::uint8_t> labels;
};

MnistSet load_mnist_idx(const std::filesystem::path& path, std::optional<int> digit = std::nullopt);

// v -> v / 127.5 - 1 for v in [0,255].
Tensor normalize_to_unit_range(std::span<const Scalar> values, Shape shape);

// Mirrors the selected samples of an [N,C,H,W] batch along the width axis.
Tensor hflip(const Tensor& images, const std::vector<bool>& mask);

// Finite training set served in shuffled epochs. The batch at a given
// iteration is a pure function of (seed, iteration).
class Dataset {
public:
    Dataset(Tensor samples, std::uint64_t seed);

    Tensor batch(std::int64_t iteration, Index batch_size) const;
    Index size() const { return samples_.dim(0); }
    Shape sample_shape() const;
    const Tensor& samples() const { return samples_; }

private:
    const std::vector<Index>& permutation(std::int64_t epoch) const;

    Tensor samples_;
    std::uint64_t seed_;
    mutable std::int64_t cached_epoch_ = -1;
    mutable std::vector<Index> cached_perm_;
};

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Real samples disjoint from the training stream: fresh synthetic draws, or
// a seeded subset of the image set.
Tensor heldout_samples(const DatasetSpec& spec, Index n, std::uint64_t seed);

// Gathers the given rows (first axis) of x.
Tensor take_rows(const Tensor& x, std::span<const Index> rows);

}  // namespace smm
