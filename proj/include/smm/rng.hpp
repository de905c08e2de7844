#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "smm/tensor.hpp"

namespace smm {

using Engine = std::mt19937_64;

// Deterministic seed for a named substream of a master seed.
std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view name, std::uint64_t salt = 0);

// Standard-normal tensor. Each call starts a fresh distribution so the draw
// depends on the engine state alone.
Tensor randn(Engine& engine, Shape shape);
Tensor rand_uniform(Engine& engine, Shape shape, Scalar low, Scalar high);

// Independent named substreams for one training run. Every random draw of a
// training step comes from its own stream, so no two loss terms share a draw.
class RngStreams {
public:
    static constexpr std::string_view kNames[] = {"z1", "z2", "eps1", "eps2", "eps3", "eps4", "eps5", "t", "hflip"};

    RngStreams() = default;
    explicit RngStreams(std::uint64_t master_seed);

    Engine& stream(std::string_view name);
    std::uint64_t master_seed() const { return master_seed_; }

    // Textual engine states keyed by stream name; round-trips exactly.
    std::map<std::string, std::string> serialize() const;
    static RngStreams deserialize(std::uint64_t master_seed, const std::map<std::string, std::string>& states);

    bool operator==(const RngStreams& other) const;

private:
    std::uint64_t master_seed_ = 0;
    std::map<std::string, Engine, std::less<>> streams_;
};

}  // namespace smm
