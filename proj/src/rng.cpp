#include "smm/rng.hpp"

#include <sstream>

namespace smm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view name, std::uint64_t salt) {
    return splitmix64(splitmix64(master_seed) ^ fnv1a(name) ^ splitmix64(salt + 0x5851F42D4C957F2DULL));
}

Tensor randn(Engine& engine, Shape shape) {
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    Vector v(numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = normal(engine);
    return Tensor::from(std::move(shape), std::move(v));
}

Tensor rand_uniform(Engine& engine, Shape shape, Scalar low, Scalar high) {
    std::uniform_real_distribution<Scalar> uniform(low, high);
    Vector v(numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = uniform(engine);
    return Tensor::from(std::move(shape), std::move(v));
}

RngStreams::RngStreams(std::uint64_t master_seed) : master_seed_(master_seed) {
    for (auto name : kNames) streams_.emplace(std::string(name), Engine(stream_seed(master_seed, name)));
}

Engine& RngStreams::stream(std::string_view name) {
    auto it = streams_.find(name);
    if (it == streams_.end()) throw ConfigError("rng", "unknown stream '" + std::string(name) + "'");
    return it->second;
}

std::map<std::string, std::string> RngStreams::serialize() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, engine] : streams_) {
        std::ostringstream os;
        os << engine;
        out.emplace(name, os.str());
    }
    return out;
}

RngStreams RngStreams::deserialize(std::uint64_t master_seed, const std::map<std::string, std::string>& states) {
    RngStreams r(master_seed);
    for (const auto& [name, text] : states) {
        std::istringstream is(text);
        Engine e;
        is >> e;
        if (is.fail()) throw FormatError("rng", "corrupt engine state for stream '" + name + "'");
        r.stream(name) = e;
    }
    return r;
}

bool RngStreams::operator==(const RngStreams& other) const {
    return master_seed_ == other.master_seed_ && streams_ == other.streams_;
}

}  // namespace smm
