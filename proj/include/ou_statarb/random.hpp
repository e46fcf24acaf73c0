#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace ou_statarb::rng {

using Engine = std::mt19937_64;

/// splitmix64 finalizer; decorrelates (seed, stream) pairs.
constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of stream `index` under a base seed. Streams depend only on
/// (base, index), never on scheduling, so parallel runs are reproducible.
constexpr std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index, std::uint64_t lane = 0) {
    return mix(mix(base) ^ mix(index * 0xD1342543DE82EF95ULL + lane));
}

inline Engine make_engine(std::uint64_t base, std::uint64_t index, std::uint64_t lane = 0) {
    return Engine(stream_seed(base, index, lane));
}

/// Standard normal draws (ziggurat).
class Gaussian {
public:
    explicit Gaussian(Engine engine) : engine_(engine) {}
    double operator()() { return dist_(engine_); }

private:
    Engine engine_;
    boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

class Uniform01 {
public:
    explicit Uniform01(Engine engine) : engine_(engine) {}
    double operator()() { return dist_(engine_); }

private:
    Engine engine_;
    boost::random::uniform_01<double> dist_;
};

}  // namespace ou_statarb::rng
