#pragma once

#include <cstdint>
#include <random>

namespace sonoedit {

// SplitMix64 finalizer; used to derive independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed-splitting rule shared by every component:
//   derive_seed(seed, stream) = splitmix64(seed ^ splitmix64(stream + 1))
// Streams are small integers naming a consumer (model init, corpus, trial i).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Deterministic generator over std::mt19937_64. The standard distributions
// are implementation-defined, so uniform and Gaussian draws are built here
// directly on the raw 64-bit stream to stay bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sonoedit
