#pragma once

#include <cstdint>
#include <random>

namespace ste {

// Deterministic random source. Every stochastic component takes an Rng (or a
// seed) explicitly; nothing in the library reads global entropy. Child
// streams derived via derive() depend only on the parent's seed and the child
// index, not on the parent's draw position, which keeps per-trajectory and
// per-trial results stable under any scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_base_(mix(seed)), engine_(seed_base_) {}

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::uint64_t next_u64() { return engine_(); }

    // Index in [0, n)
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    // Deterministic child stream for sub-task `k` (trajectory, trial, ...).
    Rng derive(std::uint64_t k) const {
        return Rng(seed_base_ ^ mix(k + 0x51ed270b35a4c2f1ULL));
    }

private:
    // splitmix64 finalizer; decorrelates consecutive seeds
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_base_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace ste
