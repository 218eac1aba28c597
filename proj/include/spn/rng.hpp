#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spn {

// Seeded PRNG with self-contained sampling helpers. std::uniform_*_distribution
// and std::shuffle are implementation-defined, so every draw goes through this
// wrapper to keep seeded runs bit-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], both ends inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(gen_()); // full 64-bit span
        const auto scaled = static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_()) * range) >> 64);
        return lo + static_cast<std::int64_t>(scaled);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates, fixed iteration order.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

} // namespace spn
