#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ee {

// Seeded deterministic random stream. The generator is std::mt19937_64 (fully
// specified by the standard) and every derived draw below is built from raw
// 64-bit outputs with fixed arithmetic, so identical seeds give identical
// streams everywhere. A stream is single-owner; parallel consumers take
// child(i) substreams instead of sharing one.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t bits() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; pairs are cached.
    double normal();

    // Uniform integer in [0, n) by rejection (unbiased).
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

    // k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // Independent substream for parallel work unit `index`.
    Rng child(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ee
