#pragma once

#include <cstdint>
#include <random>

namespace casseg {

// Seeded generator with portable output: the engine is mt19937_64 and every
// distribution is computed here rather than through <random> distributions,
// whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent generator for a named stream of the same seed.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_index);

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                         // [0, 1)
    double uniform(double lo, double hi);     // [lo, hi)
    std::uint64_t below(std::uint64_t n);     // [0, n), unbiased
    double normal();                          // N(0, 1), Box-Muller
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace casseg
