#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace ceda {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream`, item `index` under a base seed. Every stage of a
/// pipeline draws from derive_seed(global_seed, stage) so partial re-runs see
/// the same randomness.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

/// Portable random source. All draws are defined in terms of raw 64-bit
/// mt19937_64 outputs so results do not depend on the standard library's
/// distribution implementations:
///   index(n)   rejection sampling, x % n after discarding x < (2^64 - n) % n
///   uniform()  (x >> 11) * 2^-53
///   normal()   Box-Muller on two uniforms, second variate cached
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    std::size_t index(std::size_t n);
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Fisher-Yates from the back: for i = n-1..1 swap(v[i], v[index(i + 1)]).
template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const std::size_t j = rng.index(i);
        using std::swap;
        swap(values[i - 1], values[j]);
    }
}

}  // namespace ceda
