#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ccam {

/// Seed-reproducible generator used by every stochastic routine.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The seed is mixed with a stream id through splitmix64 so that
/// independent consumers of one user seed (parameters, signals, datasets)
/// do not share raw draws. Uniform and Gaussian transforms are written out
/// here rather than taken from <random> distributions, whose algorithms are
/// implementation-defined.
class Rng {
public:
    static constexpr std::string_view algorithm =
        "mt19937_64/splitmix64-seeded; uniform=53-bit; normal=box-muller";

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();

    /// Fisher-Yates shuffle with this generator.
    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::iter_swap(first + (i - 1), first + j);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stream ids for the generators derived from one experiment seed.
inline constexpr std::uint64_t kParamStream = 1;
inline constexpr std::uint64_t kSignalStream = 2;
inline constexpr std::uint64_t kDatasetStream = 3;
inline constexpr std::uint64_t kTrainStream = 4;
inline constexpr std::uint64_t kInputStream = 5;

}  // namespace ccam
