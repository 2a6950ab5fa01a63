#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "nexusflow/matrix.hpp"

namespace nexusflow {

/// xoshiro256++ seeded through splitmix64. The stream depends only on the
/// seed, so experiments replay identically; never share one across threads.
class Prng {
public:
    explicit Prng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();
    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal();
    // Uniform integer in [0, n) by rejection, n >= 1.
    std::uint64_t below(std::uint64_t n);

    // Independent stream for a named purpose (data, init, shuffle...).
    Prng fork(std::uint64_t stream) const;

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::array<std::uint64_t, 4> s_{};
    std::uint64_t seed_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// rows x cols matrix of i.i.d. standard normals.
Matrix gaussian(Prng& prng, std::size_t rows, std::size_t cols);

}  // namespace nexusflow
