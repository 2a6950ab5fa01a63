#include "nexusflow/prng.hpp"

#include <cmath>
#include <numbers>

#include "nexusflow/error.hpp"

namespace nexusflow {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Prng::Prng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Prng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Prng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Prng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Prng::below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "Prng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

Prng Prng::fork(std::uint64_t stream) const {
    std::uint64_t sm = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
    return Prng(splitmix64(sm));
}

Matrix gaussian(Prng& prng, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0)
        throw Error(ErrorKind::InvalidArgument, "gaussian: rows and cols must be >= 1");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = prng.normal();
    return m;
}

}  // namespace nexusflow
