#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nexusflow/coupling.hpp"
#include "nexusflow/matrix.hpp"
#include "nexusflow/prng.hpp"

namespace nexusflow {

struct MmdResult {
    double mmd_sq = 0.0;  // unbiased; may be slightly negative
    double bandwidth = 1.0;
    std::size_t n_x = 0;
    std::size_t n_y = 0;
};

/// Unbiased squared MMD with the Gaussian kernel exp(-|a-b|^2 / (2 sigma^2)).
/// For equal sample sizes the paired U-statistic (all i == j terms dropped,
/// cross terms included) is used; otherwise only the within-sample diagonals
/// are dropped. Without a bandwidth, sigma is the median pairwise distance of
/// the pooled sample (1 if that median is 0).
MmdResult mmd_rbf(const Matrix& x, const Matrix& y, std::optional<double> bandwidth = std::nullopt);
double median_pairwise_distance(const Matrix& pooled);

/// exp(entropy) of the normalized spectrum, in [1, d].
double effective_rank(std::span<const double> eigenvalues);

/// Centered projection onto the top two principal components.
Matrix project_2d(const Matrix& data);

struct PairSet {
    Matrix first;
    Matrix second;
};

// Uniform samples from the ball of the given radius.
Matrix sample_ball(Prng& prng, std::size_t n, std::size_t dim, double radius);
// First point uniform in the ball; second offset from it by a log-uniform
// distance in [1e-3 r, r] in a random direction that keeps it in the ball.
PairSet sample_pairs(Prng& prng, std::size_t n, std::size_t dim, double radius);

/// Largest ratio |c^-1(z) - c^-1(z')| / |z - z'| over the pairs. Coincident
/// pairs are skipped; throws if nothing is left.
double lipschitz_from_pairs(const CouplingStack& stack, const PairSet& pairs);
double estimate_lipschitz(const CouplingStack& stack, Prng& prng, std::size_t n_pairs, double radius);

/// Largest |a^-1(z) - b^-1(z)| over the rows of z.
double delta_from_points(const CouplingStack& a, const CouplingStack& b, const Matrix& z);
double estimate_delta(const CouplingStack& a, const CouplingStack& b, Prng& prng, std::size_t n_samples, double radius);

struct LemmaReport {
    double lipschitz_hat = 0.0;
    double delta_hat = 0.0;
    std::size_t violations = 0;
    std::size_t pairs_checked = 0;
    double safety_factor = 1.0;
    // Pairs where |h1 - h2| exceeded |a^-1 z1 - a^-1 z2| + |a^-1 z2 - b^-1 z2|
    // beyond roundoff. Must always be zero.
    std::size_t triangle_violations = 0;
    // max over pairs of |h1 - h2| / bound
    double worst_ratio = 0.0;
};

/// For each held-out pair (z1, z2), h1 = a^-1(z1), h2 = b^-1(z2) is checked
/// against safety * L * |z1 - z2| + delta.
LemmaReport lemma_bound_check(const CouplingStack& a, const CouplingStack& b, const PairSet& held_out,
                              double lipschitz_hat, double delta_hat, double safety);

}  // namespace nexusflow
