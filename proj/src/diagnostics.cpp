#include "nexusflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "nexusflow/error.hpp"
#include "nexusflow/linalg.hpp"

namespace nexusflow {

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

}  // namespace

double median_pairwise_distance(const Matrix& pooled) {
    std::vector<double> d;
    d.reserve(pooled.rows() * (pooled.rows() - 1) / 2);
    for (std::size_t i = 0; i < pooled.rows(); ++i)
        for (std::size_t j = i + 1; j < pooled.rows(); ++j) d.push_back(std::sqrt(sq_distance(pooled.row(i), pooled.row(j))));
    if (d.empty()) return 0.0;
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    const double upper = d[mid];
    if (d.size() % 2 == 1) return upper;
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

MmdResult mmd_rbf(const Matrix& x, const Matrix& y, std::optional<double> bandwidth) {
    if (x.cols() != y.cols())
        throw Error(ErrorKind::ShapeMismatch, "mmd_rbf: " + x.shape() + " vs " + y.shape());
    if (x.rows() < 2 || y.rows() < 2)
        throw Error(ErrorKind::InvalidArgument, "mmd_rbf: need at least 2 samples per set");
    double sigma = 0.0;
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw Error(ErrorKind::InvalidArgument, "mmd_rbf: bandwidth must be positive");
        sigma = *bandwidth;
    } else {
        const Matrix parts[] = {x, y};
        sigma = median_pairwise_distance(vstack(parts));
        if (!(sigma > 0.0)) sigma = 1.0;
    }
    const double gamma = 1.0 / (2.0 * sigma * sigma);
    auto k = [gamma](std::span<const double> a, std::span<const double> b) { return std::exp(-gamma * sq_distance(a, b)); };

    const std::size_t m = x.rows();
    const std::size_t n = y.rows();
    double kxx = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) kxx += 2.0 * k(x.row(i), x.row(j));
    double kyy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) kyy += 2.0 * k(y.row(i), y.row(j));
    double kxy = 0.0;
    double kxy_diag = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = k(x.row(i), y.row(j));
            kxy += v;
            if (i == j) kxy_diag += v;
        }

    MmdResult r;
    r.bandwidth = sigma;
    r.n_x = m;
    r.n_y = n;
    const double dm = static_cast<double>(m);
    const double dn = static_cast<double>(n);
    if (m == n) {
        r.mmd_sq = (kxx + kyy - 2.0 * (kxy - kxy_diag)) / (dm * (dm - 1.0));
    } else {
        r.mmd_sq = kxx / (dm * (dm - 1.0)) + kyy / (dn * (dn - 1.0)) - 2.0 * kxy / (dm * dn);
    }
    return r;
}

double effective_rank(std::span<const double> eigenvalues) {
    double total = 0.0;
    for (double v : eigenvalues) {
        if (v < 0.0 || !std::isfinite(v))
            throw Error(ErrorKind::InvalidArgument, "effective_rank: eigenvalues must be finite and nonnegative");
        total += v;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::InvalidArgument, "effective_rank: all-zero spectrum");
    double entropy = 0.0;
    for (double v : eigenvalues) {
        if (v == 0.0) continue;
        const double p = v / total;
        entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

Matrix project_2d(const Matrix& data) {
    if (data.rows() < 3 || data.cols() < 2)
        throw Error(ErrorKind::InvalidArgument, "project_2d: need at least 3 rows and 2 columns, got " + data.shape());
    const auto eig = symmetric_eigen(covariance(data));
    const auto mean = column_means(data);
    Matrix out(data.rows(), 2);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        auto r = data.row(i);
        for (std::size_t c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < r.size(); ++k) s += (r[k] - mean[k]) * eig.vectors(k, c);
            out(i, c) = s;
        }
    }
    return out;
}

Matrix sample_ball(Prng& prng, std::size_t n, std::size_t dim, double radius) {
    if (n == 0 || dim == 0) throw Error(ErrorKind::InvalidArgument, "sample_ball: empty request");
    if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "sample_ball: radius must be positive");
    Matrix z(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = z.row(i);
        double norm = 0.0;
        do {
            for (double& v : r) v = prng.normal();
            norm = l2_norm(r);
        } while (norm == 0.0);
        const double scale = radius * std::pow(prng.uniform(), 1.0 / static_cast<double>(dim)) / norm;
        for (double& v : r) v *= scale;
    }
    return z;
}

PairSet sample_pairs(Prng& prng, std::size_t n, std::size_t dim, double radius) {
    PairSet pairs{sample_ball(prng, n, dim, radius), Matrix(n, dim)};
    for (std::size_t i = 0; i < n; ++i) {
        auto base = pairs.first.row(i);
        auto other = pairs.second.row(i);
        const double step = radius * std::pow(10.0, -3.0 * prng.uniform());
        // Redraw the direction until the partner stays inside the ball. Some
        // direction always works because step <= radius.
        while (true) {
            double norm = 0.0;
            do {
                for (double& v : other) v = prng.normal();
                norm = l2_norm(other);
            } while (norm == 0.0);
            for (std::size_t k = 0; k < dim; ++k) other[k] = base[k] + step * other[k] / norm;
            if (l2_norm(other) <= radius) break;
        }
    }
    return pairs;
}

double lipschitz_from_pairs(const CouplingStack& stack, const PairSet& pairs) {
    const Matrix a = stack_inverse(stack, pairs.first);
    const Matrix b = stack_inverse(stack, pairs.second);
    double best = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double dz = l2_distance(pairs.first.row(i), pairs.second.row(i));
        if (dz == 0.0) continue;
        best = std::max(best, l2_distance(a.row(i), b.row(i)) / dz);
        ++used;
    }
    if (used == 0) throw Error(ErrorKind::InvalidArgument, "estimate_lipschitz: every sampled pair was coincident");
    return best;
}

double estimate_lipschitz(const CouplingStack& stack, Prng& prng, std::size_t n_pairs, double radius) {
    if (n_pairs == 0) throw Error(ErrorKind::InvalidArgument, "estimate_lipschitz: n_pairs must be >= 1");
    return lipschitz_from_pairs(stack, sample_pairs(prng, n_pairs, stack.dim, radius));
}

double delta_from_points(const CouplingStack& a, const CouplingStack& b, const Matrix& z) {
    if (a.dim != b.dim)
        throw Error(ErrorKind::ShapeMismatch, "estimate_delta: stack widths " + std::to_string(a.dim) + " and " +
                                                  std::to_string(b.dim));
    const Matrix ha = stack_inverse(a, z);
    const Matrix hb = stack_inverse(b, z);
    double best = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) best = std::max(best, l2_distance(ha.row(i), hb.row(i)));
    return best;
}

double estimate_delta(const CouplingStack& a, const CouplingStack& b, Prng& prng, std::size_t n_samples, double radius) {
    if (a.dim != b.dim)
        throw Error(ErrorKind::ShapeMismatch, "estimate_delta: stack widths " + std::to_string(a.dim) + " and " +
                                                  std::to_string(b.dim));
    return delta_from_points(a, b, sample_ball(prng, n_samples, a.dim, radius));
}

LemmaReport lemma_bound_check(const CouplingStack& a, const CouplingStack& b, const PairSet& held_out,
                              double lipschitz_hat, double delta_hat, double safety) {
    LemmaReport report;
    report.lipschitz_hat = lipschitz_hat;
    report.delta_hat = delta_hat;
    report.safety_factor = safety;

    const Matrix h1 = stack_inverse(a, held_out.first);
    const Matrix h2 = stack_inverse(b, held_out.second);
    const Matrix h1_at_z2 = stack_inverse(a, held_out.second);
    for (std::size_t i = 0; i < h1.rows(); ++i) {
        const double lhs = l2_distance(h1.row(i), h2.row(i));
        const double dz = l2_distance(held_out.first.row(i), held_out.second.row(i));
        const double bound = safety * lipschitz_hat * dz + delta_hat;
        if (lhs > bound) ++report.violations;
        if (bound > 0.0) report.worst_ratio = std::max(report.worst_ratio, lhs / bound);

        const double term1 = l2_distance(h1.row(i), h1_at_z2.row(i));
        const double term2 = l2_distance(h1_at_z2.row(i), h2.row(i));
        if (lhs > (term1 + term2) * (1.0 + 1e-12) + 1e-15) ++report.triangle_violations;
        ++report.pairs_checked;
    }
    return report;
}

}  // namespace nexusflow
