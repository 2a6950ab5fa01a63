#include "nexusflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nexusflow/error.hpp"

namespace nexusflow {

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace

EigenDecomposition symmetric_eigen(const Matrix& input) {
    if (input.rows() != input.cols())
        throw Error(ErrorKind::ShapeMismatch, "symmetric_eigen: matrix " + input.shape() + " is not square");
    const std::size_t n = input.rows();
    const double scale = std::max(1.0, max_abs(input));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(input(i, j) - input(j, i)) > 1e-10 * scale)
                throw Error(ErrorKind::NotSymmetric, "symmetric_eigen: entries (" + std::to_string(i) + "," +
                                                         std::to_string(j) + ") differ");
    require_finite(input, "symmetric_eigen input");

    Matrix a = input;
    // Work on the exactly symmetrized copy.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (input(i, j) + input(j, i));
    Matrix v = Matrix::identity(n);

    const double total = frobenius_norm(a);
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        if (off_diagonal_norm(a) <= 1e-15 * total || total == 0.0) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                // tan of the rotation angle, smaller root for stability.
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

Matrix covariance(const Matrix& data) {
    if (data.rows() < 2)
        throw Error(ErrorKind::InvalidArgument, "covariance needs at least 2 rows, got " + std::to_string(data.rows()));
    const auto mean = column_means(data);
    Matrix centered = data;
    for (std::size_t i = 0; i < centered.rows(); ++i) {
        auto r = centered.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] -= mean[j];
    }
    Matrix cov = matmul_at(centered, centered);
    const double inv = 1.0 / static_cast<double>(data.rows() - 1);
    for (double& x : cov.data()) x *= inv;
    // Symmetric by construction up to summation order; make it exact.
    for (std::size_t i = 0; i < cov.rows(); ++i)
        for (std::size_t j = i + 1; j < cov.cols(); ++j) cov(j, i) = cov(i, j);
    return cov;
}

std::vector<double> pca_spectrum(const Matrix& data) {
    if (data.rows() < 2)
        throw Error(ErrorKind::InvalidArgument, "pca_spectrum needs at least 2 rows, got " + std::to_string(data.rows()));
    auto values = symmetric_eigen(covariance(data)).values;
    for (double& v : values)
        if (v < 0.0) v = 0.0;
    return values;
}

}  // namespace nexusflow
