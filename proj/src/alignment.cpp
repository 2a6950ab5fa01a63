#include "nexusflow/alignment.hpp"

#include <cmath>

#include "nexusflow/error.hpp"

namespace nexusflow {

const char* to_string(AlignVariant v) { return v == AlignVariant::Pairwise ? "pairwise" : "center"; }
const char* to_string(AlignNorm n) { return n == AlignNorm::L2 ? "l2" : "squared_l2"; }

AlignVariant align_variant_from_string(const std::string& s) {
    if (s == "pairwise") return AlignVariant::Pairwise;
    if (s == "center") return AlignVariant::Center;
    throw Error(ErrorKind::InvalidArgument, "unknown alignment variant '" + s + "'");
}

AlignNorm align_norm_from_string(const std::string& s) {
    if (s == "l2") return AlignNorm::L2;
    if (s == "squared_l2") return AlignNorm::SquaredL2;
    throw Error(ErrorKind::InvalidArgument, "unknown alignment norm '" + s + "'");
}

namespace {

void check_latents(std::span<const Matrix> latents, const char* op) {
    if (latents.size() < 2)
        throw Error(ErrorKind::InvalidArgument, std::string(op) + ": need at least 2 latents, got " +
                                                    std::to_string(latents.size()));
    for (const auto& z : latents)
        if (z.rows() != latents[0].rows() || z.cols() != latents[0].cols())
            throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": latent " + z.shape() + " vs " + latents[0].shape());
    if (latents[0].rows() == 0) throw Error(ErrorKind::InvalidArgument, std::string(op) + ": empty batch");
}

// Value of the norm of `diff` and the factor f with d(norm)/d(diff) = f * diff.
struct NormTerm {
    double value;
    double factor;
};

NormTerm norm_term(double sq, AlignNorm norm) {
    if (norm == AlignNorm::SquaredL2) return {sq, 2.0};
    const double r = std::sqrt(sq);
    return {r, r > 0.0 ? 1.0 / r : 0.0};
}

std::vector<Matrix> zero_grads(std::span<const Matrix> latents) {
    std::vector<Matrix> g;
    g.reserve(latents.size());
    for (const auto& z : latents) g.emplace_back(z.rows(), z.cols());
    return g;
}

}  // namespace

AlignmentResult align_pairwise(std::span<const Matrix> latents, AlignNorm norm) {
    check_latents(latents, "align_pairwise");
    const std::size_t n = latents.size();
    const std::size_t rows = latents[0].rows();
    const std::size_t dim = latents[0].cols();
    const double inv_rows = 1.0 / static_cast<double>(rows);

    AlignmentResult result;
    result.grads = zero_grads(latents);
    result.terms_per_sample = n * (n - 1) / 2;
    std::vector<double> diff(dim);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                auto zi = latents[i].row(r);
                auto zj = latents[j].row(r);
                double sq = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    diff[k] = zi[k] - zj[k];
                    sq += diff[k] * diff[k];
                }
                const auto term = norm_term(sq, norm);
                result.loss += term.value * inv_rows;
                auto gi = result.grads[i].row(r);
                auto gj = result.grads[j].row(r);
                for (std::size_t k = 0; k < dim; ++k) {
                    const double g = term.factor * diff[k] * inv_rows;
                    gi[k] += g;
                    gj[k] -= g;
                }
            }
    return result;
}

AlignmentResult align_center(std::span<const Matrix> latents, AlignNorm norm) {
    check_latents(latents, "align_center");
    const std::size_t n = latents.size();
    const std::size_t rows = latents[0].rows();
    const std::size_t dim = latents[0].cols();
    const double inv_rows = 1.0 / static_cast<double>(rows);
    const double inv_n = 1.0 / static_cast<double>(n);

    AlignmentResult result;
    result.grads = zero_grads(latents);
    result.terms_per_sample = n;
    std::vector<double> center(dim);
    std::vector<double> diff(dim);
    std::vector<double> pulled(dim);  // sum over tasks of d(term_i)/d(diff_i)
    for (std::size_t r = 0; r < rows; ++r) {
        // Mean taken as offsets from the first latent, so identical latents
        // give a center equal to them bit for bit.
        auto z0 = latents[0].row(r);
        std::fill(center.begin(), center.end(), 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            auto zi = latents[i].row(r);
            for (std::size_t k = 0; k < dim; ++k) center[k] += zi[k] - z0[k];
        }
        for (std::size_t k = 0; k < dim; ++k) center[k] = z0[k] + center[k] * inv_n;

        std::fill(pulled.begin(), pulled.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto zi = latents[i].row(r);
            double sq = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                diff[k] = zi[k] - center[k];
                sq += diff[k] * diff[k];
            }
            const auto term = norm_term(sq, norm);
            result.loss += term.value * inv_rows;
            auto gi = result.grads[i].row(r);
            for (std::size_t k = 0; k < dim; ++k) {
                const double g = term.factor * diff[k] * inv_rows;
                gi[k] += g;
                pulled[k] += g;
            }
        }
        // The center moves with every latent: d(center)/d(z_i) = 1/n.
        for (std::size_t i = 0; i < n; ++i) {
            auto gi = result.grads[i].row(r);
            for (std::size_t k = 0; k < dim; ++k) gi[k] -= pulled[k] * inv_n;
        }
    }
    return result;
}

AlignmentResult align(std::span<const Matrix> latents, const AlignmentConfig& config) {
    return config.variant == AlignVariant::Pairwise ? align_pairwise(latents, config.norm)
                                                    : align_center(latents, config.norm);
}

double total_loss(std::span<const double> task_losses, double align_loss, double lambda) {
    double sum = 0.0;
    for (double l : task_losses) sum += l;
    if (lambda == 0.0) return sum;
    return sum + lambda * align_loss;
}

}  // namespace nexusflow
