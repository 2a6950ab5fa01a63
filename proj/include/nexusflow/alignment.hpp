#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nexusflow/matrix.hpp"

namespace nexusflow {

enum class AlignVariant { Pairwise, Center };
enum class AlignNorm { L2, SquaredL2 };

const char* to_string(AlignVariant v);
const char* to_string(AlignNorm n);
AlignVariant align_variant_from_string(const std::string& s);
AlignNorm align_norm_from_string(const std::string& s);

struct AlignmentConfig {
    AlignVariant variant = AlignVariant::Center;
    AlignNorm norm = AlignNorm::L2;
    double lambda = 1.0;
};

struct AlignmentResult {
    double loss = 0.0;
    std::vector<Matrix> grads;  // one per latent, same shape
    std::size_t terms_per_sample = 0;
};

// Both losses are per-sample (row-wise) sums averaged over the batch. With
// the L2 norm the gradient of a coincident pair is taken to be zero.
AlignmentResult align_pairwise(std::span<const Matrix> latents, AlignNorm norm);
AlignmentResult align_center(std::span<const Matrix> latents, AlignNorm norm);
AlignmentResult align(std::span<const Matrix> latents, const AlignmentConfig& config);

double total_loss(std::span<const double> task_losses, double align_loss, double lambda);

}  // namespace nexusflow
