#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nexusflow/matrix.hpp"

namespace nexusflow {

// Task t is supervised only on domain t. Task 0 is dense regression, task 1
// classification, task 2 (optional) unit-norm direction regression.
enum class TaskKind { Regression, Classification, UnitVector };

const char* to_string(TaskKind k);
TaskKind task_kind(std::size_t task);

struct BenchConfig {
    std::size_t n_tasks = 2;
    std::size_t d_in = 20;
    std::size_t d_factor = 10;
    std::size_t d_reg = 8;
    std::size_t n_classes = 5;
    double shift_mean = 1.0;      // per-coordinate offset magnitude for domains >= 1
    double shift_rotation = 0.5;  // radians per domain index, applied on coordinate pairs
    double noise_std = 0.1;
    std::size_t n_train = 500;  // per domain
    std::size_t n_val = 500;    // per domain
    std::uint64_t seed = 0;
};

void validate(const BenchConfig& cfg);
std::size_t task_output_dim(const BenchConfig& cfg, std::size_t task);

struct Sample {
    std::vector<double> x;
    std::vector<double> factor;  // latent u; empty when loaded from CSV
    std::size_t domain = 0;
    std::optional<std::vector<double>> y_reg;
    std::optional<std::size_t> y_class;
    std::optional<std::vector<double>> y_dir;
    std::vector<std::uint8_t> mask;
};

/// Seeded generating process, kept so tests can re-derive labels.
struct BenchTruth {
    Matrix mixing;                                // d_in x d_factor
    std::vector<std::vector<double>> offsets;     // per domain, length d_in
    Matrix w_reg;                                 // d_reg x d_factor
    Matrix w_class;                               // C x d_factor
    Matrix w_dir;                                 // 3 x d_factor
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
    BenchTruth truth;
};

/// x = R_d (M u + mu_d) + noise with labels computed from u. Training samples
/// keep only the label of their domain's task; validation keeps all labels.
Dataset generate(const BenchConfig& cfg);

// Rotation of domain d applied to an input vector (in place).
void rotate_domain(std::span<double> x, std::size_t domain, double angle_per_domain);

std::vector<double> regression_label(const BenchTruth& truth, std::span<const double> u);
std::size_t class_label(const BenchTruth& truth, std::span<const double> u);
std::vector<double> direction_label(const BenchTruth& truth, std::span<const double> u);

struct SplitStats {
    std::size_t total = 0;
    std::vector<std::size_t> per_domain;
    std::vector<std::size_t> mask_histogram;  // supervised count per task
};

SplitStats split_stats(std::span<const Sample> samples, std::size_t n_tasks);

/// Header: x_*, domain, mask_*, y1_*, y2, y3_* (if three tasks). Missing labels
/// are empty fields.
void write_dataset_csv(std::ostream& out, std::span<const Sample> samples, const BenchConfig& cfg);
std::vector<Sample> read_dataset_csv(std::istream& in);

}  // namespace nexusflow
