#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "nexusflow/layers.hpp"
#include "nexusflow/matrix.hpp"

namespace nexusflow {

struct GradCheckOptions {
    double step = 1e-5;
    double rel_tol = 1e-5;
    double abs_floor = 1e-8;
};

struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_rel_error = 0.0;  // |a - n| / max(|a|, |n|) over entries above the floor
    double worst_abs_error = 0.0;

    bool passed() const { return failures == 0; }
    void merge(const GradCheckResult& other);
};

// An entry passes if |a - n| <= abs_floor or |a - n| <= rel_tol * max(|a|, |n|).
bool gradient_entry_ok(double analytic, double numeric, const GradCheckOptions& options);

/// Central differences of `objective` with respect to every entry of `values`,
/// which the objective must read through. Entries are restored afterwards.
GradCheckResult check_gradient(const std::function<double()>& objective, std::span<double> values,
                               std::span<const double> analytic, const GradCheckOptions& options = {});

GradCheckResult check_gradients(const std::function<double()>& objective, const MutableParams& values,
                                const ConstParams& analytic, const GradCheckOptions& options = {});

// sum(weights .* m): turns a matrix-valued map into a scalar objective.
double weighted_sum(const Matrix& m, const Matrix& weights);

}  // namespace nexusflow
