#include "nexusflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "nexusflow/error.hpp"

namespace nexusflow {

void GradCheckResult::merge(const GradCheckResult& other) {
    checked += other.checked;
    failures += other.failures;
    worst_rel_error = std::max(worst_rel_error, other.worst_rel_error);
    worst_abs_error = std::max(worst_abs_error, other.worst_abs_error);
}

bool gradient_entry_ok(double analytic, double numeric, const GradCheckOptions& options) {
    const double diff = std::abs(analytic - numeric);
    if (!std::isfinite(diff)) return false;
    if (diff <= options.abs_floor) return true;
    return diff <= options.rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

GradCheckResult check_gradient(const std::function<double()>& objective, std::span<double> values,
                               std::span<const double> analytic, const GradCheckOptions& options) {
    if (values.size() != analytic.size())
        throw Error(ErrorKind::ShapeMismatch, "check_gradient: " + std::to_string(values.size()) + " values, " +
                                                  std::to_string(analytic.size()) + " analytic entries");
    GradCheckResult result;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + options.step;
        const double up = objective();
        values[i] = saved - options.step;
        const double down = objective();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        const double diff = std::abs(numeric - analytic[i]);
        ++result.checked;
        result.worst_abs_error = std::max(result.worst_abs_error, diff);
        if (diff > options.abs_floor) {
            const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
            result.worst_rel_error = std::max(result.worst_rel_error, scale > 0.0 ? diff / scale : INFINITY);
        }
        if (!gradient_entry_ok(analytic[i], numeric, options)) ++result.failures;
    }
    return result;
}

GradCheckResult check_gradients(const std::function<double()>& objective, const MutableParams& values,
                                const ConstParams& analytic, const GradCheckOptions& options) {
    if (values.size() != analytic.size())
        throw Error(ErrorKind::ShapeMismatch, "check_gradients: block counts differ");
    GradCheckResult result;
    for (std::size_t k = 0; k < values.size(); ++k) result.merge(check_gradient(objective, values[k], analytic[k], options));
    return result;
}

double weighted_sum(const Matrix& m, const Matrix& weights) {
    if (m.rows() != weights.rows() || m.cols() != weights.cols())
        throw Error(ErrorKind::ShapeMismatch, "weighted_sum: " + m.shape() + " vs " + weights.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < m.data().size(); ++i) s += m.data()[i] * weights.data()[i];
    return s;
}

}  // namespace nexusflow
