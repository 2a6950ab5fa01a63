#include "nexusflow/optimizer.hpp"

#include <cmath>

#include "nexusflow/error.hpp"

namespace nexusflow {

void Adam::step(const MutableParams& params, const ConstParams& grads, const std::vector<bool>& active) {
    if (params.size() != grads.size())
        throw Error(ErrorKind::ShapeMismatch, "Adam: " + std::to_string(params.size()) + " parameter blocks, " +
                                                  std::to_string(grads.size()) + " gradient blocks");
    if (m_.empty()) {
        for (auto p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "Adam: parameter layout changed");

    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!active.empty() && !active[k]) continue;
        auto p = params[k];
        auto g = grads[k];
        if (p.size() != g.size() || p.size() != m_[k].size())
            throw Error(ErrorKind::ShapeMismatch, "Adam: block " + std::to_string(k) + " changed size");
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

}  // namespace nexusflow
