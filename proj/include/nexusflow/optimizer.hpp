#pragma once

#include <cstddef>
#include <vector>

#include "nexusflow/layers.hpp"

namespace nexusflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter layout. Moments are allocated
/// on the first step and the layout must not change afterwards.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    // `active[k] == false` leaves block k and its moments untouched.
    void step(const MutableParams& params, const ConstParams& grads, const std::vector<bool>& active = {});

    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace nexusflow
