#pragma once

#include <cstddef>
#include <vector>

#include "nexusflow/coupling.hpp"
#include "nexusflow/layers.hpp"

namespace nexusflow {

/// Side branch for one task: an aggregator compressing the task feature into
/// the shared embedding width, followed by a coupling stack into the latent
/// space. It only reads task features; predictions never depend on it.
struct SurrogateModule {
    std::size_t task_id = 0;
    Mlp aggregator;
    CouplingStack coupling;

    std::size_t feature_dim() const { return aggregator.in_dim(); }
    std::size_t embed_dim() const { return coupling.dim; }
};

struct SurrogateCache {
    MlpCache aggregator;
    std::vector<CouplingCache> coupling;
};

struct SurrogateForward {
    Matrix embedding;  // h' = g(h)
    Matrix latent;     // z = c(h')
    SurrogateCache cache;
};

struct SurrogateBackward {
    Matrix feature_grad;
    SurrogateModule param_grad;
};

struct SurrogateOptions {
    // Aggregator hidden widths; empty means a single dense layer.
    std::vector<std::size_t> aggregator_hidden;
    Activation aggregator_hidden_activation = Activation::Tanh;
    Activation aggregator_output_activation = Activation::Identity;
    CouplingOptions coupling;
};

SurrogateForward surrogate_forward(const SurrogateModule& module, const Matrix& h);
SurrogateBackward surrogate_backward(const SurrogateModule& module, const SurrogateCache& cache, const Matrix& grad_z);

/// One module per task, aggregator drawn before the coupling stack for each
/// task in turn. Depth 0 yields z == h' (no invertible stage).
std::vector<SurrogateModule> build_surrogates(const std::vector<std::size_t>& task_dims, std::size_t embed_dim,
                                              std::size_t depth, Prng& prng, const SurrogateOptions& options = {});

SurrogateModule zeros_like(const SurrogateModule& module);

template <class S, class Out>
    requires std::same_as<std::remove_const_t<S>, SurrogateModule>
void collect_params(S& module, Out& out) {
    collect_params(module.aggregator, out);
    collect_params(module.coupling, out);
}

}  // namespace nexusflow
