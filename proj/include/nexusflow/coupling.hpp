#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "nexusflow/layers.hpp"

namespace nexusflow {

// Which half of the input passes through unchanged.
enum class Parity { LowerIdentity, UpperIdentity };

/// Affine coupling: the identity half `a` passes through, the other half `b`
/// becomes b * exp(s~(a)) + t(a) with s~ = clamp * tanh(s / clamp).
/// A non-finite clamp disables the bound (s~ = s).
struct CouplingLayer {
    Parity parity = Parity::LowerIdentity;
    Mlp s_net;
    Mlp t_net;
    double clamp = 2.0;

    std::size_t dim() const { return 2 * s_net.in_dim(); }
};

struct CouplingCache {
    Matrix identity_half;
    Matrix transformed_in;
    Matrix s_raw;  // s_net output before clamping
    Matrix scale;  // exp(s~)
    MlpCache s_cache;
    MlpCache t_cache;
};

struct CouplingForward {
    Matrix output;
    CouplingCache cache;
};

struct CouplingBackward {
    Matrix input_grad;
    CouplingLayer param_grad;
};

struct CouplingStack {
    std::size_t dim = 0;
    std::vector<CouplingLayer> layers;
};

struct StackForward {
    Matrix output;
    std::vector<CouplingCache> caches;
};

struct StackBackward {
    Matrix input_grad;
    CouplingStack param_grad;
};

struct CouplingOptions {
    double clamp = 2.0;
    std::size_t hidden_factor = 2;  // hidden width = hidden_factor * dim
    std::size_t hidden_layers = 1;
    // Zero output layers in s/t nets, so the layer starts as the identity map.
    bool identity_init = true;
};

CouplingLayer make_coupling_layer(std::size_t dim, Parity parity, Prng& prng, const CouplingOptions& options = {});
/// Parities alternate starting with LowerIdentity.
CouplingStack make_coupling_stack(std::size_t dim, std::size_t depth, Prng& prng, const CouplingOptions& options = {});

CouplingLayer zeros_like(const CouplingLayer& layer);
CouplingStack zeros_like(const CouplingStack& stack);

double clamp_scale(double s, double clamp);
double clamp_scale_derivative(double s, double clamp);

CouplingForward coupling_forward(const CouplingLayer& layer, const Matrix& h);
Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& z);
CouplingBackward coupling_backward(const CouplingLayer& layer, const CouplingCache& cache, const Matrix& upstream_grad);

StackForward stack_forward(const CouplingStack& stack, const Matrix& h);
Matrix stack_apply(const CouplingStack& stack, const Matrix& h);
Matrix stack_inverse(const CouplingStack& stack, const Matrix& z);
StackBackward stack_backward(const CouplingStack& stack, const std::vector<CouplingCache>& caches,
                             const Matrix& upstream_grad);

template <class L, class Out>
    requires std::same_as<std::remove_const_t<L>, CouplingLayer>
void collect_params(L& layer, Out& out) {
    collect_params(layer.s_net, out);
    collect_params(layer.t_net, out);
}

template <class S, class Out>
    requires std::same_as<std::remove_const_t<S>, CouplingStack>
void collect_params(S& stack, Out& out) {
    for (auto& layer : stack.layers) collect_params(layer, out);
}

}  // namespace nexusflow
