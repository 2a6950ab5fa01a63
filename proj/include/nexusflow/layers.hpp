#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "nexusflow/matrix.hpp"
#include "nexusflow/prng.hpp"

namespace nexusflow {

enum class Activation { Tanh, Relu, Identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
    Matrix weight;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::Identity;

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
};

struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
};

// Per-layer inputs and pre-activations of one forward call.
struct MlpCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> preacts;
};

struct MlpForward {
    Matrix output;
    MlpCache cache;
};

struct MlpBackward {
    Matrix input_grad;
    Mlp param_grad;  // same shapes as the network
};

struct MlpShape {
    std::vector<std::size_t> dims;  // in, hidden..., out
    Activation hidden = Activation::Tanh;
    Activation output = Activation::Identity;
};

/// Weights ~ N(0, 1/fan_in), biases 0. With zero_output the last layer's
/// weights are zero as well, so the network initially emits its (zero) bias.
Mlp make_mlp(const MlpShape& shape, Prng& prng, bool zero_output = false);
Mlp zeros_like(const Mlp& mlp);
void validate(const Mlp& mlp);

MlpForward mlp_forward(const Mlp& mlp, const Matrix& x);
// Forward pass without keeping the cache.
Matrix mlp_apply(const Mlp& mlp, const Matrix& x);
MlpBackward mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& upstream_grad);

double activate(Activation a, double x);
// Derivative expressed through the pre-activation.
double activation_derivative(Activation a, double pre);

// Parameter views in a fixed order. Works for const and mutable objects so
// the optimizer, checkpoints and gradient checks all share one traversal.
template <class Span>
using ParamList = std::vector<Span>;
using MutableParams = ParamList<std::span<double>>;
using ConstParams = ParamList<std::span<const double>>;

template <class M, class Out>
    requires std::same_as<std::remove_const_t<M>, Mlp>
void collect_params(M& mlp, Out& out) {
    for (auto& layer : mlp.layers) {
        out.emplace_back(layer.weight.data());
        out.emplace_back(layer.bias);
    }
}

std::size_t count_params(const ConstParams& params);
// dst += scale * src, element-wise over matching lists.
void axpy(double scale, const ConstParams& src, const MutableParams& dst);

}  // namespace nexusflow
