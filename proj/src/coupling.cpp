#include "nexusflow/coupling.hpp"

#include <cmath>
#include <string>

#include "nexusflow/error.hpp"

namespace nexusflow {

namespace {

struct Halves {
    std::size_t identity_begin;
    std::size_t transformed_begin;
    std::size_t half;
};

Halves halves_of(const CouplingLayer& layer) {
    const std::size_t half = layer.s_net.in_dim();
    if (layer.parity == Parity::LowerIdentity) return {0, half, half};
    return {half, 0, half};
}

void check_width(const CouplingLayer& layer, const Matrix& m, const char* op) {
    if (m.cols() % 2 != 0)
        throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": odd embedding width " + std::to_string(m.cols()));
    if (m.cols() != layer.dim())
        throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": input " + m.shape() + " but layer width is " +
                                                  std::to_string(layer.dim()));
}

}  // namespace

double clamp_scale(double s, double clamp) {
    if (!std::isfinite(clamp)) return s;
    return clamp * std::tanh(s / clamp);
}

double clamp_scale_derivative(double s, double clamp) {
    if (!std::isfinite(clamp)) return 1.0;
    const double t = std::tanh(s / clamp);
    return 1.0 - t * t;
}

CouplingLayer make_coupling_layer(std::size_t dim, Parity parity, Prng& prng, const CouplingOptions& options) {
    if (dim == 0 || dim % 2 != 0)
        throw Error(ErrorKind::InvalidArgument, "coupling width must be even and positive, got " + std::to_string(dim));
    if (!(options.clamp > 0.0)) throw Error(ErrorKind::InvalidArgument, "coupling clamp must be positive");
    const std::size_t half = dim / 2;
    MlpShape shape;
    shape.dims.push_back(half);
    for (std::size_t i = 0; i < options.hidden_layers; ++i) shape.dims.push_back(options.hidden_factor * dim);
    shape.dims.push_back(half);
    shape.hidden = Activation::Tanh;
    shape.output = Activation::Identity;
    CouplingLayer layer;
    layer.parity = parity;
    layer.s_net = make_mlp(shape, prng, options.identity_init);
    layer.t_net = make_mlp(shape, prng, options.identity_init);
    layer.clamp = options.clamp;
    return layer;
}

CouplingStack make_coupling_stack(std::size_t dim, std::size_t depth, Prng& prng, const CouplingOptions& options) {
    if (dim == 0 || dim % 2 != 0)
        throw Error(ErrorKind::InvalidArgument, "coupling width must be even and positive, got " + std::to_string(dim));
    CouplingStack stack;
    stack.dim = dim;
    for (std::size_t i = 0; i < depth; ++i)
        stack.layers.push_back(
            make_coupling_layer(dim, i % 2 == 0 ? Parity::LowerIdentity : Parity::UpperIdentity, prng, options));
    return stack;
}

CouplingLayer zeros_like(const CouplingLayer& layer) {
    return {layer.parity, zeros_like(layer.s_net), zeros_like(layer.t_net), layer.clamp};
}

CouplingStack zeros_like(const CouplingStack& stack) {
    CouplingStack out;
    out.dim = stack.dim;
    for (const auto& l : stack.layers) out.layers.push_back(zeros_like(l));
    return out;
}

CouplingForward coupling_forward(const CouplingLayer& layer, const Matrix& h) {
    check_width(layer, h, "coupling_forward");
    const auto [id_begin, tr_begin, half] = halves_of(layer);

    CouplingForward result;
    auto& cache = result.cache;
    cache.identity_half = slice_cols(h, id_begin, half);
    cache.transformed_in = slice_cols(h, tr_begin, half);
    auto s_fwd = mlp_forward(layer.s_net, cache.identity_half);
    auto t_fwd = mlp_forward(layer.t_net, cache.identity_half);
    cache.s_raw = std::move(s_fwd.output);
    cache.s_cache = std::move(s_fwd.cache);
    cache.t_cache = std::move(t_fwd.cache);

    cache.scale = Matrix(h.rows(), half);
    Matrix transformed(h.rows(), half);
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < half; ++j) {
            const double scale = std::exp(clamp_scale(cache.s_raw(i, j), layer.clamp));
            cache.scale(i, j) = scale;
            transformed(i, j) = cache.transformed_in(i, j) * scale + t_fwd.output(i, j);
        }

    result.output = h;
    assign_cols(result.output, tr_begin, transformed);
    require_finite(result.output, "coupling_forward");
    return result;
}

Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& z) {
    check_width(layer, z, "coupling_inverse");
    const auto [id_begin, tr_begin, half] = halves_of(layer);
    const Matrix identity_half = slice_cols(z, id_begin, half);
    const Matrix s = mlp_apply(layer.s_net, identity_half);
    const Matrix t = mlp_apply(layer.t_net, identity_half);
    Matrix restored(z.rows(), half);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < half; ++j)
            restored(i, j) = (z(i, tr_begin + j) - t(i, j)) * std::exp(-clamp_scale(s(i, j), layer.clamp));
    Matrix h = z;
    assign_cols(h, tr_begin, restored);
    require_finite(h, "coupling_inverse");
    return h;
}

CouplingBackward coupling_backward(const CouplingLayer& layer, const CouplingCache& cache, const Matrix& upstream_grad) {
    check_width(layer, upstream_grad, "coupling_backward");
    const auto [id_begin, tr_begin, half] = halves_of(layer);
    const std::size_t rows = upstream_grad.rows();
    if (cache.identity_half.rows() != rows || cache.identity_half.cols() != half || cache.scale.rows() != rows ||
        cache.scale.cols() != half || cache.s_raw.rows() != rows)
        throw Error(ErrorKind::StaleCache, "coupling_backward: cache does not match layer or batch");

    const Matrix grad_out_tr = slice_cols(upstream_grad, tr_begin, half);
    Matrix grad_in_tr(rows, half);
    Matrix grad_s(rows, half);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < half; ++j) {
            const double g = grad_out_tr(i, j);
            const double scale = cache.scale(i, j);
            grad_in_tr(i, j) = g * scale;
            grad_s(i, j) = g * cache.transformed_in(i, j) * scale *
                           clamp_scale_derivative(cache.s_raw(i, j), layer.clamp);
        }

    auto s_back = mlp_backward(layer.s_net, cache.s_cache, grad_s);
    auto t_back = mlp_backward(layer.t_net, cache.t_cache, grad_out_tr);

    Matrix grad_id = slice_cols(upstream_grad, id_begin, half);
    grad_id += s_back.input_grad;
    grad_id += t_back.input_grad;

    CouplingBackward result;
    result.input_grad = Matrix(rows, layer.dim());
    assign_cols(result.input_grad, id_begin, grad_id);
    assign_cols(result.input_grad, tr_begin, grad_in_tr);
    result.param_grad = {layer.parity, std::move(s_back.param_grad), std::move(t_back.param_grad), layer.clamp};
    return result;
}

StackForward stack_forward(const CouplingStack& stack, const Matrix& h) {
    if (h.cols() != stack.dim)
        throw Error(ErrorKind::ShapeMismatch, "stack_forward: input " + h.shape() + " but stack width is " +
                                                  std::to_string(stack.dim));
    StackForward result;
    result.output = h;
    result.caches.reserve(stack.layers.size());
    for (const auto& layer : stack.layers) {
        auto fwd = coupling_forward(layer, result.output);
        result.output = std::move(fwd.output);
        result.caches.push_back(std::move(fwd.cache));
    }
    return result;
}

Matrix stack_apply(const CouplingStack& stack, const Matrix& h) { return stack_forward(stack, h).output; }

Matrix stack_inverse(const CouplingStack& stack, const Matrix& z) {
    if (z.cols() != stack.dim)
        throw Error(ErrorKind::ShapeMismatch, "stack_inverse: input " + z.shape() + " but stack width is " +
                                                  std::to_string(stack.dim));
    Matrix h = z;
    for (auto it = stack.layers.rbegin(); it != stack.layers.rend(); ++it) h = coupling_inverse(*it, h);
    return h;
}

StackBackward stack_backward(const CouplingStack& stack, const std::vector<CouplingCache>& caches,
                             const Matrix& upstream_grad) {
    if (caches.size() != stack.layers.size())
        throw Error(ErrorKind::StaleCache, "stack_backward: " + std::to_string(caches.size()) + " caches for " +
                                               std::to_string(stack.layers.size()) + " layers");
    StackBackward result;
    result.param_grad.dim = stack.dim;
    result.param_grad.layers.resize(stack.layers.size());
    Matrix grad = upstream_grad;
    for (std::size_t l = stack.layers.size(); l-- > 0;) {
        auto back = coupling_backward(stack.layers[l], caches[l], grad);
        grad = std::move(back.input_grad);
        result.param_grad.layers[l] = std::move(back.param_grad);
    }
    result.input_grad = std::move(grad);
    return result;
}

}  // namespace nexusflow
