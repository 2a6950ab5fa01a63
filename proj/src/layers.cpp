#include "nexusflow/layers.hpp"

#include <cmath>
#include <string>

#include "nexusflow/error.hpp"

namespace nexusflow {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw Error(ErrorKind::InvalidArgument, "unknown activation '" + name + "'");
}

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Identity: return x;
    }
    return x;
}

double activation_derivative(Activation a, double pre) {
    switch (a) {
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

Mlp make_mlp(const MlpShape& shape, Prng& prng, bool zero_output) {
    if (shape.dims.size() < 2) throw Error(ErrorKind::InvalidArgument, "make_mlp: need at least input and output dims");
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < shape.dims.size(); ++l) {
        const std::size_t in = shape.dims[l];
        const std::size_t out = shape.dims[l + 1];
        if (in == 0 || out == 0) throw Error(ErrorKind::InvalidArgument, "make_mlp: zero-width layer");
        const bool last = l + 2 == shape.dims.size();
        DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), last ? shape.output : shape.hidden};
        if (!(last && zero_output)) {
            const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
            for (double& w : layer.weight.data()) w = stddev * prng.normal();
        }
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

Mlp zeros_like(const Mlp& mlp) {
    Mlp out;
    out.layers.reserve(mlp.layers.size());
    for (const auto& l : mlp.layers)
        out.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0), l.activation});
    return out;
}

void validate(const Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        if (layer.bias.size() != layer.out_dim())
            throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + ": bias length " +
                                                      std::to_string(layer.bias.size()) + " vs weight " +
                                                      layer.weight.shape());
        if (l > 0 && mlp.layers[l - 1].out_dim() != layer.in_dim())
            throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " expects " +
                                                      std::to_string(layer.in_dim()) + " inputs but previous emits " +
                                                      std::to_string(mlp.layers[l - 1].out_dim()));
    }
}

namespace {

Matrix dense_pre(const DenseLayer& layer, const Matrix& x) {
    Matrix pre = matmul_bt(x, layer.weight);
    add_row_vector(pre, layer.bias);
    return pre;
}

Matrix apply_activation(Activation a, const Matrix& pre) {
    if (a == Activation::Identity) return pre;
    Matrix out = pre;
    for (double& v : out.data()) v = activate(a, v);
    return out;
}

void check_input(const Mlp& mlp, const Matrix& x) {
    if (mlp.layers.empty()) return;
    if (x.cols() != mlp.in_dim())
        throw Error(ErrorKind::ShapeMismatch, "mlp_forward: input " + x.shape() + " but network expects " +
                                                  std::to_string(mlp.in_dim()) + " columns");
}

}  // namespace

MlpForward mlp_forward(const Mlp& mlp, const Matrix& x) {
    check_input(mlp, x);
    MlpForward result;
    result.cache.inputs.reserve(mlp.layers.size());
    result.cache.preacts.reserve(mlp.layers.size());
    Matrix current = x;
    for (const auto& layer : mlp.layers) {
        Matrix pre = dense_pre(layer, current);
        Matrix next = apply_activation(layer.activation, pre);
        result.cache.inputs.push_back(std::move(current));
        result.cache.preacts.push_back(std::move(pre));
        current = std::move(next);
    }
    result.output = std::move(current);
    return result;
}

Matrix mlp_apply(const Mlp& mlp, const Matrix& x) {
    check_input(mlp, x);
    Matrix current = x;
    for (const auto& layer : mlp.layers) current = apply_activation(layer.activation, dense_pre(layer, current));
    return current;
}

MlpBackward mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& upstream_grad) {
    const std::size_t n = mlp.layers.size();
    if (cache.inputs.size() != n || cache.preacts.size() != n)
        throw Error(ErrorKind::StaleCache, "mlp_backward: cache holds " + std::to_string(cache.inputs.size()) +
                                               " layers, network has " + std::to_string(n));
    for (std::size_t l = 0; l < n; ++l) {
        const auto& layer = mlp.layers[l];
        if (cache.inputs[l].cols() != layer.in_dim() || cache.preacts[l].cols() != layer.out_dim() ||
            cache.inputs[l].rows() != upstream_grad.rows())
            throw Error(ErrorKind::StaleCache, "mlp_backward: cache for layer " + std::to_string(l) +
                                                   " does not match network or batch");
    }
    if (n > 0 && upstream_grad.cols() != mlp.out_dim())
        throw Error(ErrorKind::ShapeMismatch, "mlp_backward: upstream " + upstream_grad.shape() +
                                                  " vs output width " + std::to_string(mlp.out_dim()));

    MlpBackward result{Matrix(), zeros_like(mlp)};
    Matrix grad = upstream_grad;
    for (std::size_t l = n; l-- > 0;) {
        const auto& layer = mlp.layers[l];
        if (layer.activation != Activation::Identity) {
            const auto pre = cache.preacts[l].data();
            auto g = grad.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activation_derivative(layer.activation, pre[i]);
        }
        auto& pg = result.param_grad.layers[l];
        pg.weight = matmul_at(grad, cache.inputs[l]);
        pg.bias = column_sums(grad);
        grad = matmul(grad, layer.weight);
    }
    result.input_grad = std::move(grad);
    return result;
}

std::size_t count_params(const ConstParams& params) {
    std::size_t n = 0;
    for (auto p : params) n += p.size();
    return n;
}

void axpy(double scale, const ConstParams& src, const MutableParams& dst) {
    if (src.size() != dst.size())
        throw Error(ErrorKind::ShapeMismatch, "axpy: parameter lists differ in length");
    for (std::size_t k = 0; k < src.size(); ++k) {
        if (src[k].size() != dst[k].size())
            throw Error(ErrorKind::ShapeMismatch, "axpy: parameter block " + std::to_string(k) + " differs in size");
        for (std::size_t i = 0; i < src[k].size(); ++i) dst[k][i] += scale * src[k][i];
    }
}

}  // namespace nexusflow
