#include "nexusflow/surrogate.hpp"

#include <string>

#include "nexusflow/error.hpp"

namespace nexusflow {

SurrogateForward surrogate_forward(const SurrogateModule& module, const Matrix& h) {
    if (h.cols() != module.feature_dim())
        throw Error(ErrorKind::ShapeMismatch, "surrogate for task " + std::to_string(module.task_id) +
                                                  ": feature " + h.shape() + " but aggregator expects " +
                                                  std::to_string(module.feature_dim()) + " columns");
    auto agg = mlp_forward(module.aggregator, h);
    auto flow = stack_forward(module.coupling, agg.output);
    SurrogateForward result;
    result.embedding = std::move(agg.output);
    result.latent = std::move(flow.output);
    result.cache.aggregator = std::move(agg.cache);
    result.cache.coupling = std::move(flow.caches);
    return result;
}

SurrogateBackward surrogate_backward(const SurrogateModule& module, const SurrogateCache& cache, const Matrix& grad_z) {
    if (grad_z.cols() != module.embed_dim())
        throw Error(ErrorKind::ShapeMismatch, "surrogate for task " + std::to_string(module.task_id) +
                                                  ": latent gradient " + grad_z.shape());
    auto flow = stack_backward(module.coupling, cache.coupling, grad_z);
    auto agg = mlp_backward(module.aggregator, cache.aggregator, flow.input_grad);
    SurrogateBackward result;
    result.feature_grad = std::move(agg.input_grad);
    result.param_grad = {module.task_id, std::move(agg.param_grad), std::move(flow.param_grad)};
    return result;
}

std::vector<SurrogateModule> build_surrogates(const std::vector<std::size_t>& task_dims, std::size_t embed_dim,
                                              std::size_t depth, Prng& prng, const SurrogateOptions& options) {
    if (embed_dim == 0 || embed_dim % 2 != 0)
        throw Error(ErrorKind::InvalidArgument, "surrogate embedding width must be even, got " + std::to_string(embed_dim));
    std::vector<SurrogateModule> modules;
    modules.reserve(task_dims.size());
    for (std::size_t task = 0; task < task_dims.size(); ++task) {
        MlpShape shape;
        shape.dims.push_back(task_dims[task]);
        for (auto w : options.aggregator_hidden) shape.dims.push_back(w);
        shape.dims.push_back(embed_dim);
        shape.hidden = options.aggregator_hidden_activation;
        shape.output = options.aggregator_output_activation;
        SurrogateModule m;
        m.task_id = task;
        m.aggregator = make_mlp(shape, prng);
        m.coupling = make_coupling_stack(embed_dim, depth, prng, options.coupling);
        modules.push_back(std::move(m));
    }
    return modules;
}

SurrogateModule zeros_like(const SurrogateModule& module) {
    return {module.task_id, zeros_like(module.aggregator), zeros_like(module.coupling)};
}

}  // namespace nexusflow
