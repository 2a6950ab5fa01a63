#include "nexusflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nexusflow/alignment.hpp"
#include "nexusflow/diagnostics.hpp"
#include "nexusflow/error.hpp"
#include "nexusflow/gradcheck.hpp"
#include "nexusflow/surrogate.hpp"
#include "nexusflow/trainer.hpp"

namespace nexusflow {

namespace {

// Fixed stream ids so every property is reproducible on its own.
enum Stream : std::uint64_t {
    kRoundTrip = 11,
    kIdentityHalf,
    kMlpGrad,
    kCouplingGrad,
    kStackGrad,
    kSurrogateGrad,
    kAlignGrad,
    kTaskGrad,
    kIdentities,
    kLemma,
    kMmd,
};

Prng stream(const VerifyOptions& o, Stream s) { return Prng(o.seed).fork(s); }

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(3);
    ss << v;
    return ss.str();
}

PropertyResult from_grad(const char* name, const GradCheckResult& r, std::size_t configs) {
    PropertyResult p{name, r.passed() && r.checked > 0, ""};
    p.detail = std::to_string(configs) + " configs, " + std::to_string(r.checked) + " entries, " +
               std::to_string(r.failures) + " failures, worst abs " + fmt(r.worst_abs_error) + ", worst rel " + fmt(r.worst_rel_error);
    return p;
}

void randomize(Mlp& mlp, Prng& prng, double scale) {
    for (auto& l : mlp.layers) {
        for (double& w : l.weight.data()) w = scale * prng.normal();
        for (double& b : l.bias) b = 0.3 * prng.normal();
    }
}

}  // namespace

CouplingStack random_stack(std::size_t dim, std::size_t depth, Prng& prng, double clamp) {
    CouplingOptions o;
    o.clamp = clamp;
    o.identity_init = false;
    CouplingStack stack = make_coupling_stack(dim, depth, prng, o);
    // Biases start at zero; give them some spread so t is not odd-symmetric.
    for (auto& layer : stack.layers)
        for (auto* net : {&layer.s_net, &layer.t_net})
            for (auto& l : net->layers)
                for (double& b : l.bias) b = 0.1 * prng.normal();
    return stack;
}

void scale_stack(CouplingStack& stack, double scale) {
    MutableParams params;
    collect_params(stack, params);
    for (auto p : params)
        for (double& v : p) v *= scale;
}

PropertyResult check_round_trip(const VerifyOptions& options) {
    Prng prng = stream(options, kRoundTrip);
    const std::size_t dim = 16;
    double worst = 0.0;
    std::string failure;
    for (std::size_t depth : {1, 2, 4, 6, 8}) {
        CouplingStack stack =
            random_stack(dim, depth, prng, options.inject_fault ? std::numeric_limits<double>::infinity() : 2.0);
        if (options.inject_fault) scale_stack(stack, options.fault_scale);
        const Matrix h = gaussian(prng, options.round_trip_inputs, dim);
        try {
            const Matrix back = stack_inverse(stack, stack_apply(stack, h));
            const double err = max_abs_diff(back, h);
            if (!std::isfinite(err)) throw Error(ErrorKind::NonFinite, "round trip produced non-finite values");
            worst = std::max(worst, err);
            if (!(err < 1e-8) && failure.empty()) failure = "depth " + std::to_string(depth) + " error " + fmt(err);
        } catch (const Error& e) {
            if (failure.empty()) failure = "depth " + std::to_string(depth) + ": " + e.what();
            worst = std::numeric_limits<double>::infinity();
        }
    }
    if (!failure.empty()) return {"coupling_round_trip", false, failure};
    return {"coupling_round_trip", true, "depths 1,2,4,6,8 max error " + fmt(worst)};
}

PropertyResult check_identity_half(const VerifyOptions& options) {
    Prng prng = stream(options, kIdentityHalf);
    for (auto parity : {Parity::LowerIdentity, Parity::UpperIdentity}) {
        CouplingOptions co;
        co.identity_init = false;
        const CouplingLayer layer = make_coupling_layer(16, parity, prng, co);
        const Matrix h = gaussian(prng, 50, 16);
        const Matrix z = coupling_forward(layer, h).output;
        const std::size_t begin = parity == Parity::LowerIdentity ? 0 : 8;
        if (!(slice_cols(z, begin, 8) == slice_cols(h, begin, 8)))
            return {"coupling_identity_half", false, "identity half changed"};
    }
    return {"coupling_identity_half", true, "bit-identical for both parities"};
}

PropertyResult check_mlp_gradients(const VerifyOptions& options) {
    Prng prng = stream(options, kMlpGrad);
    GradCheckResult total;
    for (std::size_t c = 0; c < options.gradient_configs; ++c) {
        const std::size_t in = 2 + prng.below(5), hid = 2 + prng.below(6), out = 1 + prng.below(4);
        Mlp mlp = make_mlp({{in, hid, hid, out}, Activation::Tanh, c % 2 ? Activation::Tanh : Activation::Identity}, prng);
        randomize(mlp, prng, 0.8);
        Matrix x = gaussian(prng, 3, in);
        const Matrix w = gaussian(prng, 3, out);
        auto objective = [&] { return weighted_sum(mlp_apply(mlp, x), w); };
        const auto fwd = mlp_forward(mlp, x);
        const auto back = mlp_backward(mlp, fwd.cache, w);
        MutableParams p;
        collect_params(mlp, p);
        ConstParams g;
        collect_params(back.param_grad, g);
        p.emplace_back(x.data());
        g.emplace_back(back.input_grad.data());
        total.merge(check_gradients(objective, p, g));
    }
    return from_grad("gradient_mlp", total, options.gradient_configs);
}

PropertyResult check_coupling_gradients(const VerifyOptions& options) {
    Prng prng = stream(options, kCouplingGrad);
    GradCheckResult total;
    for (std::size_t c = 0; c < options.gradient_configs; ++c) {
        const std::size_t dim = 2 * (1 + prng.below(4));
        CouplingOptions co;
        co.identity_init = false;
        co.clamp = c % 2 ? 2.0 : 0.7;  // small clamp exercises the saturation region
        CouplingLayer layer =
            make_coupling_layer(dim, c % 2 ? Parity::UpperIdentity : Parity::LowerIdentity, prng, co);
        Matrix h = gaussian(prng, 3, dim);
        const Matrix w = gaussian(prng, 3, dim);
        auto objective = [&] { return weighted_sum(coupling_forward(layer, h).output, w); };
        const auto fwd = coupling_forward(layer, h);
        const auto back = coupling_backward(layer, fwd.cache, w);
        MutableParams p;
        collect_params(layer, p);
        ConstParams g;
        collect_params(back.param_grad, g);
        p.emplace_back(h.data());
        g.emplace_back(back.input_grad.data());
        total.merge(check_gradients(objective, p, g));
    }
    return from_grad("gradient_coupling", total, options.gradient_configs);
}

PropertyResult check_stack_gradients(const VerifyOptions& options) {
    Prng prng = stream(options, kStackGrad);
    GradCheckResult total;
    for (std::size_t c = 0; c < options.gradient_configs; ++c) {
        const std::size_t dim = 2 * (1 + prng.below(3));
        CouplingStack stack = random_stack(dim, 1 + prng.below(4), prng);
        Matrix h = gaussian(prng, 2, dim);
        const Matrix w = gaussian(prng, 2, dim);
        auto objective = [&] { return weighted_sum(stack_apply(stack, h), w); };
        const auto fwd = stack_forward(stack, h);
        const auto back = stack_backward(stack, fwd.caches, w);
        MutableParams p;
        collect_params(stack, p);
        ConstParams g;
        collect_params(back.param_grad, g);
        p.emplace_back(h.data());
        g.emplace_back(back.input_grad.data());
        total.merge(check_gradients(objective, p, g));
    }
    return from_grad("gradient_stack", total, options.gradient_configs);
}

PropertyResult check_surrogate_gradients(const VerifyOptions& options) {
    Prng prng = stream(options, kSurrogateGrad);
    GradCheckResult total;
    for (std::size_t c = 0; c < options.gradient_configs; ++c) {
        const std::size_t feat = 3 + prng.below(4), embed = 2 * (1 + prng.below(3));
        SurrogateOptions so;
        so.coupling.identity_init = false;
        if (c % 2) so.aggregator_output_activation = Activation::Tanh;
        auto modules = build_surrogates({feat}, embed, c % 3, prng, so);
        SurrogateModule& m = modules.front();
        Matrix h = gaussian(prng, 3, feat);
        const Matrix w = gaussian(prng, 3, embed);
        auto objective = [&] { return weighted_sum(surrogate_forward(m, h).latent, w); };
        const auto fwd = surrogate_forward(m, h);
        const auto back = surrogate_backward(m, fwd.cache, w);
        MutableParams p;
        collect_params(m, p);
        ConstParams g;
        collect_params(back.param_grad, g);
        p.emplace_back(h.data());
        g.emplace_back(back.feature_grad.data());
        total.merge(check_gradients(objective, p, g));
    }
    return from_grad("gradient_surrogate", total, options.gradient_configs);
}

PropertyResult check_alignment_gradients(const VerifyOptions& options) {
    Prng prng = stream(options, kAlignGrad);
    GradCheckResult total;
    std::size_t configs = 0;
    for (std::size_t c = 0; c < options.gradient_configs; ++c)
        for (auto variant : {AlignVariant::Pairwise, AlignVariant::Center})
            for (auto norm : {AlignNorm::L2, AlignNorm::SquaredL2}) {
                const std::size_t n = 2 + prng.below(3), dim = 1 + prng.below(4);
                std::vector<Matrix> z;
                for (std::size_t i = 0; i < n; ++i) z.push_back(gaussian(prng, 4, dim));
                const AlignmentConfig cfg{variant, norm, 1.0};
                auto objective = [&] { return align(z, cfg).loss; };
                const auto res = align(z, cfg);
                MutableParams p;
                ConstParams g;
                for (std::size_t i = 0; i < n; ++i) {
                    p.emplace_back(z[i].data());
                    g.emplace_back(res.grads[i].data());
                }
                total.merge(check_gradients(objective, p, g));
                ++configs;
            }
    return from_grad("gradient_alignment", total, configs);
}

PropertyResult check_task_loss_gradients(const VerifyOptions& options) {
    Prng prng = stream(options, kTaskGrad);
    GradCheckResult total;
    std::size_t configs = 0;
    for (std::size_t c = 0; c < options.gradient_configs; ++c)
        for (auto kind : {TaskKind::Regression, TaskKind::Classification, TaskKind::UnitVector}) {
            const std::size_t rows = 4;
            const std::size_t cols = kind == TaskKind::UnitVector ? 3 : 2 + prng.below(4);
            Matrix pred = gaussian(prng, rows, cols);
            TaskTargets t;
            t.values = gaussian(prng, rows, cols);
            for (std::size_t i = 0; i < rows; ++i) {
                t.classes.push_back(prng.below(cols));
                t.mask.push_back(i % 3 != 1);
            }
            auto objective = [&] { return masked_task_loss(pred, t, kind).loss; };
            const auto res = masked_task_loss(pred, t, kind);
            total.merge(check_gradient(objective, pred.data(), res.grad.data()));
            ++configs;
        }
    return from_grad("gradient_task_losses", total, configs);
}

PropertyResult check_alignment_identities(const VerifyOptions& options) {
    Prng prng = stream(options, kIdentities);
    double worst_pair = 0.0, worst_shift = 0.0, worst_perm = 0.0;
    for (std::size_t trial = 0; trial < options.identity_trials; ++trial) {
        const std::size_t dim = 1 + prng.below(8);
        std::vector<Matrix> two{gaussian(prng, 1, dim), gaussian(prng, 1, dim)};
        const double pw = align_pairwise(two, AlignNorm::L2).loss;
        const double ce = align_center(two, AlignNorm::L2).loss;
        worst_pair = std::max(worst_pair, std::abs(pw - ce));

        const std::size_t n = 2 + prng.below(3);
        std::vector<Matrix> z;
        for (std::size_t i = 0; i < n; ++i) z.push_back(gaussian(prng, 3, dim));
        const Matrix offset = gaussian(prng, 1, dim);
        std::vector<Matrix> shifted = z;
        for (auto& m : shifted) add_row_vector(m, offset.row(0));
        std::vector<Matrix> permuted = z;
        std::rotate(permuted.begin(), permuted.begin() + 1, permuted.end());
        for (auto variant : {AlignVariant::Pairwise, AlignVariant::Center})
            for (auto norm : {AlignNorm::L2, AlignNorm::SquaredL2}) {
                const AlignmentConfig cfg{variant, norm, 1.0};
                const double base = align(z, cfg).loss;
                worst_shift = std::max(worst_shift, std::abs(align(shifted, cfg).loss - base));
                worst_perm = std::max(worst_perm, std::abs(align(permuted, cfg).loss - base));
            }
    }
    const bool ok = worst_pair <= 1e-12 && worst_shift <= 1e-10 && worst_perm <= 1e-10;
    return {"alignment_identities", ok,
            "pairwise-center " + fmt(worst_pair) + ", translation " + fmt(worst_shift) + ", permutation " +
                fmt(worst_perm)};
}

PropertyResult check_lemma_bound(const VerifyOptions& options) {
    Prng prng = stream(options, kLemma);
    const std::size_t dim = 16;
    std::size_t violations = 0, triangle = 0, checked = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < options.lemma_stack_pairs; ++k) {
        const CouplingStack a = random_stack(dim, 6, prng);
        const CouplingStack b = random_stack(dim, 6, prng);
        const double L = estimate_lipschitz(a, prng, options.lemma_fit_samples, options.lemma_radius);
        const double delta = estimate_delta(a, b, prng, options.lemma_fit_samples, options.lemma_radius);
        const PairSet held_out =
            options.lemma_close_pairs
                ? sample_pairs(prng, options.lemma_held_out, dim, options.lemma_radius)
                : PairSet{sample_ball(prng, options.lemma_held_out, dim, options.lemma_radius),
                          sample_ball(prng, options.lemma_held_out, dim, options.lemma_radius)};
        const auto report = lemma_bound_check(a, b, held_out, L, delta, options.lemma_safety);
        violations += report.violations;
        triangle += report.triangle_violations;
        checked += report.pairs_checked;
        worst = std::max(worst, report.worst_ratio);
    }
    return {"lemma_bound", violations == 0 && triangle == 0,
            std::to_string(checked) + " pairs, " + std::to_string(violations) + " bound violations, " +
                std::to_string(triangle) + " triangle violations, worst lhs/bound " + fmt(worst)};
}

PropertyResult check_mmd_sanity(const VerifyOptions& options) {
    Prng prng = stream(options, kMmd);
    const Matrix pool = gaussian(prng, 1000, 2);
    std::vector<std::size_t> first(500), second(500);
    for (std::size_t i = 0; i < 500; ++i) {
        first[i] = i;
        second[i] = 500 + i;
    }
    const double null_mmd = mmd_rbf(select_rows(pool, first), select_rows(pool, second)).mmd_sq;
    const Matrix x = gaussian(prng, 500, 2);
    Matrix y = gaussian(prng, 500, 2);
    for (double& v : y.data()) v += 5.0;
    const double sep = mmd_rbf(x, y).mmd_sq;
    return {"mmd_sanity", std::abs(null_mmd) < 0.01 && sep > 0.5,
            "null " + fmt(null_mmd) + ", separated " + fmt(sep)};
}

std::vector<PropertyResult> run_verify_suite(const VerifyOptions& options) {
    return {check_round_trip(options),          check_identity_half(options),
            check_mlp_gradients(options),       check_coupling_gradients(options),
            check_stack_gradients(options),     check_surrogate_gradients(options),
            check_alignment_gradients(options), check_task_loss_gradients(options),
            check_alignment_identities(options), check_lemma_bound(options),
            check_mmd_sanity(options)};
}

}  // namespace nexusflow
