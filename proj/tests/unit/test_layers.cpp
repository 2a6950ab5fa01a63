#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "nexusflow/coupling.hpp"
#include "nexusflow/error.hpp"
#include "nexusflow/gradcheck.hpp"
#include "nexusflow/layers.hpp"
#include "nexusflow/verify.hpp"
#include "oracles.hpp"

using namespace nexusflow;

namespace {

Mlp random_mlp(Prng& p, std::vector<std::size_t> dims, Activation hidden = Activation::Tanh) {
    MlpShape shape{std::move(dims), hidden, Activation::Identity};
    Mlp m = make_mlp(shape, p);
    for (auto& l : m.layers)
        for (auto& b : l.bias) b = 0.1 * p.normal();
    return m;
}

// Step-by-step evaluation of one sample through the network.
std::vector<double> reference_mlp(const Mlp& m, std::vector<double> x) {
    for (const auto& l : m.layers) {
        std::vector<double> y(l.out_dim());
        for (std::size_t o = 0; o < l.out_dim(); ++o) {
            double s = l.bias[o];
            for (std::size_t i = 0; i < l.in_dim(); ++i) s += l.weight(o, i) * x[i];
            switch (l.activation) {
                case Activation::Tanh: y[o] = std::tanh(s); break;
                case Activation::Relu: y[o] = s > 0 ? s : 0.0; break;
                case Activation::Identity: y[o] = s; break;
            }
        }
        x = std::move(y);
    }
    return x;
}

Mlp identity_mlp(std::size_t n) {
    Mlp m;
    m.layers.push_back({Matrix::identity(n), std::vector<double>(n, 0.0), Activation::Identity});
    return m;
}

}  // namespace

TEST(Mlp, ZeroMapGivesZero) {
    Mlp m;
    m.layers.push_back({Matrix(3, 4), std::vector<double>(3, 0.0), Activation::Identity});
    Prng p(0);
    const Matrix y = mlp_apply(m, gaussian(p, 5, 4));
    EXPECT_EQ(y, Matrix(5, 3));
}

TEST(Mlp, IdentityLayerPassesInput) {
    Prng p(0);
    const Matrix x = gaussian(p, 5, 4);
    EXPECT_EQ(mlp_apply(identity_mlp(4), x), x);
}

TEST(Mlp, MatchesStepByStepEvaluation) {
    Prng p(1);
    for (Activation a : {Activation::Tanh, Activation::Relu}) {
        const Mlp m = random_mlp(p, {5, 7, 3}, a);
        const Matrix x = gaussian(p, 6, 5);
        const Matrix y = mlp_forward(m, x).output;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto ref = reference_mlp(m, {x.row(r).begin(), x.row(r).end()});
            for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y(r, c), ref[c], 1e-12);
        }
    }
}

TEST(Mlp, InitVarianceFollowsFanIn) {
    Prng p(3);
    const Mlp m = make_mlp({{200, 300, 4}}, p);
    EXPECT_NEAR(oracle::column_variance(Matrix(60000, 1, std::vector<double>(m.layers[0].weight.data().begin(),
                                                                              m.layers[0].weight.data().end())),
                                        0),
                1.0 / 200.0, 2e-4);
    for (double b : m.layers[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Mlp, ZeroOutputInit) {
    Prng p(3);
    const Mlp m = make_mlp({{4, 8, 2}}, p, true);
    EXPECT_EQ(max_abs(m.layers.back().weight), 0.0);
    EXPECT_GT(max_abs(m.layers.front().weight), 0.0);
}

TEST(Mlp, ShapeErrors) {
    Prng p(0);
    const Mlp m = random_mlp(p, {4, 3});
    EXPECT_THROW(mlp_forward(m, Matrix(2, 5)), Error);
    Mlp broken = m;
    broken.layers.push_back({Matrix(2, 7), std::vector<double>(2), Activation::Identity});
    EXPECT_THROW(validate(broken), Error);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGrads) {
    Prng p(2);
    const Mlp m = random_mlp(p, {4, 6, 3});
    const auto f = mlp_forward(m, gaussian(p, 5, 4));
    const auto b = mlp_backward(m, f.cache, Matrix(5, 3));
    EXPECT_EQ(max_abs(b.input_grad), 0.0);
    for (const auto& l : b.param_grad.layers) {
        EXPECT_EQ(max_abs(l.weight), 0.0);
        for (double v : l.bias) EXPECT_EQ(v, 0.0);
    }
}

TEST(MlpBackward, IdentityJacobian) {
    Prng p(2);
    const Mlp m = identity_mlp(3);
    const auto f = mlp_forward(m, gaussian(p, 4, 3));
    const Matrix up = gaussian(p, 4, 3);
    EXPECT_EQ(mlp_backward(m, f.cache, up).input_grad, up);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
    Prng p(4);
    for (int cfg = 0; cfg < 4; ++cfg) {
        Mlp m = random_mlp(p, {3, 5, 4, 2}, cfg % 2 ? Activation::Relu : Activation::Tanh);
        Matrix x = gaussian(p, 4, 3);
        const Matrix w = gaussian(p, 4, 2);
        const auto f = mlp_forward(m, x);
        const auto b = mlp_backward(m, f.cache, w);
        auto objective = [&] { return weighted_sum(mlp_apply(m, x), w); };

        MutableParams values;
        collect_params(m, values);
        ConstParams analytic;
        collect_params(std::as_const(b.param_grad), analytic);
        for (std::size_t k = 0; k < values.size(); ++k) {
            const auto num = oracle::fd_gradient(objective, values[k]);
            for (std::size_t i = 0; i < num.size(); ++i) EXPECT_TRUE(oracle::grad_close(analytic[k][i], num[i]));
        }
        const auto num_x = oracle::fd_gradient(objective, x.data());
        for (std::size_t i = 0; i < num_x.size(); ++i)
            EXPECT_TRUE(oracle::grad_close(b.input_grad.data()[i], num_x[i]));
    }
}

TEST(MlpBackward, StaleCacheRejected) {
    Prng p(0);
    const Mlp a = random_mlp(p, {4, 6, 3});
    const Mlp b = random_mlp(p, {4, 3});
    const auto f = mlp_forward(a, gaussian(p, 2, 4));
    try {
        mlp_backward(b, f.cache, Matrix(2, 3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StaleCache);
    }
    EXPECT_THROW(mlp_backward(a, f.cache, Matrix(3, 3)), Error);
}

TEST(Coupling, NeutralParametersAreIdentity) {
    Prng p(0);
    const auto layer = make_coupling_layer(6, Parity::LowerIdentity, p);
    const Matrix h = gaussian(p, 4, 6);
    EXPECT_EQ(coupling_forward(layer, h).output, h);
    EXPECT_EQ(coupling_inverse(layer, h), h);
}

TEST(Coupling, ConstantShiftIsExact) {
    Prng p(0);
    auto layer = make_coupling_layer(4, Parity::UpperIdentity, p);
    layer.t_net.layers.back().bias = {0.75, -2.5};
    const Matrix h = gaussian(p, 3, 4);
    const Matrix z = coupling_forward(layer, h).output;
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(z(r, 0), h(r, 0) + 0.75);
        EXPECT_EQ(z(r, 1), h(r, 1) - 2.5);
        EXPECT_EQ(z(r, 2), h(r, 2));
        EXPECT_EQ(z(r, 3), h(r, 3));
    }
}

TEST(Coupling, MatchesScalarReevaluation) {
    Prng p(7);
    const auto stack = random_stack(8, 2, p);
    const Matrix h = gaussian(p, 5, 8);
    for (const auto& layer : stack.layers) {
        const Matrix z = coupling_forward(layer, h).output;
        const std::size_t lo = layer.parity == Parity::LowerIdentity ? 0 : 4;
        const std::size_t hi = 4 - lo;
        for (std::size_t r = 0; r < 5; ++r) {
            const std::vector<double> a(h.row(r).begin() + lo, h.row(r).begin() + lo + 4);
            const auto s = reference_mlp(layer.s_net, a);
            const auto t = reference_mlp(layer.t_net, a);
            for (std::size_t j = 0; j < 4; ++j) {
                const double st = 2.0 * std::tanh(s[j] / 2.0);
                EXPECT_NEAR(z(r, hi + j), h(r, hi + j) * std::exp(st) + t[j], 1e-12);
                EXPECT_EQ(z(r, lo + j), h(r, lo + j));
            }
        }
    }
}

TEST(Coupling, ClampBoundsScaleExponent) {
    for (double s : {-1e6, -30.0, -1.0, 0.0, 0.5, 40.0, 1e9}) {
        const double c = clamp_scale(s, 2.0);
        EXPECT_LE(std::abs(c), 2.0);
        if (std::abs(s) < 10) {
            EXPECT_LT(std::abs(c), 2.0);
        }
    }
    EXPECT_EQ(clamp_scale(37.0, std::numeric_limits<double>::infinity()), 37.0);
}

TEST(Coupling, OddWidthRejected) {
    Prng p(0);
    EXPECT_THROW(make_coupling_layer(5, Parity::LowerIdentity, p), Error);
    const auto layer = make_coupling_layer(4, Parity::LowerIdentity, p);
    EXPECT_THROW(coupling_forward(layer, Matrix(2, 3)), Error);
    EXPECT_THROW(coupling_forward(layer, Matrix(2, 6)), Error);
}

TEST(Coupling, RoundTripDepthOne) {
    Prng p(11);
    const auto stack = random_stack(16, 1, p);
    const Matrix h = gaussian(p, 100, 16);
    EXPECT_LT(max_abs_diff(coupling_inverse(stack.layers[0], coupling_forward(stack.layers[0], h).output), h), 1e-10);
    const Matrix z = gaussian(p, 100, 16);
    EXPECT_LT(max_abs_diff(coupling_forward(stack.layers[0], coupling_inverse(stack.layers[0], z)).output, z), 1e-9);
}

TEST(CouplingBackward, NeutralIsIdentityJacobian) {
    Prng p(0);
    const auto layer = make_coupling_layer(6, Parity::LowerIdentity, p);
    const auto f = coupling_forward(layer, gaussian(p, 3, 6));
    const Matrix up = gaussian(p, 3, 6);
    EXPECT_EQ(coupling_backward(layer, f.cache, up).input_grad, up);
}

TEST(CouplingBackward, ZeroUpstream) {
    Prng p(0);
    const auto stack = random_stack(6, 1, p);
    const auto f = coupling_forward(stack.layers[0], gaussian(p, 3, 6));
    const auto b = coupling_backward(stack.layers[0], f.cache, Matrix(3, 6));
    EXPECT_EQ(max_abs(b.input_grad), 0.0);
    ConstParams g;
    collect_params(std::as_const(b.param_grad), g);
    for (auto block : g)
        for (double v : block) EXPECT_EQ(v, 0.0);
}

TEST(CouplingBackward, MatchesFiniteDifferences) {
    Prng p(5);
    for (double clamp : {2.0, 0.5, std::numeric_limits<double>::infinity()}) {
        auto stack = random_stack(6, 2, p, clamp);
        Matrix h = gaussian(p, 4, 6);
        const Matrix w = gaussian(p, 4, 6);
        for (auto& layer : stack.layers) {
            const auto f = coupling_forward(layer, h);
            const auto b = coupling_backward(layer, f.cache, w);
            auto objective = [&] { return weighted_sum(coupling_forward(layer, h).output, w); };
            MutableParams values;
            collect_params(layer, values);
            ConstParams analytic;
            collect_params(std::as_const(b.param_grad), analytic);
            EXPECT_TRUE(check_gradients(objective, values, analytic).passed());
            EXPECT_TRUE(check_gradient(objective, h.data(), b.input_grad.data()).passed());
        }
    }
}

TEST(CouplingBackward, MismatchedCacheRejected) {
    Prng p(0);
    const auto stack = random_stack(6, 1, p);
    const auto f = coupling_forward(stack.layers[0], gaussian(p, 3, 6));
    EXPECT_THROW(coupling_backward(stack.layers[0], f.cache, Matrix(2, 6)), Error);
    EXPECT_THROW(stack_backward(stack, {}, Matrix(3, 6)), Error);
}

TEST(Stack, EmptyStackIsIdentity) {
    CouplingStack s;
    s.dim = 4;
    Prng p(0);
    const Matrix h = gaussian(p, 3, 4);
    EXPECT_EQ(stack_apply(s, h), h);
    EXPECT_EQ(stack_inverse(s, h), h);
}

TEST(Stack, ParitiesAlternate) {
    Prng p(0);
    const auto s = make_coupling_stack(4, 5, p);
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_EQ(s.layers[i].parity, i % 2 ? Parity::UpperIdentity : Parity::LowerIdentity);
}

TEST(Stack, NeutralDepthTwoIsIdentity) {
    Prng p(0);
    const auto s = make_coupling_stack(8, 2, p);
    const Matrix h = gaussian(p, 3, 8);
    EXPECT_EQ(stack_apply(s, h), h);
}

TEST(Stack, DepthTwoTransformsEveryCoordinate) {
    Prng p(2);
    const auto s = random_stack(8, 2, p);
    const Matrix h = gaussian(p, 1, 8);
    const Matrix z = stack_apply(s, h);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NE(z(0, c), h(0, c));
}

TEST(Stack, RoundTripAllDepths) {
    Prng p(13);
    for (std::size_t depth : {1u, 2u, 4u, 6u, 8u}) {
        const auto s = random_stack(16, depth, p);
        const Matrix h = gaussian(p, 100, 16);
        EXPECT_LT(max_abs_diff(stack_inverse(s, stack_apply(s, h)), h), 1e-8) << "depth " << depth;
    }
}

TEST(StackBackward, MatchesFiniteDifferences) {
    Prng p(17);
    auto s = random_stack(4, 3, p);
    Matrix h = gaussian(p, 3, 4);
    const Matrix w = gaussian(p, 3, 4);
    const auto f = stack_forward(s, h);
    EXPECT_EQ(f.output, stack_apply(s, h));
    const auto b = stack_backward(s, f.caches, w);
    auto objective = [&] { return weighted_sum(stack_apply(s, h), w); };
    MutableParams values;
    collect_params(s, values);
    ConstParams analytic;
    collect_params(std::as_const(b.param_grad), analytic);
    EXPECT_TRUE(check_gradients(objective, values, analytic).passed());
    EXPECT_TRUE(check_gradient(objective, h.data(), b.input_grad.data()).passed());
}

TEST(GradCheck, DetectsWrongGradient) {
    std::vector<double> v{1.0, 2.0};
    auto f = [&] { return v[0] * v[0] + 3.0 * v[1]; };
    const std::vector<double> good{2.0, 3.0}, bad{2.0, 3.1};
    EXPECT_TRUE(check_gradient(f, v, good).passed());
    EXPECT_FALSE(check_gradient(f, v, bad).passed());
    EXPECT_EQ(v[0], 1.0);
    EXPECT_TRUE(gradient_entry_ok(1e-9, 0.0, {}));
}
