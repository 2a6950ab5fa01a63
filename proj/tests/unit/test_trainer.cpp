#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "nexusflow/error.hpp"
#include "nexusflow/optimizer.hpp"
#include "nexusflow/trainer.hpp"
#include "oracles.hpp"

using namespace nexusflow;

namespace {

BenchConfig small_bench() {
    BenchConfig b;
    b.n_train = 80;
    b.n_val = 40;
    return b;
}

TrainConfig small_train() {
    TrainConfig c;
    c.epochs = 3;
    c.coupling_depth = 2;
    c.embed_dim = 8;
    return c;
}

std::vector<double> flat_backbone(const MtlModel& m) {
    ConstParams p;
    collect_backbone_params(m, p);
    std::vector<double> out;
    for (auto s : p) out.insert(out.end(), s.begin(), s.end());
    return out;
}

TaskTargets targets(Matrix values, std::vector<std::size_t> classes, std::vector<std::uint8_t> mask) {
    return {std::move(values), std::move(classes), std::move(mask)};
}

}  // namespace

TEST(ForwardBatch, SingleSampleShapes) {
    const auto bench = small_bench();
    const auto model = build_model(bench, TrainConfig{});
    Prng p(0);
    const auto f = forward_batch(model, gaussian(p, 1, bench.d_in));
    ASSERT_EQ(f.predictions.size(), 2u);
    EXPECT_EQ(f.predictions[0].shape(), "(1x8)");
    EXPECT_EQ(f.predictions[1].shape(), "(1x5)");
    for (std::size_t t = 0; t < 2; ++t) {
        EXPECT_EQ(f.features[t].shape(), "(1x32)");
        EXPECT_EQ(f.latents[t].shape(), "(1x16)");
    }
}

TEST(ForwardBatch, FreshCouplingsPassEmbeddings) {
    const auto model = build_model(small_bench(), TrainConfig{});
    Prng p(0);
    const auto f = forward_batch(model, gaussian(p, 10, 20));
    for (std::size_t t = 0; t < 2; ++t) EXPECT_EQ(f.latents[t], f.embeddings[t]);
}

TEST(ForwardBatch, MatchesManualComposition) {
    const auto model = build_model(small_bench(), TrainConfig{});
    Prng p(2);
    const Matrix x = gaussian(p, 6, 20);
    const auto f = forward_batch(model, x);
    const Matrix shared = mlp_apply(model.encoder, x);
    for (std::size_t t = 0; t < 2; ++t) {
        const Matrix h = mlp_apply(model.heads[t].trunk, shared);
        EXPECT_EQ(f.features[t], h);
        EXPECT_LT(max_abs_diff(f.predictions[t], mlp_apply(model.heads[t].out, h)), 1e-12);
        EXPECT_LT(max_abs_diff(f.latents[t], surrogate_forward(model.surrogates[t], h).latent), 1e-12);
    }
}

TEST(MaskedLoss, EmptyMaskGivesZero) {
    Prng p(0);
    const Matrix pred = gaussian(p, 3, 4);
    for (TaskKind k : {TaskKind::Regression, TaskKind::UnitVector}) {
        const auto r = masked_task_loss(pred, targets(gaussian(p, 3, 4), {}, {0, 0, 0}), k);
        EXPECT_EQ(r.loss, 0.0);
        EXPECT_EQ(max_abs(r.grad), 0.0);
        EXPECT_EQ(r.supervised, 0u);
    }
    const auto r = masked_task_loss(pred, targets({}, {0, 1, 2}, {0, 0, 0}), TaskKind::Classification);
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_EQ(max_abs(r.grad), 0.0);
}

TEST(MaskedLoss, PerfectPredictions) {
    Prng p(1);
    const Matrix y = gaussian(p, 4, 3);
    EXPECT_EQ(masked_task_loss(y, targets(y, {}, {1, 1, 1, 1}), TaskKind::Regression).loss, 0.0);
    Matrix unit = y;
    for (std::size_t r = 0; r < 4; ++r) {
        const double n = l2_norm(unit.row(r));
        for (double& v : unit.row(r)) v /= n;
    }
    EXPECT_NEAR(masked_task_loss(unit, targets(unit, {}, {1, 1, 1, 1}), TaskKind::UnitVector).loss, 0.0, 1e-15);
    Matrix logits(2, 5, -20.0);
    logits(0, 3) = 20.0;
    logits(1, 0) = 20.0;
    EXPECT_LT(masked_task_loss(logits, targets({}, {3, 0}, {1, 1}), TaskKind::Classification).loss, 1e-3);
}

TEST(MaskedLoss, MaskedRowDropsOut) {
    const Matrix pred{{1.0, 2.0}, {0.5, -1.0}};
    const Matrix tgt{{0.0, 0.0}, {1.5, 1.0}};
    const auto both = masked_task_loss(pred, targets(tgt, {}, {0, 1}), TaskKind::Regression);
    // Only row 1: ((0.5-1.5)^2 + (-1-1)^2) / 2
    EXPECT_DOUBLE_EQ(both.loss, 2.5);
    const auto single = masked_task_loss(Matrix{{0.5, -1.0}}, targets(Matrix{{1.5, 1.0}}, {}, {1}), TaskKind::Regression);
    EXPECT_DOUBLE_EQ(both.loss, single.loss);
    EXPECT_EQ(both.grad(0, 0), 0.0);
    EXPECT_EQ(both.grad(0, 1), 0.0);

    const Matrix logits{{0.2, 1.0, -0.3}, {1.0, 0.0, 0.5}};
    const auto ce = masked_task_loss(logits, targets({}, {2, 0}, {1, 0}), TaskKind::Classification);
    const double lse = std::log(std::exp(0.2) + std::exp(1.0) + std::exp(-0.3));
    EXPECT_NEAR(ce.loss, lse + 0.3, 1e-12);
}

TEST(MaskedLoss, GradientsMatchFiniteDifferences) {
    Prng p(4);
    for (TaskKind k : {TaskKind::Regression, TaskKind::Classification, TaskKind::UnitVector}) {
        const std::size_t cols = k == TaskKind::UnitVector ? 3 : 5;
        Matrix pred = gaussian(p, 6, cols);
        auto tg = targets(gaussian(p, 6, cols), {0, 4, 2, 1, 3, 0}, {1, 0, 1, 1, 0, 1});
        const auto r = masked_task_loss(pred, tg, k);
        const auto num = oracle::fd_gradient([&] { return masked_task_loss(pred, tg, k).loss; }, pred.data());
        for (std::size_t i = 0; i < num.size(); ++i) EXPECT_TRUE(oracle::grad_close(r.grad.data()[i], num[i]));
    }
}

TEST(MaskedLoss, UnsupervisedLabelsNeverMatter) {
    Prng p(5);
    const Matrix pred = gaussian(p, 4, 5);
    auto a = targets(gaussian(p, 4, 5), {1, 2, 3, 4}, {1, 0, 1, 0});
    auto b = a;
    for (std::size_t c = 0; c < 5; ++c) b.values(1, c) += 10.0;
    b.classes[3] = 0;
    for (TaskKind k : {TaskKind::Regression, TaskKind::Classification}) {
        const auto ra = masked_task_loss(pred, a, k), rb = masked_task_loss(pred, b, k);
        EXPECT_EQ(ra.loss, rb.loss);
        EXPECT_EQ(ra.grad, rb.grad);
    }
}

TEST(Evaluate, PerfectPredictions) {
    BenchConfig bench = small_bench();
    bench.n_tasks = 3;
    const auto ds = generate(bench);
    std::vector<Matrix> preds{Matrix(ds.val.size(), bench.d_reg), Matrix(ds.val.size(), bench.n_classes),
                              Matrix(ds.val.size(), 3)};
    for (std::size_t i = 0; i < ds.val.size(); ++i) {
        const auto& s = ds.val[i];
        for (std::size_t k = 0; k < bench.d_reg; ++k) preds[0](i, k) = (*s.y_reg)[k];
        preds[1](i, *s.y_class) = 1.0;
        for (std::size_t k = 0; k < 3; ++k) preds[2](i, k) = 2.0 * (*s.y_dir)[k];
    }
    const std::vector<TaskKind> kinds{TaskKind::Regression, TaskKind::Classification, TaskKind::UnitVector};
    const auto r = evaluate_predictions(preds, ds.val, kinds);
    EXPECT_EQ(r.tasks[0].pooled, 0.0);
    EXPECT_EQ(r.tasks[1].pooled, 1.0);
    EXPECT_NEAR(r.tasks[2].pooled, 0.0, 1e-5);
}

TEST(Evaluate, RandomGuessesAtChance) {
    BenchConfig bench = small_bench();
    bench.n_val = 500;
    const auto ds = generate(bench);
    Prng p(11);
    std::vector<Matrix> preds{Matrix(1000, bench.d_reg), gaussian(p, 1000, 5)};
    const std::vector<TaskKind> kinds{TaskKind::Regression, TaskKind::Classification};
    const auto r = evaluate_predictions(preds, ds.val, kinds);
    EXPECT_NEAR(r.tasks[1].pooled, 0.2, 0.05);
}

TEST(Evaluate, PerDomainAveragesToPooled) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    const auto model = build_model(bench, TrainConfig{});
    const auto r = evaluate(model, ds.val);
    for (const auto& t : r.tasks) {
        double weighted = 0.0;
        std::size_t n = 0;
        for (std::size_t d = 0; d < t.per_domain.size(); ++d) {
            weighted += t.per_domain[d] * static_cast<double>(t.counts[d]);
            n += t.counts[d];
        }
        EXPECT_NEAR(weighted / static_cast<double>(n), t.pooled, 1e-12);
        EXPECT_EQ(n, ds.val.size());
    }
}

TEST(Schedule, EffectiveLambda) {
    TrainConfig c;
    c.epochs = 10;
    c.align.lambda = 0.5;
    EXPECT_EQ(effective_lambda(c, 0), 0.5);
    c.schedule = Schedule::TwoPhase;
    EXPECT_EQ(phase1_epochs(c), 5u);
    EXPECT_EQ(effective_lambda(c, 4), 0.0);
    EXPECT_EQ(effective_lambda(c, 5), 0.5);
    c.phase1_epochs = 11;
    EXPECT_THROW(validate(c), Error);
}

TEST(Train, RecordPopulatedEveryEpoch) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    auto cfg = small_train();
    auto model = build_model(bench, cfg);
    const auto rec = train(model, ds.train, ds.val, cfg);
    ASSERT_EQ(rec.epochs.size(), 3u);
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(rec.epochs[e].epoch, e);
        EXPECT_EQ(rec.epochs[e].task_losses.size(), 2u);
        EXPECT_EQ(rec.epochs[e].val.tasks[0].per_domain.size(), 2u);
    }
    ASSERT_TRUE(rec.latents.has_value());
    const std::string csv = record_csv(rec);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Train, DeterministicForFixedSeed) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    const auto cfg = small_train();
    auto m1 = build_model(bench, cfg), m2 = build_model(bench, cfg);
    const auto r1 = train(m1, ds.train, ds.val, cfg), r2 = train(m2, ds.train, ds.val, cfg);
    EXPECT_EQ(record_csv(r1), record_csv(r2));
    EXPECT_EQ(record_summary_json(r1), record_summary_json(r2));
    ConstParams a, b;
    collect_params(std::as_const(m1), a);
    collect_params(std::as_const(m2), b);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_TRUE(std::equal(a[k].begin(), a[k].end(), b[k].begin()));
}

TEST(Train, ZeroLambdaBackboneIndependentOfSurrogates) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    auto cfg = small_train();
    cfg.align.lambda = 0.0;
    auto attached = build_model(bench, cfg);
    auto cfg_detached = cfg;
    cfg_detached.attach_surrogates = false;
    auto detached = build_model(bench, cfg_detached);
    EXPECT_EQ(flat_backbone(attached), flat_backbone(detached));
    const auto ra = train(attached, ds.train, ds.val, cfg);
    const auto rd = train(detached, ds.train, ds.val, cfg_detached);
    EXPECT_EQ(flat_backbone(attached), flat_backbone(detached));
    for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
        EXPECT_EQ(ra.epochs[e].task_losses, rd.epochs[e].task_losses);
        EXPECT_GT(ra.epochs[e].align_loss, 0.0);
    }
}

TEST(Train, DegenerateTwoPhaseEqualsZeroLambda) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    auto base = small_train();
    base.align.lambda = 0.0;
    auto two = small_train();
    two.schedule = Schedule::TwoPhase;
    two.phase1_epochs = two.epochs;
    auto m0 = build_model(bench, base), m1 = build_model(bench, two);
    const auto r0 = train(m0, ds.train, ds.val, base);
    const auto r1 = train(m1, ds.train, ds.val, two);
    EXPECT_EQ(record_csv(r0), record_csv(r1));
    EXPECT_EQ(record_summary_json(r0), record_summary_json(r1));
}

TEST(Train, AlignmentChangesBackboneWhenEnabled) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    auto on = small_train();
    auto off = small_train();
    off.align.lambda = 0.0;
    auto m_on = build_model(bench, on), m_off = build_model(bench, off);
    train(m_on, ds.train, ds.val, on);
    train(m_off, ds.train, ds.val, off);
    EXPECT_NE(flat_backbone(m_on), flat_backbone(m_off));

    auto stop = small_train();
    stop.stop_gradient_at_h = true;
    auto m_stop = build_model(bench, stop);
    train(m_stop, ds.train, ds.val, stop);
    EXPECT_EQ(flat_backbone(m_stop), flat_backbone(m_off));
}

TEST(Train, LossDropsByEpochTen) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        BenchConfig bench;
        bench.seed = seed;
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.epochs = 11;
        const auto ds = generate(bench);
        auto model = build_model(bench, cfg);
        const auto rec = train(model, ds.train, ds.val, cfg);
        EXPECT_LT(rec.epochs[10].total_loss, rec.epochs[0].total_loss) << "seed " << seed;
    }
}

TEST(Train, DivergenceNamesEpoch) {
    const auto bench = small_bench();
    const auto ds = generate(bench);
    auto cfg = small_train();
    cfg.adam.lr = 1e250;
    cfg.model.activation = Activation::Relu;
    auto model = build_model(bench, cfg);
    try {
        train(model, ds.train, ds.val, cfg);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Divergence);
        EXPECT_NE(std::string(e.what()).find("epoch "), std::string::npos);
    }
}

TEST(Sweep, CardinalityAndSchema) {
    auto bench = small_bench();
    bench.n_train = 40;
    bench.n_val = 20;
    auto cfg = small_train();
    cfg.epochs = 1;
    SweepOptions one;
    one.depths = {0};
    const auto single = ablation_sweep(bench, cfg, one);
    ASSERT_EQ(single.size(), 1u);
    EXPECT_EQ(single[0].label, sweep_label(0, false));

    SweepOptions opts;
    opts.depths = {0, 2};
    opts.seeds = {0, 1, 2};
    opts.variants = {AlignVariant::Center, AlignVariant::Pairwise};
    std::size_t seen = 0;
    opts.on_complete = [&](const SweepCell&) { ++seen; };
    const auto cells = ablation_sweep(bench, cfg, opts);
    EXPECT_EQ(cells.size(), 12u);
    EXPECT_EQ(seen, 12u);

    const std::string table = sweep_table_csv(cells, 2);
    const std::string header = table.substr(0, table.find('\n'));
    std::string expected;
    for (const auto& c : sweep_table_columns(2)) expected += (expected.empty() ? "" : ",") + c;
    EXPECT_EQ(header, expected);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
    EXPECT_NE(header.find("task1_mse_mean,task1_mse_std"), std::string::npos);
    EXPECT_EQ(sweep_runs_header(2), "label,depth,variant,seed,task1_mse,task2_accuracy,mmd,effective_rank\n");
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<double> w{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 0.0};
    Adam opt({0.01, 0.9, 0.999, 1e-8});
    opt.step({std::span<double>(w)}, {std::span<const double>(g)});
    EXPECT_NEAR(w[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(w[1], -2.0 + 0.01, 1e-9);
    EXPECT_EQ(w[2], 0.5);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, InactiveBlocksUntouched) {
    std::vector<double> a{1.0}, b{1.0};
    const std::vector<double> ga{1.0}, gb{1.0};
    Adam opt;
    opt.step({std::span<double>(a), std::span<double>(b)}, {std::span<const double>(ga), std::span<const double>(gb)},
             {true, false});
    EXPECT_LT(a[0], 1.0);
    EXPECT_EQ(b[0], 1.0);
}
