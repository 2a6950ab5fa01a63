#include "nexusflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nexusflow/diagnostics.hpp"
#include "nexusflow/error.hpp"
#include "nexusflow/io.hpp"
#include "nexusflow/linalg.hpp"

namespace nexusflow {

const char* to_string(Schedule s) { return s == Schedule::OnePhase ? "one_phase" : "two_phase"; }

Schedule schedule_from_string(const std::string& s) {
    if (s == "one_phase") return Schedule::OnePhase;
    if (s == "two_phase") return Schedule::TwoPhase;
    throw Error(ErrorKind::InvalidArgument, "unknown schedule '" + s + "'");
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.adam.lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
    if (cfg.epochs == 0) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
    if (cfg.batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
    if (!(cfg.align.lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 0");
    if (cfg.embed_dim == 0 || cfg.embed_dim % 2 != 0)
        throw Error(ErrorKind::InvalidArgument, "embed_dim must be even and positive");
    if (cfg.phase1_epochs && *cfg.phase1_epochs > cfg.epochs)
        throw Error(ErrorKind::InvalidArgument, "phase1_epochs exceeds epochs");
}

std::size_t phase1_epochs(const TrainConfig& cfg) {
    if (cfg.schedule == Schedule::OnePhase) return 0;
    return cfg.phase1_epochs.value_or(cfg.epochs / 2);
}

double effective_lambda(const TrainConfig& cfg, std::size_t epoch) {
    return epoch < phase1_epochs(cfg) ? 0.0 : cfg.align.lambda;
}

MtlModel build_model(const BenchConfig& bench, const TrainConfig& cfg) {
    validate(bench);
    validate(cfg);
    Prng root(cfg.seed);
    Prng init = root.fork(1);
    Prng surrogate_init = root.fork(2);
    const auto& mc = cfg.model;

    MtlModel model;
    model.encoder = make_mlp({{bench.d_in, mc.encoder_hidden, mc.shared_dim}, mc.activation, mc.activation}, init);
    std::vector<std::size_t> feature_dims;
    for (std::size_t t = 0; t < bench.n_tasks; ++t) {
        TaskHead head;
        head.trunk = make_mlp({{mc.shared_dim, mc.head_hidden}, mc.activation, mc.activation}, init);
        head.out = make_mlp({{mc.head_hidden, task_output_dim(bench, t)}, Activation::Identity, Activation::Identity}, init);
        model.heads.push_back(std::move(head));
        model.kinds.push_back(task_kind(t));
        feature_dims.push_back(mc.head_hidden);
    }
    if (cfg.attach_surrogates) {
        SurrogateOptions so;
        so.aggregator_output_activation = cfg.aggregator_activation;
        so.coupling.clamp = cfg.coupling_clamp;
        so.coupling.hidden_factor = cfg.coupling_hidden_factor;
        model.surrogates = build_surrogates(feature_dims, cfg.embed_dim, cfg.coupling_depth, surrogate_init, so);
    }
    return model;
}

MtlModel zeros_like(const MtlModel& model) {
    MtlModel g;
    g.encoder = zeros_like(model.encoder);
    for (const auto& h : model.heads) g.heads.push_back({zeros_like(h.trunk), zeros_like(h.out)});
    g.kinds = model.kinds;
    for (const auto& s : model.surrogates) g.surrogates.push_back(zeros_like(s));
    return g;
}

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices, const MtlModel& model,
                 bool all_labels) {
    Batch batch;
    if (indices.empty()) throw Error(ErrorKind::InvalidArgument, "make_batch: empty batch");
    const std::size_t d_in = model.encoder.in_dim();
    batch.x = Matrix(indices.size(), d_in);
    batch.domains.resize(indices.size());
    for (std::size_t t = 0; t < model.n_tasks(); ++t) {
        TaskTargets tt;
        tt.values = Matrix(indices.size(), model.heads[t].out.out_dim());
        tt.classes.assign(indices.size(), 0);
        tt.mask.assign(indices.size(), 0);
        batch.tasks.push_back(std::move(tt));
    }
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const Sample& s = samples[indices[r]];
        if (s.x.size() != d_in)
            throw Error(ErrorKind::ShapeMismatch, "sample has " + std::to_string(s.x.size()) + " inputs, model expects " +
                                                      std::to_string(d_in));
        std::copy(s.x.begin(), s.x.end(), batch.x.row(r).begin());
        batch.domains[r] = s.domain;
        for (std::size_t t = 0; t < model.n_tasks(); ++t) {
            auto& tt = batch.tasks[t];
            bool present = false;
            switch (model.kinds[t]) {
                case TaskKind::Regression:
                    if (s.y_reg) {
                        std::copy(s.y_reg->begin(), s.y_reg->end(), tt.values.row(r).begin());
                        present = true;
                    }
                    break;
                case TaskKind::Classification:
                    if (s.y_class) {
                        tt.classes[r] = *s.y_class;
                        present = true;
                    }
                    break;
                case TaskKind::UnitVector:
                    if (s.y_dir) {
                        std::copy(s.y_dir->begin(), s.y_dir->end(), tt.values.row(r).begin());
                        present = true;
                    }
                    break;
            }
            const bool supervised = all_labels ? present : (t < s.mask.size() && s.mask[t] != 0);
            if (supervised && !present)
                throw Error(ErrorKind::InvalidArgument, "sample marked supervised for task " + std::to_string(t) +
                                                            " has no label");
            tt.mask[r] = supervised ? 1 : 0;
        }
    }
    return batch;
}

ForwardPass forward_batch(const MtlModel& model, const Matrix& x) {
    if (x.rows() == 0) throw Error(ErrorKind::InvalidArgument, "forward_batch: empty batch");
    ForwardPass fp;
    auto enc = mlp_forward(model.encoder, x);
    fp.shared = std::move(enc.output);
    fp.encoder_cache = std::move(enc.cache);
    for (std::size_t t = 0; t < model.n_tasks(); ++t) {
        auto trunk = mlp_forward(model.heads[t].trunk, fp.shared);
        auto out = mlp_forward(model.heads[t].out, trunk.output);
        fp.features.push_back(std::move(trunk.output));
        fp.trunk_caches.push_back(std::move(trunk.cache));
        fp.predictions.push_back(std::move(out.output));
        fp.out_caches.push_back(std::move(out.cache));
    }
    for (std::size_t t = 0; t < model.surrogates.size(); ++t) {
        auto sur = surrogate_forward(model.surrogates[t], fp.features[t]);
        fp.embeddings.push_back(std::move(sur.embedding));
        fp.latents.push_back(std::move(sur.latent));
        fp.surrogate_caches.push_back(std::move(sur.cache));
    }
    return fp;
}

std::vector<Matrix> predict(const MtlModel& model, const Matrix& x) {
    const Matrix shared = mlp_apply(model.encoder, x);
    std::vector<Matrix> preds;
    for (const auto& head : model.heads) preds.push_back(mlp_apply(head.out, mlp_apply(head.trunk, shared)));
    return preds;
}

LossResult masked_task_loss(const Matrix& predictions, const TaskTargets& targets, TaskKind kind) {
    const std::size_t rows = predictions.rows();
    const std::size_t cols = predictions.cols();
    if (targets.mask.size() != rows)
        throw Error(ErrorKind::ShapeMismatch, "masked_task_loss: mask length " + std::to_string(targets.mask.size()) +
                                                  " vs batch " + std::to_string(rows));
    LossResult r;
    r.grad = Matrix(rows, cols);
    for (auto m : targets.mask) r.supervised += m ? 1 : 0;
    if (r.supervised == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(r.supervised);

    for (std::size_t i = 0; i < rows; ++i) {
        if (!targets.mask[i]) continue;
        auto p = predictions.row(i);
        auto g = r.grad.row(i);
        switch (kind) {
            case TaskKind::Regression: {
                const double scale = inv_n / static_cast<double>(cols);
                auto y = targets.values.row(i);
                for (std::size_t k = 0; k < cols; ++k) {
                    const double d = p[k] - y[k];
                    r.loss += d * d * scale;
                    g[k] = 2.0 * d * scale;
                }
                break;
            }
            case TaskKind::Classification: {
                const std::size_t label = targets.classes[i];
                if (label >= cols)
                    throw Error(ErrorKind::InvalidArgument, "class label " + std::to_string(label) + " out of range");
                const double mx = *std::max_element(p.begin(), p.end());
                double z = 0.0;
                for (double v : p) z += std::exp(v - mx);
                const double log_z = mx + std::log(z);
                r.loss += (log_z - p[label]) * inv_n;
                for (std::size_t k = 0; k < cols; ++k) g[k] = std::exp(p[k] - log_z) * inv_n;
                g[label] -= inv_n;
                break;
            }
            case TaskKind::UnitVector: {
                auto y = targets.values.row(i);
                const double pn = l2_norm(p);
                const double yn = l2_norm(y);
                double dot = 0.0;
                for (std::size_t k = 0; k < cols; ++k) dot += p[k] * y[k];
                if (pn == 0.0 || yn == 0.0) {
                    r.loss += inv_n;
                    break;
                }
                const double cosine = dot / (pn * yn);
                r.loss += (1.0 - cosine) * inv_n;
                for (std::size_t k = 0; k < cols; ++k)
                    g[k] = -inv_n * (y[k] / (pn * yn) - cosine * p[k] / (pn * pn));
                break;
            }
        }
    }
    return r;
}

const char* metric_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::Regression: return "mse";
        case TaskKind::Classification: return "accuracy";
        case TaskKind::UnitVector: return "angle_deg";
    }
    return "metric";
}

EvalResult evaluate_predictions(std::span<const Matrix> predictions, std::span<const Sample> samples,
                                std::span<const TaskKind> kinds) {
    if (predictions.size() != kinds.size())
        throw Error(ErrorKind::ShapeMismatch, "evaluate: predictions for " + std::to_string(predictions.size()) +
                                                  " tasks, kinds for " + std::to_string(kinds.size()));
    std::size_t n_domains = 0;
    for (const auto& s : samples) n_domains = std::max(n_domains, s.domain + 1);

    EvalResult result;
    for (std::size_t t = 0; t < kinds.size(); ++t) {
        const Matrix& pred = predictions[t];
        if (pred.rows() != samples.size())
            throw Error(ErrorKind::ShapeMismatch, "evaluate: task " + std::to_string(t) + " predictions " + pred.shape());
        TaskMetric metric;
        metric.kind = kinds[t];
        std::vector<double> sums(n_domains, 0.0);
        metric.counts.assign(n_domains, 0);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Sample& s = samples[i];
            auto p = pred.row(i);
            double value = 0.0;
            switch (kinds[t]) {
                case TaskKind::Regression: {
                    if (!s.y_reg) continue;
                    for (std::size_t k = 0; k < p.size(); ++k) {
                        const double d = p[k] - (*s.y_reg)[k];
                        value += d * d;
                    }
                    value /= static_cast<double>(p.size());
                    break;
                }
                case TaskKind::Classification: {
                    if (!s.y_class) continue;
                    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
                    value = best == *s.y_class ? 1.0 : 0.0;
                    break;
                }
                case TaskKind::UnitVector: {
                    if (!s.y_dir) continue;
                    const double pn = l2_norm(p);
                    const double yn = l2_norm(*s.y_dir);
                    double dot = 0.0;
                    for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * (*s.y_dir)[k];
                    const double cosine = (pn > 0.0 && yn > 0.0) ? std::clamp(dot / (pn * yn), -1.0, 1.0) : 0.0;
                    value = std::acos(cosine) * 180.0 / std::numbers::pi;
                    break;
                }
            }
            sums[s.domain] += value;
            ++metric.counts[s.domain];
        }
        double total = 0.0;
        std::size_t count = 0;
        metric.per_domain.assign(n_domains, 0.0);
        for (std::size_t d = 0; d < n_domains; ++d) {
            total += sums[d];
            count += metric.counts[d];
            if (metric.counts[d] > 0) metric.per_domain[d] = sums[d] / static_cast<double>(metric.counts[d]);
        }
        metric.pooled = count > 0 ? total / static_cast<double>(count) : 0.0;
        result.tasks.push_back(std::move(metric));
    }
    return result;
}

namespace {

Matrix inputs_of(std::span<const Sample> samples, std::size_t d_in) {
    Matrix x(samples.size(), d_in);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].x.size() != d_in)
            throw Error(ErrorKind::ShapeMismatch, "sample has " + std::to_string(samples[i].x.size()) +
                                                      " inputs, model expects " + std::to_string(d_in));
        std::copy(samples[i].x.begin(), samples[i].x.end(), x.row(i).begin());
    }
    return x;
}

}  // namespace

EvalResult evaluate(const MtlModel& model, std::span<const Sample> val) {
    const auto preds = predict(model, inputs_of(val, model.encoder.in_dim()));
    return evaluate_predictions(preds, val, model.kinds);
}

LatentSet compute_latents(const MtlModel& model, std::span<const Sample> samples) {
    if (model.surrogates.empty()) throw Error(ErrorKind::InvalidArgument, "model has no surrogate modules");
    const auto fp = forward_batch(model, inputs_of(samples, model.encoder.in_dim()));
    return {fp.latents, fp.embeddings};
}

LatentSummary summarize_latents(const MtlModel& model, std::span<const Sample> samples, bool use_embeddings) {
    const auto set = compute_latents(model, samples);
    const auto& feats = use_embeddings ? set.embeddings : set.latents;
    const std::size_t n = feats.size();

    // Latents of task t restricted to the domain where task t is supervised.
    std::vector<Matrix> own_domain;
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].domain == t) rows.push_back(i);
        own_domain.push_back(select_rows(feats[t], rows));
    }

    LatentSummary summary;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = mmd_rbf(own_domain[i], own_domain[j]).mmd_sq;
            summary.pair_mmd.push_back(m);
            total += m;
        }
    summary.mmd = summary.pair_mmd.empty() ? 0.0 : total / static_cast<double>(summary.pair_mmd.size());

    summary.spectrum = pca_spectrum(vstack(feats));
    summary.effective_rank = effective_rank(summary.spectrum);
    for (const auto& f : feats) summary.task_effective_ranks.push_back(effective_rank(pca_spectrum(f)));
    return summary;
}

namespace {

struct StepLosses {
    std::vector<double> task;
    double align = 0.0;
    double total = 0.0;
};

StepLosses train_step(MtlModel& model, const Batch& batch, const TrainConfig& cfg, double lambda, bool freeze_backbone,
                      Adam& adam) {
    const auto fp = forward_batch(model, batch.x);
    const std::size_t n = model.n_tasks();
    StepLosses losses;
    MtlModel grads = zeros_like(model);

    std::vector<Matrix> feature_grads(n);
    if (!model.surrogates.empty()) {
        const auto aligned = align(fp.latents, cfg.align);
        losses.align = aligned.loss;
        if (lambda > 0.0) {
            for (std::size_t t = 0; t < n; ++t) {
                auto back = surrogate_backward(model.surrogates[t], fp.surrogate_caches[t], lambda * aligned.grads[t]);
                grads.surrogates[t] = std::move(back.param_grad);
                if (!cfg.stop_gradient_at_h) feature_grads[t] = std::move(back.feature_grad);
            }
        }
    }

    Matrix shared_grad(fp.shared.rows(), fp.shared.cols());
    for (std::size_t t = 0; t < n; ++t) {
        auto loss = masked_task_loss(fp.predictions[t], batch.tasks[t], model.kinds[t]);
        losses.task.push_back(loss.loss);
        auto out_back = mlp_backward(model.heads[t].out, fp.out_caches[t], loss.grad);
        Matrix h_grad = std::move(out_back.input_grad);
        if (!feature_grads[t].empty()) h_grad += feature_grads[t];
        auto trunk_back = mlp_backward(model.heads[t].trunk, fp.trunk_caches[t], h_grad);
        shared_grad += trunk_back.input_grad;
        grads.heads[t] = {std::move(trunk_back.param_grad), std::move(out_back.param_grad)};
    }
    grads.encoder = mlp_backward(model.encoder, fp.encoder_cache, shared_grad).param_grad;
    losses.total = total_loss(losses.task, losses.align, lambda);

    MutableParams params;
    collect_params(model, params);
    ConstParams grad_views;
    collect_params(std::as_const(grads), grad_views);
    std::vector<bool> active;
    if (freeze_backbone) {
        ConstParams backbone;
        collect_backbone_params(std::as_const(model), backbone);
        active.assign(params.size(), true);
        std::fill(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(backbone.size()), false);
    }
    adam.step(params, grad_views, active);
    return losses;
}

}  // namespace

RunRecord train(MtlModel& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                const TrainConfig& cfg) {
    validate(cfg);
    if (train_set.empty()) throw Error(ErrorKind::InvalidArgument, "train: empty training set");
    Prng shuffle = Prng(cfg.seed).fork(3);
    Adam adam(cfg.adam);
    RunRecord record;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = model.n_tasks();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lambda = effective_lambda(cfg, epoch);
        const bool freeze = cfg.freeze_backbone_phase2 && cfg.schedule == Schedule::TwoPhase &&
                            epoch >= phase1_epochs(cfg);
        shuffle.shuffle(std::span<std::size_t>(order));

        EpochRecord er;
        er.epoch = epoch;
        er.lambda = lambda;
        er.task_losses.assign(n, 0.0);
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const auto idx = std::span<const std::size_t>(order).subspan(start, stop - start);
            const Batch batch = make_batch(train_set, idx, model);
            StepLosses step;
            try {
                step = train_step(model, batch, cfg, lambda, freeze, adam);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::NonFinite)
                    throw Error(ErrorKind::Divergence, "epoch " + std::to_string(epoch) + ": " + e.what());
                throw;
            }
            if (!std::isfinite(step.total) || !std::isfinite(step.align))
                throw Error(ErrorKind::Divergence, "epoch " + std::to_string(epoch) + ": non-finite training loss");
            for (std::size_t t = 0; t < n; ++t) er.task_losses[t] += step.task[t];
            er.align_loss += step.align;
            er.total_loss += step.total;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        for (double& l : er.task_losses) l *= inv;
        er.align_loss *= inv;
        er.total_loss *= inv;
        er.val = evaluate(model, val_set);
        record.epochs.push_back(std::move(er));
    }
    if (!model.surrogates.empty()) record.latents = summarize_latents(model, val_set, cfg.mmd_on_embeddings);
    return record;
}

std::string record_csv(const RunRecord& record) {
    std::ostringstream out;
    const std::size_t n = record.epochs.empty() ? 0 : record.epochs.front().task_losses.size();
    std::size_t n_domains = 0;
    if (!record.epochs.empty() && !record.epochs.front().val.tasks.empty())
        n_domains = record.epochs.front().val.tasks.front().per_domain.size();
    out << "epoch,lambda";
    for (std::size_t t = 0; t < n; ++t) out << ",task" << t + 1 << "_loss";
    out << ",align_loss,total_loss";
    for (std::size_t t = 0; t < n; ++t) {
        const char* name = metric_name(task_kind(t));
        out << ",task" << t + 1 << '_' << name;
        for (std::size_t d = 0; d < n_domains; ++d) out << ",task" << t + 1 << '_' << name << "_domain" << d;
    }
    out << '\n';
    for (const auto& e : record.epochs) {
        out << e.epoch << ',' << io::format_double(e.lambda);
        for (double l : e.task_losses) out << ',' << io::format_double(l);
        out << ',' << io::format_double(e.align_loss) << ',' << io::format_double(e.total_loss);
        for (const auto& m : e.val.tasks) {
            out << ',' << io::format_double(m.pooled);
            for (double v : m.per_domain) out << ',' << io::format_double(v);
        }
        out << '\n';
    }
    return out.str();
}

std::string record_summary_json(const RunRecord& record) {
    nlohmann::ordered_json j;
    j["epochs"] = record.epochs.size();
    if (!record.epochs.empty()) {
        const auto& last = record.epochs.back();
        nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
        for (std::size_t t = 0; t < last.val.tasks.size(); ++t) {
            const auto& m = last.val.tasks[t];
            metrics.push_back({{"task", t + 1},
                               {"kind", to_string(m.kind)},
                               {"metric", metric_name(m.kind)},
                               {"pooled", m.pooled},
                               {"per_domain", m.per_domain},
                               {"counts", m.counts}});
        }
        j["final_val"] = metrics;
        j["final_task_losses"] = last.task_losses;
        j["final_align_loss"] = last.align_loss;
        j["final_total_loss"] = last.total_loss;
    }
    if (record.latents) {
        const auto& l = *record.latents;
        j["latent_mmd"] = l.mmd;
        j["latent_pair_mmd"] = l.pair_mmd;
        j["effective_rank"] = l.effective_rank;
        j["task_effective_ranks"] = l.task_effective_ranks;
        j["spectrum"] = l.spectrum;
    }
    return j.dump(2) + "\n";
}

std::string sweep_label(std::size_t depth, bool baseline) {
    if (baseline) return "Baseline";
    if (depth == 0) return "Ours (w/o inv)";
    return "Ours (" + std::to_string(depth) + " Layer)";
}

std::vector<SweepCell> ablation_sweep(const BenchConfig& bench, const TrainConfig& base, const SweepOptions& options) {
    static constexpr std::size_t kAllowed[] = {0, 1, 2, 4, 6, 8};
    for (auto d : options.depths)
        if (std::find(std::begin(kAllowed), std::end(kAllowed), d) == std::end(kAllowed))
            throw Error(ErrorKind::InvalidArgument, "ablation depth " + std::to_string(d) + " not in {0,1,2,4,6,8}");

    struct Plan {
        bool baseline;
        std::size_t depth;
        AlignVariant variant;
    };
    std::vector<Plan> plans;
    if (options.include_baseline) plans.push_back({true, base.coupling_depth, base.align.variant});
    for (auto d : options.depths)
        for (auto v : options.variants) plans.push_back({false, d, v});

    std::vector<SweepCell> cells;
    for (const auto& plan : plans)
        for (auto seed : options.seeds) {
            BenchConfig b = bench;
            b.seed = seed;
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.coupling_depth = plan.depth;
            cfg.align.variant = plan.variant;
            if (plan.baseline) cfg.align.lambda = 0.0;
            const Dataset data = generate(b);
            MtlModel model = build_model(b, cfg);
            SweepCell cell;
            cell.label = sweep_label(plan.depth, plan.baseline);
            cell.depth = plan.depth;
            cell.variant = plan.variant;
            cell.seed = seed;
            cell.baseline = plan.baseline;
            cell.record = train(model, data.train, data.val, cfg);
            if (options.on_complete) options.on_complete(cell);
            cells.push_back(std::move(cell));
        }
    return cells;
}

namespace {

std::vector<double> final_metrics(const SweepCell& cell, std::size_t n_tasks) {
    std::vector<double> v;
    const auto& last = cell.record.epochs.back();
    for (std::size_t t = 0; t < n_tasks; ++t) v.push_back(last.val.tasks[t].pooled);
    v.push_back(cell.record.latents ? cell.record.latents->mmd : std::nan(""));
    v.push_back(cell.record.latents ? cell.record.latents->effective_rank : std::nan(""));
    return v;
}

std::vector<std::string> metric_columns(std::size_t n_tasks) {
    std::vector<std::string> cols;
    for (std::size_t t = 0; t < n_tasks; ++t) cols.push_back("task" + std::to_string(t + 1) + "_" + metric_name(task_kind(t)));
    cols.emplace_back("mmd");
    cols.emplace_back("effective_rank");
    return cols;
}

}  // namespace

std::string sweep_runs_header(std::size_t n_tasks) {
    std::string h = "label,depth,variant,seed";
    for (const auto& c : metric_columns(n_tasks)) h += "," + c;
    return h + "\n";
}

std::string sweep_runs_row(const SweepCell& cell) {
    const std::size_t n = cell.record.epochs.back().val.tasks.size();
    std::string row = cell.label + "," + std::to_string(cell.depth) + "," + to_string(cell.variant) + "," +
                      std::to_string(cell.seed);
    for (double v : final_metrics(cell, n)) row += "," + io::format_double(v);
    return row + "\n";
}

std::vector<std::string> sweep_table_columns(std::size_t n_tasks) {
    std::vector<std::string> cols{"label", "depth", "variant", "seeds"};
    for (const auto& c : metric_columns(n_tasks)) {
        cols.push_back(c + "_mean");
        cols.push_back(c + "_std");
    }
    return cols;
}

std::string sweep_table_csv(std::span<const SweepCell> cells, std::size_t n_tasks) {
    std::ostringstream out;
    const auto cols = sweep_table_columns(n_tasks);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';

    // Group by configuration in first-seen order.
    std::vector<std::size_t> firsts;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        bool seen = false;
        for (auto f : firsts)
            seen = seen || (cells[f].label == cells[i].label && cells[f].variant == cells[i].variant &&
                            cells[f].depth == cells[i].depth);
        if (!seen) firsts.push_back(i);
    }
    for (auto f : firsts) {
        std::vector<std::vector<double>> values;
        for (const auto& c : cells)
            if (c.label == cells[f].label && c.variant == cells[f].variant && c.depth == cells[f].depth)
                values.push_back(final_metrics(c, n_tasks));
        out << cells[f].label << ',' << cells[f].depth << ',' << to_string(cells[f].variant) << ',' << values.size();
        for (std::size_t m = 0; m < values.front().size(); ++m) {
            double mean = 0.0;
            for (const auto& v : values) mean += v[m];
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (const auto& v : values) var += (v[m] - mean) * (v[m] - mean);
            const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
            out << ',' << io::format_double(mean) << ',' << io::format_double(sd);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace nexusflow
