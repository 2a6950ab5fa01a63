#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nexusflow/alignment.hpp"
#include "nexusflow/layers.hpp"
#include "nexusflow/optimizer.hpp"
#include "nexusflow/surrogate.hpp"
#include "nexusflow/synthbench.hpp"

namespace nexusflow {

enum class Schedule { OnePhase, TwoPhase };

const char* to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

struct ModelConfig {
    std::size_t encoder_hidden = 64;
    std::size_t shared_dim = 32;
    std::size_t head_hidden = 32;
    Activation activation = Activation::Tanh;
};

struct TrainConfig {
    AlignmentConfig align;
    Schedule schedule = Schedule::OnePhase;
    std::optional<std::size_t> phase1_epochs;  // two-phase only; defaults to epochs / 2
    AdamConfig adam;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t coupling_depth = 6;
    std::size_t embed_dim = 16;
    double coupling_clamp = 2.0;
    std::size_t coupling_hidden_factor = 2;
    Activation aggregator_activation = Activation::Identity;
    bool stop_gradient_at_h = false;
    bool freeze_backbone_phase2 = false;
    bool attach_surrogates = true;
    bool mmd_on_embeddings = false;
    ModelConfig model;
};

void validate(const TrainConfig& cfg);
std::size_t phase1_epochs(const TrainConfig& cfg);
// Alignment weight in force during `epoch`.
double effective_lambda(const TrainConfig& cfg, std::size_t epoch);

/// Task branch split at its last hidden activation: trunk produces the task
/// feature h_i, out maps it to the prediction.
struct TaskHead {
    Mlp trunk;
    Mlp out;
};

struct MtlModel {
    Mlp encoder;
    std::vector<TaskHead> heads;
    std::vector<TaskKind> kinds;
    std::vector<SurrogateModule> surrogates;  // empty when detached

    std::size_t n_tasks() const { return heads.size(); }
};

/// Backbone from one PRNG stream, surrogates from another, so attaching
/// surrogates never changes backbone initialization.
MtlModel build_model(const BenchConfig& bench, const TrainConfig& cfg);

template <class M, class Out>
    requires std::same_as<std::remove_const_t<M>, MtlModel>
void collect_backbone_params(M& model, Out& out) {
    collect_params(model.encoder, out);
    for (auto& head : model.heads) {
        collect_params(head.trunk, out);
        collect_params(head.out, out);
    }
}

template <class M, class Out>
    requires std::same_as<std::remove_const_t<M>, MtlModel>
void collect_params(M& model, Out& out) {
    collect_backbone_params(model, out);
    for (auto& s : model.surrogates) collect_params(s, out);
}

MtlModel zeros_like(const MtlModel& model);

struct TaskTargets {
    Matrix values;                     // regression / unit-vector targets
    std::vector<std::size_t> classes;  // classification targets
    std::vector<std::uint8_t> mask;
};

struct Batch {
    Matrix x;
    std::vector<std::size_t> domains;
    std::vector<TaskTargets> tasks;
};

/// With all_labels the mask marks every present label (evaluation); otherwise
/// it is the samples' supervision mask.
Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices, const MtlModel& model,
                 bool all_labels = false);

struct ForwardPass {
    Matrix shared;
    MlpCache encoder_cache;
    std::vector<MlpCache> trunk_caches;
    std::vector<MlpCache> out_caches;
    std::vector<Matrix> features;     // h_i
    std::vector<Matrix> predictions;
    std::vector<Matrix> embeddings;   // h'_i
    std::vector<Matrix> latents;      // z_i
    std::vector<SurrogateCache> surrogate_caches;
};

/// Every head runs on every sample regardless of supervision.
ForwardPass forward_batch(const MtlModel& model, const Matrix& x);
// Predictions only, without caches or surrogates.
std::vector<Matrix> predict(const MtlModel& model, const Matrix& x);

struct LossResult {
    double loss = 0.0;
    Matrix grad;
    std::size_t supervised = 0;
};

/// Mean over supervised rows: MSE (per element), softmax cross-entropy, or
/// 1 - cosine. Unsupervised rows get zero gradient.
LossResult masked_task_loss(const Matrix& predictions, const TaskTargets& targets, TaskKind kind);

struct TaskMetric {
    TaskKind kind = TaskKind::Regression;
    double pooled = 0.0;
    std::vector<double> per_domain;
    std::vector<std::size_t> counts;
};

struct EvalResult {
    std::vector<TaskMetric> tasks;
};

const char* metric_name(TaskKind kind);  // mse, accuracy, angle_deg

EvalResult evaluate_predictions(std::span<const Matrix> predictions, std::span<const Sample> samples,
                                std::span<const TaskKind> kinds);
EvalResult evaluate(const MtlModel& model, std::span<const Sample> val);

struct LatentSummary {
    double mmd = 0.0;  // mean over task pairs of MMD(task i on domain i, task j on domain j)
    std::vector<double> pair_mmd;
    std::vector<double> spectrum;  // pooled latents
    double effective_rank = 0.0;
    std::vector<double> task_effective_ranks;
};

struct LatentSet {
    std::vector<Matrix> latents;     // per task, all samples
    std::vector<Matrix> embeddings;  // per task, all samples
};

LatentSet compute_latents(const MtlModel& model, std::span<const Sample> samples);
LatentSummary summarize_latents(const MtlModel& model, std::span<const Sample> samples, bool use_embeddings = false);

struct EpochRecord {
    std::size_t epoch = 0;
    double lambda = 0.0;
    std::vector<double> task_losses;
    double align_loss = 0.0;
    double total_loss = 0.0;
    EvalResult val;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    std::optional<LatentSummary> latents;  // absent without surrogates
};

/// Adam on sum(task losses) + lambda * alignment. Throws ErrorKind::Divergence
/// naming the epoch on a non-finite loss.
RunRecord train(MtlModel& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                const TrainConfig& cfg);

std::string record_csv(const RunRecord& record);
std::string record_summary_json(const RunRecord& record);

struct SweepCell {
    std::string label;
    std::size_t depth = 0;
    AlignVariant variant = AlignVariant::Center;
    std::uint64_t seed = 0;
    bool baseline = false;
    RunRecord record;
};

struct SweepOptions {
    std::vector<std::size_t> depths{0, 1, 2, 4, 6, 8};
    std::vector<AlignVariant> variants{AlignVariant::Center};
    std::vector<std::uint64_t> seeds{0};
    bool include_baseline = false;
    // Called after every finished run, in order.
    std::function<void(const SweepCell&)> on_complete;
};

/// One run per (baseline?, depth, variant) and seed. The seed drives both the
/// data generator and training.
std::vector<SweepCell> ablation_sweep(const BenchConfig& bench, const TrainConfig& base, const SweepOptions& options);

std::string sweep_label(std::size_t depth, bool baseline);
std::string sweep_runs_header(std::size_t n_tasks);
std::string sweep_runs_row(const SweepCell& cell);
/// Mean and sample standard deviation per configuration, one row each.
std::string sweep_table_csv(std::span<const SweepCell> cells, std::size_t n_tasks);
std::vector<std::string> sweep_table_columns(std::size_t n_tasks);

}  // namespace nexusflow
