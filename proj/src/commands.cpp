#include "nexusflow/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "nexusflow/checkpoint.hpp"
#include "nexusflow/io.hpp"

namespace nexusflow {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Divergence:
        case ErrorKind::NonFinite: return kExitDivergence;
        default: return kExitUsage;
    }
}

fs::path resolve_output(const fs::path& path) {
    if (path.is_absolute()) return path;
    if (const char* root = std::getenv(kOutRootEnv); root && *root) return fs::path(root) / path;
    return path;
}

namespace {

std::vector<Sample> read_samples(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open dataset file " + path.string());
    try {
        return read_dataset_csv(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string to_csv(std::span<const Sample> samples, const BenchConfig& bench) {
    std::ostringstream out;
    write_dataset_csv(out, samples, bench);
    return out.str();
}

std::string matrix_csv(const Matrix& m) {
    std::ostringstream out;
    write_csv(out, m);
    return out.str();
}

ordered_json stats_json(const SplitStats& s) {
    return {{"total", s.total}, {"per_domain", s.per_domain}, {"mask_histogram", s.mask_histogram}};
}

}  // namespace

LoadedData load_data(const ExperimentSpec& spec) {
    if (!spec.dataset) {
        Dataset d = generate(spec.bench);
        return {std::move(d.train), std::move(d.val)};
    }
    const fs::path dir(*spec.dataset);
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "dataset directory not found: " + dir.string());
    LoadedData data{read_samples(dir / "train.csv"), read_samples(dir / "val.csv")};
    for (const auto* part : {&data.train, &data.val})
        for (const auto& s : *part) {
            if (s.x.size() != spec.bench.d_in || s.mask.size() != spec.bench.n_tasks)
                throw Error(ErrorKind::Schema, "dataset " + dir.string() + " does not match the bench section (d_in " +
                                                   std::to_string(spec.bench.d_in) + ", n_tasks " +
                                                   std::to_string(spec.bench.n_tasks) + ")");
        }
    return data;
}

void cmd_gen_data(const ExperimentSpec& spec, const fs::path& out_dir, std::ostream& log) {
    const Dataset d = generate(spec.bench);
    const auto train_stats = split_stats(d.train, spec.bench.n_tasks);
    const auto val_stats = split_stats(d.val, spec.bench.n_tasks);
    io::write_file_atomic(out_dir / "train.csv", to_csv(d.train, spec.bench));
    io::write_file_atomic(out_dir / "val.csv", to_csv(d.val, spec.bench));
    ordered_json manifest;
    manifest["seed"] = spec.bench.seed;
    manifest["train"] = stats_json(train_stats);
    manifest["val"] = stats_json(val_stats);
    manifest["spec"] = ordered_json::parse(experiment_to_json(spec));
    io::write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
    log << "wrote " << train_stats.total << " train and " << val_stats.total << " val samples to " << out_dir.string()
        << "\n";
}

RunRecord cmd_train(const ExperimentSpec& spec, const fs::path& run_dir, std::ostream& log) {
    ExperimentSpec resolved = spec;
    if (resolved.dataset) resolved.dataset = fs::absolute(*resolved.dataset).lexically_normal().string();
    const LoadedData data = load_data(resolved);
    MtlModel model = build_model(resolved.bench, resolved.train);
    const RunRecord record = train(model, data.train, data.val, resolved.train);

    io::write_file_atomic(run_dir / "spec.json", experiment_to_json(resolved));
    io::write_file_atomic(run_dir / "record.csv", record_csv(record));
    io::write_file_atomic(run_dir / "summary.json", record_summary_json(record));
    write_checkpoint(run_dir / "checkpoint.nfc", model);

    const auto& last = record.epochs.back();
    log << "trained " << record.epochs.size() << " epochs, lambda " << io::format_double(resolved.train.align.lambda);
    for (std::size_t t = 0; t < last.val.tasks.size(); ++t)
        log << ", task" << t + 1 << ' ' << metric_name(last.val.tasks[t].kind) << ' '
            << io::format_double(last.val.tasks[t].pooled);
    if (record.latents) log << ", latent mmd " << io::format_double(record.latents->mmd);
    log << "\n";
    return record;
}

std::vector<SweepCell> cmd_ablate(const ExperimentSpec& spec, const AblateOptions& options, const fs::path& out_dir,
                                  std::ostream& log) {
    io::write_file_atomic(out_dir / "spec.json", experiment_to_json(spec));
    const std::size_t n = spec.bench.n_tasks;
    std::string runs = sweep_runs_header(n);
    io::write_file_atomic(out_dir / "runs.csv", runs);

    SweepOptions so;
    so.depths = options.depths;
    so.seeds = options.seeds;
    so.variants = options.variants;
    so.include_baseline = options.baseline;
    so.on_complete = [&](const SweepCell& cell) {
        runs += sweep_runs_row(cell);
        io::write_file_atomic(out_dir / "runs.csv", runs);
        log << "finished " << cell.label << " variant " << to_string(cell.variant) << " seed " << cell.seed << "\n";
    };
    auto cells = ablation_sweep(spec.bench, spec.train, so);
    io::write_file_atomic(out_dir / "table.csv", sweep_table_csv(cells, n));
    log << "wrote " << cells.size() << " runs to " << out_dir.string() << "\n";
    return cells;
}

std::string cmd_diagnose(const fs::path& run_dir, const fs::path& out_dir, const DiagnoseOptions& options,
                         std::ostream& log) {
    const fs::path spec_path = run_dir / "spec.json";
    const fs::path ckpt_path = run_dir / "checkpoint.nfc";
    if (!fs::exists(spec_path)) throw Error(ErrorKind::Io, "missing " + spec_path.string());
    if (!fs::exists(ckpt_path)) throw Error(ErrorKind::Io, "missing checkpoint " + ckpt_path.string());
    const ExperimentSpec spec = load_experiment(spec_path);
    const MtlModel model = read_checkpoint(ckpt_path);
    if (model.surrogates.empty()) throw Error(ErrorKind::InvalidArgument, "run has no surrogate modules to diagnose");
    const LoadedData data = load_data(spec);

    const LatentSet latents = compute_latents(model, data.val);
    const LatentSummary summary = summarize_latents(model, data.val, options.use_embeddings);
    const auto& feats = options.use_embeddings ? latents.embeddings : latents.latents;

    ordered_json report;
    report["features"] = options.use_embeddings ? "embeddings" : "latents";
    report["mmd"] = summary.mmd;
    report["pair_mmd"] = summary.pair_mmd;
    report["effective_rank"] = summary.effective_rank;
    report["task_effective_ranks"] = summary.task_effective_ranks;
    report["spectrum"] = summary.spectrum;

    // Lemma check on every task pair: the held-out pairs are the validation
    // latents (z_i, z_j) of the same sample.
    double radius = 0.0;
    for (const auto& z : latents.latents)
        for (std::size_t r = 0; r < z.rows(); ++r) radius = std::max(radius, l2_norm(z.row(r)));
    if (!(radius > 0.0)) radius = 1.0;
    Prng prng = Prng(options.seed).fork(7);
    ordered_json lemma = ordered_json::array();
    for (std::size_t i = 0; i < model.n_tasks(); ++i)
        for (std::size_t j = i + 1; j < model.n_tasks(); ++j) {
            const auto& a = model.surrogates[i].coupling;
            const auto& b = model.surrogates[j].coupling;
            const double L = estimate_lipschitz(a, prng, options.lemma_fit_samples, radius);
            const double delta = estimate_delta(a, b, prng, options.lemma_fit_samples, radius);
            const auto rep =
                lemma_bound_check(a, b, {latents.latents[i], latents.latents[j]}, L, delta, options.safety);
            lemma.push_back({{"task_a", i + 1},
                             {"task_b", j + 1},
                             {"radius", radius},
                             {"lipschitz_hat", rep.lipschitz_hat},
                             {"delta_hat", rep.delta_hat},
                             {"safety_factor", rep.safety_factor},
                             {"pairs_checked", rep.pairs_checked},
                             {"violations", rep.violations},
                             {"triangle_violations", rep.triangle_violations},
                             {"worst_ratio", rep.worst_ratio}});
        }
    report["lemma_report"] = lemma;

    for (std::size_t t = 0; t < feats.size(); ++t)
        io::write_file_atomic(out_dir / ("projection_task" + std::to_string(t + 1) + ".csv"),
                              matrix_csv(project_2d(feats[t])));
    io::write_file_atomic(out_dir / "projection_pooled.csv", matrix_csv(project_2d(vstack(feats))));
    const std::string text = report.dump(2) + "\n";
    io::write_file_atomic(out_dir / "diagnostics.json", text);
    log << "mmd " << io::format_double(summary.mmd) << ", effective rank " << io::format_double(summary.effective_rank)
        << ", wrote " << (out_dir / "diagnostics.json").string() << "\n";
    return text;
}

int cmd_verify(const std::vector<std::uint64_t>& seeds, bool inject_fault, std::ostream& log) {
    std::vector<std::string> failed;
    for (auto seed : seeds) {
        VerifyOptions o;
        o.seed = seed;
        o.inject_fault = inject_fault;
        for (const auto& r : run_verify_suite(o)) {
            log << (r.passed ? "PASS " : "FAIL ") << "seed " << seed << ' ' << r.name << ": " << r.detail << "\n";
            if (!r.passed) failed.push_back(r.name + " (seed " + std::to_string(seed) + ")");
        }
    }
    if (failed.empty()) {
        log << "all properties passed\n";
        return kExitOk;
    }
    log << "failed properties:";
    for (const auto& f : failed) log << ' ' << f;
    log << "\n";
    return kExitVerification;
}

}  // namespace nexusflow
