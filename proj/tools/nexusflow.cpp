#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nexusflow/commands.hpp"

namespace nf = nexusflow;

namespace {

nf::ExperimentSpec spec_from(const std::string& path, const std::optional<std::uint64_t>& seed,
                             const std::optional<double>& lambda) {
    nf::ExperimentSpec spec = path.empty() ? nf::ExperimentSpec{} : nf::load_experiment(path);
    if (seed) nf::set_seed(spec, *seed);
    if (lambda) spec.train.align.lambda = *lambda;
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nexusflow: partially supervised multi-task learning with invertible latent alignment"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic benchmark as CSV files");
    gen->add_option("spec", spec_path, "Experiment spec (JSON)")->check(CLI::ExistingFile);
    gen->add_option("-o,--out", out, "Output directory")->required();
    gen->add_option("--seed", seed, "Override the seed");

    auto* tr = app.add_subcommand("train", "Train one model and write a run directory");
    tr->add_option("spec", spec_path, "Experiment spec (JSON)")->check(CLI::ExistingFile);
    tr->add_option("-o,--out", out, "Run directory (default: spec output_dir)");
    tr->add_option("--seed", seed, "Override the seed");
    tr->add_option("--lambda", lambda, "Override the alignment weight");

    nf::AblateOptions ablate_opts;
    std::vector<std::string> variants;
    auto* ab = app.add_subcommand("ablate", "Coupling depth / variant sweep with a summary table");
    ab->add_option("spec", spec_path, "Experiment spec (JSON)")->check(CLI::ExistingFile);
    ab->add_option("-o,--out", out, "Output directory (default: spec output_dir)");
    ab->add_option("--depths", ablate_opts.depths, "Coupling depths")->delimiter(',');
    ab->add_option("--seeds", ablate_opts.seeds, "Seeds")->delimiter(',');
    ab->add_option("--variants", variants, "Alignment variants (pairwise, center)")->delimiter(',');
    ab->add_flag("--baseline", ablate_opts.baseline, "Add a lambda = 0 baseline row");
    ab->add_option("--lambda", lambda, "Override the alignment weight");

    std::string run_dir;
    nf::DiagnoseOptions diag_opts;
    auto* dg = app.add_subcommand("diagnose", "MMD, spectra, projections and lemma check for a run");
    dg->add_option("run_dir", run_dir, "Directory written by train")->required();
    dg->add_option("-o,--out", out, "Output directory (default: run_dir)");
    dg->add_option("--samples", diag_opts.lemma_fit_samples, "Samples for the Lipschitz and delta estimates");
    dg->add_option("--safety", diag_opts.safety, "Safety factor on the Lipschitz estimate");
    dg->add_flag("--embeddings", diag_opts.use_embeddings, "Use embeddings h' instead of latents z");

    std::vector<std::uint64_t> verify_seeds{0};
    bool inject_fault = false;
    auto* vf = app.add_subcommand("verify", "Run the invariant and lemma property suite");
    vf->add_option("--seeds", verify_seeds, "Seeds")->delimiter(',');
    vf->add_flag("--inject-fault", inject_fault, "Disable the scale clamp and inflate weights");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : nf::kExitUsage;
    }

    try {
        if (*gen) {
            const auto spec = spec_from(spec_path, seed, std::nullopt);
            nf::cmd_gen_data(spec, nf::resolve_output(out), std::cout);
        } else if (*tr) {
            const auto spec = spec_from(spec_path, seed, lambda);
            nf::cmd_train(spec, nf::resolve_output(out.empty() ? spec.output_dir : out), std::cout);
        } else if (*ab) {
            auto spec = spec_from(spec_path, std::nullopt, lambda);
            if (!variants.empty()) {
                ablate_opts.variants.clear();
                for (const auto& v : variants) ablate_opts.variants.push_back(nf::align_variant_from_string(v));
            }
            nf::cmd_ablate(spec, ablate_opts, nf::resolve_output(out.empty() ? spec.output_dir : out), std::cout);
        } else if (*dg) {
            nf::cmd_diagnose(run_dir, out.empty() ? std::filesystem::path(run_dir) : nf::resolve_output(out), diag_opts,
                             std::cout);
        } else if (*vf) {
            return nf::cmd_verify(verify_seeds, inject_fault, std::cout);
        }
    } catch (const nf::Error& e) {
        std::cerr << "nexusflow: " << e.what() << "\n";
        return nf::exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "nexusflow: " << e.what() << "\n";
        return nf::kExitUsage;
    }
    return nf::kExitOk;
}
