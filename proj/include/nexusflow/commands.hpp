#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nexusflow/diagnostics.hpp"
#include "nexusflow/error.hpp"
#include "nexusflow/experiment.hpp"
#include "nexusflow/trainer.hpp"
#include "nexusflow/verify.hpp"

namespace nexusflow {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitDivergence = 2, kExitVerification = 3 };

int exit_code_for(ErrorKind kind);

inline constexpr const char* kOutRootEnv = "NEXUSFLOW_OUT_ROOT";

// Relative paths are placed under $NEXUSFLOW_OUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

struct LoadedData {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

/// Dataset named by the spec (a gen-data directory) or generated from the
/// bench section.
LoadedData load_data(const ExperimentSpec& spec);

/// train.csv, val.csv and manifest.json in `out_dir`.
void cmd_gen_data(const ExperimentSpec& spec, const std::filesystem::path& out_dir, std::ostream& log);

/// Run directory: spec.json, record.csv, summary.json, checkpoint.nfc.
RunRecord cmd_train(const ExperimentSpec& spec, const std::filesystem::path& run_dir, std::ostream& log);

struct AblateOptions {
    std::vector<std::size_t> depths{0, 1, 2, 4, 6, 8};
    std::vector<std::uint64_t> seeds{0};
    std::vector<AlignVariant> variants{AlignVariant::Center};
    bool baseline = false;
};

/// runs.csv is rewritten after every finished run; table.csv at the end.
std::vector<SweepCell> cmd_ablate(const ExperimentSpec& spec, const AblateOptions& options,
                                  const std::filesystem::path& out_dir, std::ostream& log);

struct DiagnoseOptions {
    std::size_t lemma_fit_samples = 10000;
    double safety = 1.5;
    std::uint64_t seed = 0;
    bool use_embeddings = false;
};

/// Reads a train run directory and writes diagnostics.json plus 2-D
/// projections (projection_task<k>.csv, projection_pooled.csv) to out_dir.
std::string cmd_diagnose(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                         const DiagnoseOptions& options, std::ostream& log);

/// Property suite for every seed; returns kExitOk or kExitVerification.
int cmd_verify(const std::vector<std::uint64_t>& seeds, bool inject_fault, std::ostream& log);

}  // namespace nexusflow
