#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nexusflow/synthbench.hpp"
#include "nexusflow/trainer.hpp"

namespace nexusflow {

inline constexpr int kExperimentSchemaVersion = 1;

/// Serialized experiment description. Sections: "bench", "train", "align";
/// top level also holds "schema_version", "output_dir" and an optional
/// "dataset" directory written by gen-data. Missing keys take defaults,
/// unknown keys are rejected.
struct ExperimentSpec {
    BenchConfig bench;
    TrainConfig train;
    std::string output_dir = "runs/default";
    std::optional<std::string> dataset;
};

ExperimentSpec parse_experiment(const std::string& json_text);
ExperimentSpec load_experiment(const std::filesystem::path& path);
// Fully resolved spec, every field present.
std::string experiment_to_json(const ExperimentSpec& spec);

// Seed overrides apply to data generation and training alike.
void set_seed(ExperimentSpec& spec, std::uint64_t seed);

}  // namespace nexusflow
