#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nexusflow/checkpoint.hpp"
#include "nexusflow/commands.hpp"
#include "nexusflow/error.hpp"
#include "nexusflow/experiment.hpp"
#include "nexusflow/io.hpp"

using namespace nexusflow;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / (std::string("nexusflow_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

ExperimentSpec tiny_spec() {
    ExperimentSpec s;
    s.bench.n_train = 60;
    s.bench.n_val = 40;
    s.train.epochs = 2;
    s.train.coupling_depth = 2;
    s.train.embed_dim = 8;
    return s;
}

std::string tiny_json() { return experiment_to_json(tiny_spec()); }

void write(const fs::path& p, const std::string& content) { std::ofstream(p) << content; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(NEXUSFLOW_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Experiment, DefaultsAndRoundTrip) {
    const auto s = parse_experiment(R"({"schema_version": 1})");
    EXPECT_EQ(s.bench.d_in, 20u);
    EXPECT_EQ(s.train.coupling_depth, 6u);
    EXPECT_EQ(s.train.align.variant, AlignVariant::Center);
    const std::string text = experiment_to_json(s);
    EXPECT_EQ(experiment_to_json(parse_experiment(text)), text);
}

TEST(Experiment, OverridesApply) {
    const auto s = parse_experiment(
        R"({"schema_version": 1, "bench": {"n_tasks": 3}, "train": {"schedule": "two_phase", "coupling_clamp": null},
            "align": {"variant": "pairwise", "norm": "squared_l2", "lambda": 0.25}})");
    EXPECT_EQ(s.bench.n_tasks, 3u);
    EXPECT_EQ(s.train.schedule, Schedule::TwoPhase);
    EXPECT_TRUE(std::isinf(s.train.coupling_clamp));
    EXPECT_EQ(s.train.align.norm, AlignNorm::SquaredL2);
    EXPECT_EQ(s.train.align.lambda, 0.25);
    EXPECT_EQ(experiment_to_json(parse_experiment(experiment_to_json(s))), experiment_to_json(s));
}

TEST(Experiment, RejectsUnknownKeysAndBadVersions) {
    for (const char* bad : {R"({"schema_version": 1, "trian": {}})", R"({"schema_version": 1, "train": {"epoch": 3}})",
                            R"({"schema_version": 2})", R"({"bench": {}})", R"({"schema_version": 1, "bench": {"d_in": -1}})",
                            R"({"schema_version": 1, "train": {"lr": "fast"}})", "{not json"}) {
        try {
            parse_experiment(bad);
            FAIL() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Schema) << bad;
        }
    }
}

TEST(Experiment, SeedOverrideCoversDataAndTraining) {
    auto s = tiny_spec();
    set_seed(s, 9);
    EXPECT_EQ(s.bench.seed, 9u);
    EXPECT_EQ(s.train.seed, 9u);
}

TEST(Checkpoint, RoundTripPreservesModel) {
    auto spec = tiny_spec();
    spec.bench.n_tasks = 3;
    auto model = build_model(spec.bench, spec.train);
    const auto data = generate(spec.bench);
    train(model, data.train, data.val, spec.train);
    const std::string text = save_checkpoint(model);
    const auto back = load_checkpoint(text);
    EXPECT_EQ(save_checkpoint(back), text);
    Prng p(0);
    const Matrix x = gaussian(p, 5, spec.bench.d_in);
    const auto a = forward_batch(model, x), b = forward_batch(back, x);
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_EQ(a.predictions[t], b.predictions[t]);
        EXPECT_EQ(a.latents[t], b.latents[t]);
    }
    const auto header = nlohmann::json::parse(text.substr(0, text.find('\n')));
    EXPECT_EQ(header["format"], kCheckpointFormat);
    EXPECT_EQ(header["version"], kCheckpointVersion);
}

TEST(Checkpoint, TamperingDetected) {
    const auto model = build_model(tiny_spec().bench, tiny_spec().train);
    std::string text = save_checkpoint(model);
    const auto expect_kind = [](const std::string& t, ErrorKind kind) {
        try {
            load_checkpoint(t);
            ADD_FAILURE() << "accepted a corrupted checkpoint";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), kind) << e.what();
        }
    };
    std::string flipped = text;
    const auto pos = flipped.find('\n') + 5;
    flipped[pos] = flipped[pos] == '1' ? '2' : '1';
    expect_kind(flipped, ErrorKind::Version);

    std::string retagged = text;
    retagged.replace(retagged.find(kCheckpointFormat), 10, "other-form");
    expect_kind(retagged, ErrorKind::Version);

    std::string versioned = text;
    versioned.replace(versioned.find("\"version\":1"), 11, "\"version\":7");
    expect_kind(versioned, ErrorKind::Version);

    expect_kind("no header here", ErrorKind::Schema);
}

TEST(Commands, ExitCodeMapping) {
    EXPECT_EQ(exit_code_for(ErrorKind::Divergence), kExitDivergence);
    EXPECT_EQ(exit_code_for(ErrorKind::NonFinite), kExitDivergence);
    EXPECT_EQ(exit_code_for(ErrorKind::Io), kExitUsage);
    EXPECT_EQ(exit_code_for(ErrorKind::Schema), kExitUsage);
    EXPECT_EQ(exit_code_for(ErrorKind::Version), kExitUsage);
}

TEST(Commands, GenDataDeterministicAndCounted) {
    TempDir tmp;
    std::ostringstream log;
    const auto spec = tiny_spec();
    cmd_gen_data(spec, tmp / "a", log);
    cmd_gen_data(spec, tmp / "b", log);
    for (const char* f : {"train.csv", "val.csv", "manifest.json"}) {
        ASSERT_TRUE(fs::exists(tmp / "a" / f)) << f;
        EXPECT_EQ(io::read_file(tmp / "a" / f), io::read_file(tmp / "b" / f)) << f;
    }
    const std::string train = io::read_file(tmp / "a" / "train.csv");
    EXPECT_EQ(std::count(train.begin(), train.end(), '\n'), 1 + 120);
    const auto manifest = nlohmann::json::parse(io::read_file(tmp / "a" / "manifest.json"));
    EXPECT_EQ(manifest["train"]["total"], 120);
}

TEST(Commands, TrainFromDatasetMatchesGenerated) {
    TempDir tmp;
    std::ostringstream log;
    auto spec = tiny_spec();
    cmd_gen_data(spec, tmp / "data", log);
    const auto direct = cmd_train(spec, tmp / "run_direct", log);
    spec.dataset = (tmp / "data").string();
    const auto loaded = cmd_train(spec, tmp / "run_loaded", log);
    for (const char* f : {"spec.json", "record.csv", "summary.json", "checkpoint.nfc"})
        EXPECT_TRUE(fs::exists(tmp / "run_loaded" / f)) << f;
    EXPECT_EQ(io::read_file(tmp / "run_direct" / "record.csv"), io::read_file(tmp / "run_loaded" / "record.csv"));
    EXPECT_EQ(io::read_file(tmp / "run_direct" / "checkpoint.nfc"), io::read_file(tmp / "run_loaded" / "checkpoint.nfc"));
}

TEST(Commands, MissingDatasetIsIoError) {
    TempDir tmp;
    auto spec = tiny_spec();
    spec.dataset = (tmp / "nowhere").string();
    std::ostringstream log;
    try {
        cmd_train(spec, tmp / "run", log);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(exit_code_for(e.kind()), kExitUsage);
    }
}

TEST(Commands, AblateWritesTables) {
    TempDir tmp;
    auto spec = tiny_spec();
    spec.train.epochs = 1;
    AblateOptions o;
    o.depths = {0, 6};
    o.seeds = {0};
    std::ostringstream log;
    const auto cells = cmd_ablate(spec, o, tmp / "abl", log);
    EXPECT_EQ(cells.size(), 2u);
    const std::string table = io::read_file(tmp / "abl" / "table.csv");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
    const std::string runs = io::read_file(tmp / "abl" / "runs.csv");
    EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'), 3);
    EXPECT_NE(table.find("_mean"), std::string::npos);
    EXPECT_NE(table.find("_std"), std::string::npos);
}

TEST(Commands, DiagnoseReport) {
    TempDir tmp;
    std::ostringstream log;
    const auto spec = tiny_spec();
    cmd_train(spec, tmp / "run", log);
    DiagnoseOptions o;
    o.lemma_fit_samples = 500;
    cmd_diagnose(tmp / "run", tmp / "diag", o, log);
    const auto j = nlohmann::json::parse(io::read_file(tmp / "diag" / "diagnostics.json"));
    for (const char* key : {"mmd", "effective_rank", "spectrum", "lemma_report"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["spectrum"].size(), 8u);
    EXPECT_TRUE(fs::exists(tmp / "diag" / "projection_pooled.csv"));
    EXPECT_TRUE(fs::exists(tmp / "diag" / "projection_task1.csv"));

    std::string ckpt = io::read_file(tmp / "run" / "checkpoint.nfc");
    ckpt[ckpt.size() - 3] = ckpt[ckpt.size() - 3] == '1' ? '2' : '1';
    write(tmp / "run" / "checkpoint.nfc", ckpt);
    try {
        cmd_diagnose(tmp / "run", tmp / "diag2", o, log);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Version);
    }
    fs::remove(tmp / "run" / "checkpoint.nfc");
    EXPECT_THROW(cmd_diagnose(tmp / "run", tmp / "diag3", o, log), Error);
}

TEST(Commands, OutputRootPrefixesRelativePaths) {
    ::setenv(kOutRootEnv, "/tmp/nf_root", 1);
    EXPECT_EQ(resolve_output("runs/a"), fs::path("/tmp/nf_root/runs/a"));
    EXPECT_EQ(resolve_output("/abs/b"), fs::path("/abs/b"));
    ::unsetenv(kOutRootEnv);
    EXPECT_EQ(resolve_output("runs/a"), fs::path("runs/a"));
}

TEST(CliBinary, ExitCodes) {
    TempDir tmp;
    write(tmp / "spec.json", tiny_json());
    write(tmp / "bad.json", R"({"schema_version": 1, "trian": {}})");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("frobnicate"), kExitUsage);
    EXPECT_EQ(run_cli("gen-data " + (tmp / "bad.json").string() + " -o " + (tmp / "x").string()), kExitUsage);
    EXPECT_EQ(run_cli("train " + (tmp / "missing.json").string() + " -o " + (tmp / "x").string()), kExitUsage);
    EXPECT_EQ(run_cli("gen-data " + (tmp / "spec.json").string() + " -o " + (tmp / "data").string()), kExitOk);
    EXPECT_EQ(run_cli("diagnose " + (tmp / "nothing").string()), kExitUsage);

    auto diverging = tiny_spec();
    diverging.train.adam.lr = 1e250;
    diverging.train.model.activation = Activation::Relu;
    write(tmp / "diverge.json", experiment_to_json(diverging));
    EXPECT_EQ(run_cli("train " + (tmp / "diverge.json").string() + " -o " + (tmp / "div").string()), kExitDivergence);

    EXPECT_EQ(run_cli("verify --seeds 0 --inject-fault"), kExitVerification);
}

TEST(CliBinary, RerunsAreByteIdentical) {
    TempDir tmp;
    write(tmp / "spec.json", tiny_json());
    for (const char* run : {"r1", "r2"})
        ASSERT_EQ(run_cli("train " + (tmp / "spec.json").string() + " --seed 3 -o " + (tmp / run).string()), 0);
    for (const char* f : {"record.csv", "summary.json", "checkpoint.nfc", "spec.json"})
        EXPECT_EQ(io::read_file(tmp / "r1" / f), io::read_file(tmp / "r2" / f)) << f;
    const auto spec = load_experiment(tmp / "r1" / "spec.json");
    EXPECT_EQ(spec.train.seed, 3u);
    EXPECT_EQ(spec.bench.seed, 3u);
}
