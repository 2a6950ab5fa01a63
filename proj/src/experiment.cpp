#include "nexusflow/experiment.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "nexusflow/error.hpp"
#include "nexusflow/io.hpp"

namespace nexusflow {

using nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json& obj, const std::set<std::string>& known, const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorKind::Schema, where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!known.contains(key)) throw Error(ErrorKind::Schema, "unknown key '" + key + "' in " + where);
}

template <class T>
void read(const ordered_json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::Schema, std::string("bad type for '") + key + "' in " + where);
    }
}

template <class T>
void read_count(const ordered_json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw Error(ErrorKind::Schema, std::string("'") + key + "' in " + where + " must be a non-negative integer");
    dst = v.get<T>();
}

BenchConfig parse_bench(const ordered_json& j) {
    const std::string where = "bench";
    reject_unknown(j, {"n_tasks", "d_in", "d_factor", "d_reg", "n_classes", "shift_mean", "shift_rotation",
                       "noise_std", "n_train", "n_val", "seed"},
                   where);
    BenchConfig b;
    read_count(j, "n_tasks", b.n_tasks, where);
    read_count(j, "d_in", b.d_in, where);
    read_count(j, "d_factor", b.d_factor, where);
    read_count(j, "d_reg", b.d_reg, where);
    read_count(j, "n_classes", b.n_classes, where);
    read(j, "shift_mean", b.shift_mean, where);
    read(j, "shift_rotation", b.shift_rotation, where);
    read(j, "noise_std", b.noise_std, where);
    read_count(j, "n_train", b.n_train, where);
    read_count(j, "n_val", b.n_val, where);
    read_count(j, "seed", b.seed, where);
    validate(b);
    return b;
}

AlignmentConfig parse_align(const ordered_json& j) {
    const std::string where = "align";
    reject_unknown(j, {"variant", "norm", "lambda"}, where);
    AlignmentConfig a;
    std::string variant = to_string(a.variant), norm = to_string(a.norm);
    read(j, "variant", variant, where);
    read(j, "norm", norm, where);
    read(j, "lambda", a.lambda, where);
    try {
        a.variant = align_variant_from_string(variant);
        a.norm = align_norm_from_string(norm);
    } catch (const Error& e) {
        throw Error(ErrorKind::Schema, e.what());
    }
    return a;
}

TrainConfig parse_train(const ordered_json& j) {
    const std::string where = "train";
    reject_unknown(j, {"schedule", "phase1_epochs", "lr", "beta1", "beta2", "eps", "epochs", "batch_size", "seed",
                       "coupling_depth", "embed_dim", "coupling_clamp", "coupling_hidden_factor",
                       "aggregator_activation", "stop_gradient_at_h", "freeze_backbone_phase2", "attach_surrogates",
                       "mmd_on_embeddings", "encoder_hidden", "shared_dim", "head_hidden", "activation"},
                   where);
    TrainConfig t;
    std::string schedule = to_string(t.schedule);
    std::string agg = to_string(t.aggregator_activation);
    std::string act = to_string(t.model.activation);
    read(j, "schedule", schedule, where);
    if (j.contains("phase1_epochs") && !j.at("phase1_epochs").is_null()) {
        std::size_t p = 0;
        read_count(j, "phase1_epochs", p, where);
        t.phase1_epochs = p;
    }
    read(j, "lr", t.adam.lr, where);
    read(j, "beta1", t.adam.beta1, where);
    read(j, "beta2", t.adam.beta2, where);
    read(j, "eps", t.adam.eps, where);
    read_count(j, "epochs", t.epochs, where);
    read_count(j, "batch_size", t.batch_size, where);
    read_count(j, "seed", t.seed, where);
    read_count(j, "coupling_depth", t.coupling_depth, where);
    read_count(j, "embed_dim", t.embed_dim, where);
    if (j.contains("coupling_clamp") && j.at("coupling_clamp").is_null())
        t.coupling_clamp = std::numeric_limits<double>::infinity();
    else
        read(j, "coupling_clamp", t.coupling_clamp, where);
    read_count(j, "coupling_hidden_factor", t.coupling_hidden_factor, where);
    read(j, "aggregator_activation", agg, where);
    read(j, "stop_gradient_at_h", t.stop_gradient_at_h, where);
    read(j, "freeze_backbone_phase2", t.freeze_backbone_phase2, where);
    read(j, "attach_surrogates", t.attach_surrogates, where);
    read(j, "mmd_on_embeddings", t.mmd_on_embeddings, where);
    read_count(j, "encoder_hidden", t.model.encoder_hidden, where);
    read_count(j, "shared_dim", t.model.shared_dim, where);
    read_count(j, "head_hidden", t.model.head_hidden, where);
    read(j, "activation", act, where);
    try {
        t.schedule = schedule_from_string(schedule);
        t.aggregator_activation = activation_from_string(agg);
        t.model.activation = activation_from_string(act);
    } catch (const Error& e) {
        throw Error(ErrorKind::Schema, e.what());
    }
    return t;
}

}  // namespace

ExperimentSpec parse_experiment(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("experiment spec is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"schema_version", "output_dir", "dataset", "bench", "train", "align"}, "experiment spec");
    if (!j.contains("schema_version")) throw Error(ErrorKind::Schema, "experiment spec: missing schema_version");
    if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kExperimentSchemaVersion)
        throw Error(ErrorKind::Schema,
                    "experiment spec: unsupported schema_version (expected " + std::to_string(kExperimentSchemaVersion) + ")");

    ExperimentSpec spec;
    read(j, "output_dir", spec.output_dir, "experiment spec");
    if (j.contains("dataset") && !j["dataset"].is_null()) {
        std::string d;
        read(j, "dataset", d, "experiment spec");
        spec.dataset = d;
    }
    if (j.contains("bench")) spec.bench = parse_bench(j["bench"]);
    if (j.contains("train")) spec.train = parse_train(j["train"]);
    if (j.contains("align")) spec.train.align = parse_align(j["align"]);
    try {
        validate(spec.train);
    } catch (const Error& e) {
        throw Error(ErrorKind::Schema, e.what());
    }
    return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) { return parse_experiment(io::read_file(path)); }

std::string experiment_to_json(const ExperimentSpec& spec) {
    ordered_json j;
    j["schema_version"] = kExperimentSchemaVersion;
    j["output_dir"] = spec.output_dir;
    j["dataset"] = spec.dataset ? ordered_json(*spec.dataset) : ordered_json(nullptr);
    const auto& b = spec.bench;
    j["bench"] = {{"n_tasks", b.n_tasks},       {"d_in", b.d_in},
                  {"d_factor", b.d_factor},     {"d_reg", b.d_reg},
                  {"n_classes", b.n_classes},   {"shift_mean", b.shift_mean},
                  {"shift_rotation", b.shift_rotation}, {"noise_std", b.noise_std},
                  {"n_train", b.n_train},       {"n_val", b.n_val},
                  {"seed", b.seed}};
    const auto& t = spec.train;
    ordered_json tr;
    tr["schedule"] = to_string(t.schedule);
    tr["phase1_epochs"] = t.phase1_epochs ? ordered_json(*t.phase1_epochs) : ordered_json(nullptr);
    tr["lr"] = t.adam.lr;
    tr["beta1"] = t.adam.beta1;
    tr["beta2"] = t.adam.beta2;
    tr["eps"] = t.adam.eps;
    tr["epochs"] = t.epochs;
    tr["batch_size"] = t.batch_size;
    tr["seed"] = t.seed;
    tr["coupling_depth"] = t.coupling_depth;
    tr["embed_dim"] = t.embed_dim;
    tr["coupling_clamp"] = std::isfinite(t.coupling_clamp) ? ordered_json(t.coupling_clamp) : ordered_json(nullptr);
    tr["coupling_hidden_factor"] = t.coupling_hidden_factor;
    tr["aggregator_activation"] = to_string(t.aggregator_activation);
    tr["stop_gradient_at_h"] = t.stop_gradient_at_h;
    tr["freeze_backbone_phase2"] = t.freeze_backbone_phase2;
    tr["attach_surrogates"] = t.attach_surrogates;
    tr["mmd_on_embeddings"] = t.mmd_on_embeddings;
    tr["encoder_hidden"] = t.model.encoder_hidden;
    tr["shared_dim"] = t.model.shared_dim;
    tr["head_hidden"] = t.model.head_hidden;
    tr["activation"] = to_string(t.model.activation);
    j["train"] = tr;
    j["align"] = {{"variant", to_string(t.align.variant)}, {"norm", to_string(t.align.norm)}, {"lambda", t.align.lambda}};
    return j.dump(2) + "\n";
}

void set_seed(ExperimentSpec& spec, std::uint64_t seed) {
    spec.bench.seed = seed;
    spec.train.seed = seed;
}

}  // namespace nexusflow
