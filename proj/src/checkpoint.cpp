#include "nexusflow/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nexusflow/error.hpp"
#include "nexusflow/io.hpp"

namespace nexusflow {

using nlohmann::ordered_json;

namespace {

ordered_json mlp_json(const Mlp& mlp) {
    ordered_json layers = ordered_json::array();
    for (const auto& l : mlp.layers)
        layers.push_back({{"in", l.in_dim()}, {"out", l.out_dim()}, {"activation", to_string(l.activation)}});
    return layers;
}

ordered_json stack_json(const CouplingStack& stack) {
    ordered_json layers = ordered_json::array();
    for (const auto& l : stack.layers) {
        ordered_json j;
        j["parity"] = l.parity == Parity::LowerIdentity ? "lower" : "upper";
        // Disabled clamp (non-finite) is stored as null.
        if (std::isfinite(l.clamp)) j["clamp"] = l.clamp;
        else j["clamp"] = nullptr;
        j["s_net"] = mlp_json(l.s_net);
        j["t_net"] = mlp_json(l.t_net);
        layers.push_back(std::move(j));
    }
    return {{"dim", stack.dim}, {"layers", layers}};
}

Mlp mlp_from_json(const ordered_json& j) {
    Mlp mlp;
    for (const auto& l : j) {
        const auto in = l.at("in").get<std::size_t>();
        const auto out = l.at("out").get<std::size_t>();
        DenseLayer layer;
        layer.weight = Matrix(out, in);
        layer.bias.assign(out, 0.0);
        layer.activation = activation_from_string(l.at("activation").get<std::string>());
        mlp.layers.push_back(std::move(layer));
    }
    validate(mlp);
    return mlp;
}

CouplingStack stack_from_json(const ordered_json& j) {
    CouplingStack stack;
    stack.dim = j.at("dim").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
        CouplingLayer layer;
        const auto parity = l.at("parity").get<std::string>();
        if (parity != "lower" && parity != "upper") throw Error(ErrorKind::Schema, "checkpoint: bad parity '" + parity + "'");
        layer.parity = parity == "lower" ? Parity::LowerIdentity : Parity::UpperIdentity;
        layer.clamp = l.at("clamp").is_null() ? std::numeric_limits<double>::infinity() : l.at("clamp").get<double>();
        layer.s_net = mlp_from_json(l.at("s_net"));
        layer.t_net = mlp_from_json(l.at("t_net"));
        if (layer.dim() != stack.dim) throw Error(ErrorKind::Schema, "checkpoint: coupling width disagrees with dim");
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

TaskKind kind_from_string(const std::string& s) {
    if (s == "regression") return TaskKind::Regression;
    if (s == "classification") return TaskKind::Classification;
    if (s == "unit_vector") return TaskKind::UnitVector;
    throw Error(ErrorKind::Schema, "checkpoint: unknown task kind '" + s + "'");
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::uint64_t checkpoint_checksum(const std::string& body) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : body) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string save_checkpoint(const MtlModel& model) {
    ConstParams params;
    collect_params(model, params);
    std::ostringstream body;
    for (auto p : params) {
        for (std::size_t i = 0; i < p.size(); ++i) body << (i ? "," : "") << io::format_double(p[i]);
        body << '\n';
    }
    const std::string tensors = body.str();

    ordered_json header;
    header["format"] = kCheckpointFormat;
    header["version"] = kCheckpointVersion;
    ordered_json m;
    m["encoder"] = mlp_json(model.encoder);
    ordered_json heads = ordered_json::array();
    for (std::size_t t = 0; t < model.n_tasks(); ++t)
        heads.push_back({{"kind", to_string(model.kinds[t])},
                         {"trunk", mlp_json(model.heads[t].trunk)},
                         {"out", mlp_json(model.heads[t].out)}});
    m["heads"] = heads;
    ordered_json surr = ordered_json::array();
    for (const auto& s : model.surrogates)
        surr.push_back({{"task_id", s.task_id}, {"aggregator", mlp_json(s.aggregator)}, {"coupling", stack_json(s.coupling)}});
    m["surrogates"] = surr;
    header["model"] = m;
    header["tensor_count"] = params.size();
    header["parameter_count"] = count_params(params);
    header["checksum"] = hex64(checkpoint_checksum(tensors));
    return header.dump() + "\n" + tensors;
}

MtlModel load_checkpoint(const std::string& text) {
    const auto nl = text.find('\n');
    if (nl == std::string::npos) throw Error(ErrorKind::Schema, "checkpoint: missing header line");
    ordered_json header;
    try {
        header = ordered_json::parse(text.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Version, std::string("checkpoint: unreadable header: ") + e.what());
    }
    if (!header.is_object() || header.value("format", std::string()) != kCheckpointFormat)
        throw Error(ErrorKind::Version, "checkpoint: format tag is not '" + std::string(kCheckpointFormat) + "'");
    if (!header.contains("version") || !header["version"].is_number_integer() ||
        header["version"].get<int>() != kCheckpointVersion)
        throw Error(ErrorKind::Version, "checkpoint: unsupported version (expected " +
                                            std::to_string(kCheckpointVersion) + ")");
    const std::string tensors = text.substr(nl + 1);
    if (header.value("checksum", std::string()) != hex64(checkpoint_checksum(tensors)))
        throw Error(ErrorKind::Version, "checkpoint: checksum mismatch, file was modified");

    MtlModel model;
    try {
        const auto& m = header.at("model");
        model.encoder = mlp_from_json(m.at("encoder"));
        for (const auto& h : m.at("heads")) {
            model.kinds.push_back(kind_from_string(h.at("kind").get<std::string>()));
            model.heads.push_back({mlp_from_json(h.at("trunk")), mlp_from_json(h.at("out"))});
        }
        for (const auto& s : m.at("surrogates")) {
            SurrogateModule module;
            module.task_id = s.at("task_id").get<std::size_t>();
            module.aggregator = mlp_from_json(s.at("aggregator"));
            module.coupling = stack_from_json(s.at("coupling"));
            model.surrogates.push_back(std::move(module));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("checkpoint: bad model structure: ") + e.what());
    }

    MutableParams params;
    collect_params(model, params);
    if (header.value("tensor_count", std::size_t{0}) != params.size())
        throw Error(ErrorKind::Schema, "checkpoint: tensor count disagrees with structure");
    std::istringstream in(tensors);
    std::string line;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!std::getline(in, line)) throw Error(ErrorKind::Schema, "checkpoint: missing tensor " + std::to_string(k));
        const auto fields = io::split(line, ',');
        auto p = params[k];
        if (fields.size() != p.size())
            throw Error(ErrorKind::Schema, "checkpoint: tensor " + std::to_string(k) + " has " +
                                               std::to_string(fields.size()) + " values, expected " +
                                               std::to_string(p.size()));
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = io::parse_double(fields[i]);
    }
    return model;
}

void write_checkpoint(const std::filesystem::path& path, const MtlModel& model) {
    io::write_file_atomic(path, save_checkpoint(model));
}

MtlModel read_checkpoint(const std::filesystem::path& path) { return load_checkpoint(io::read_file(path)); }

}  // namespace nexusflow
