#include "nexusflow/synthbench.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "nexusflow/error.hpp"
#include "nexusflow/io.hpp"
#include "nexusflow/prng.hpp"

namespace nexusflow {

const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Regression: return "regression";
        case TaskKind::Classification: return "classification";
        case TaskKind::UnitVector: return "unit_vector";
    }
    return "regression";
}

TaskKind task_kind(std::size_t task) {
    switch (task) {
        case 0: return TaskKind::Regression;
        case 1: return TaskKind::Classification;
        case 2: return TaskKind::UnitVector;
    }
    throw Error(ErrorKind::InvalidArgument, "task index " + std::to_string(task) + " out of range");
}

void validate(const BenchConfig& cfg) {
    if (cfg.n_tasks != 2 && cfg.n_tasks != 3)
        throw Error(ErrorKind::InvalidArgument, "n_tasks must be 2 or 3, got " + std::to_string(cfg.n_tasks));
    if (cfg.d_in < 2 || cfg.d_factor == 0 || cfg.d_reg == 0 || cfg.n_classes < 2)
        throw Error(ErrorKind::InvalidArgument, "invalid benchmark dimensions");
    if (cfg.n_train == 0 || cfg.n_val == 0)
        throw Error(ErrorKind::InvalidArgument, "n_train and n_val must be positive");
    if (!(cfg.noise_std >= 0.0) || !std::isfinite(cfg.shift_mean) || !std::isfinite(cfg.shift_rotation))
        throw Error(ErrorKind::InvalidArgument, "invalid shift or noise parameters");
}

std::size_t task_output_dim(const BenchConfig& cfg, std::size_t task) {
    switch (task_kind(task)) {
        case TaskKind::Regression: return cfg.d_reg;
        case TaskKind::Classification: return cfg.n_classes;
        case TaskKind::UnitVector: return 3;
    }
    return 0;
}

void rotate_domain(std::span<double> x, std::size_t domain, double angle_per_domain) {
    const double angle = angle_per_domain * static_cast<double>(domain);
    if (angle == 0.0) return;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (std::size_t k = 0; k + 1 < x.size(); k += 2) {
        const double a = x[k];
        const double b = x[k + 1];
        x[k] = c * a - s * b;
        x[k + 1] = s * a + c * b;
    }
}

namespace {

std::vector<double> mat_vec(const Matrix& w, std::span<const double> u) {
    std::vector<double> out(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        auto r = w.row(i);
        for (std::size_t k = 0; k < u.size(); ++k) out[i] += r[k] * u[k];
    }
    return out;
}

Matrix scaled_gaussian(Prng& prng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m = gaussian(prng, rows, cols);
    for (double& v : m.data()) v *= scale;
    return m;
}

Sample draw_sample(const BenchConfig& cfg, const BenchTruth& truth, Prng& prng, std::size_t domain, bool full_labels) {
    Sample s;
    s.domain = domain;
    s.factor.resize(cfg.d_factor);
    for (double& v : s.factor) v = prng.normal();
    s.x = mat_vec(truth.mixing, s.factor);
    for (std::size_t k = 0; k < cfg.d_in; ++k) s.x[k] += truth.offsets[domain][k];
    rotate_domain(s.x, domain, cfg.shift_rotation);
    for (double& v : s.x) v += cfg.noise_std * prng.normal();

    s.mask.assign(cfg.n_tasks, 0);
    s.mask[domain] = 1;
    for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
        if (!full_labels && t != domain) continue;
        switch (task_kind(t)) {
            case TaskKind::Regression: s.y_reg = regression_label(truth, s.factor); break;
            case TaskKind::Classification: s.y_class = class_label(truth, s.factor); break;
            case TaskKind::UnitVector: s.y_dir = direction_label(truth, s.factor); break;
        }
    }
    return s;
}

}  // namespace

std::vector<double> regression_label(const BenchTruth& truth, std::span<const double> u) { return mat_vec(truth.w_reg, u); }

std::size_t class_label(const BenchTruth& truth, std::span<const double> u) {
    const auto logits = mat_vec(truth.w_class, u);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

std::vector<double> direction_label(const BenchTruth& truth, std::span<const double> u) {
    auto v = mat_vec(truth.w_dir, u);
    const double n = l2_norm(v);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    } else {
        v = {1.0, 0.0, 0.0};
    }
    return v;
}

Dataset generate(const BenchConfig& cfg) {
    validate(cfg);
    Prng prng(cfg.seed);
    Dataset ds;
    auto& truth = ds.truth;
    const double factor_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_factor));
    truth.mixing = scaled_gaussian(prng, cfg.d_in, cfg.d_factor, factor_scale);
    truth.offsets.assign(cfg.n_tasks, std::vector<double>(cfg.d_in, 0.0));
    for (std::size_t d = 1; d < cfg.n_tasks; ++d)
        for (double& v : truth.offsets[d]) v = (prng.uniform() < 0.5 ? -1.0 : 1.0) * cfg.shift_mean;
    truth.w_reg = scaled_gaussian(prng, cfg.d_reg, cfg.d_factor, factor_scale);
    truth.w_class = scaled_gaussian(prng, cfg.n_classes, cfg.d_factor, 1.0);
    truth.w_dir = scaled_gaussian(prng, 3, cfg.d_factor, 1.0);

    for (std::size_t d = 0; d < cfg.n_tasks; ++d)
        for (std::size_t i = 0; i < cfg.n_train; ++i) ds.train.push_back(draw_sample(cfg, truth, prng, d, false));
    for (std::size_t d = 0; d < cfg.n_tasks; ++d)
        for (std::size_t i = 0; i < cfg.n_val; ++i) ds.val.push_back(draw_sample(cfg, truth, prng, d, true));
    return ds;
}

SplitStats split_stats(std::span<const Sample> samples, std::size_t n_tasks) {
    SplitStats stats;
    stats.per_domain.assign(n_tasks, 0);
    stats.mask_histogram.assign(n_tasks, 0);
    for (const auto& s : samples) {
        ++stats.total;
        if (s.domain >= stats.per_domain.size()) stats.per_domain.resize(s.domain + 1, 0);
        ++stats.per_domain[s.domain];
        for (std::size_t t = 0; t < s.mask.size() && t < n_tasks; ++t)
            if (s.mask[t]) ++stats.mask_histogram[t];
    }
    return stats;
}

void write_dataset_csv(std::ostream& out, std::span<const Sample> samples, const BenchConfig& cfg) {
    for (std::size_t k = 0; k < cfg.d_in; ++k) out << "x_" << k << ',';
    out << "domain";
    for (std::size_t t = 0; t < cfg.n_tasks; ++t) out << ",mask_" << t;
    for (std::size_t k = 0; k < cfg.d_reg; ++k) out << ",y1_" << k;
    out << ",y2";
    if (cfg.n_tasks == 3)
        for (std::size_t k = 0; k < 3; ++k) out << ",y3_" << k;
    out << '\n';

    for (const auto& s : samples) {
        for (double v : s.x) out << io::format_double(v) << ',';
        out << s.domain;
        for (auto m : s.mask) out << ',' << static_cast<int>(m);
        for (std::size_t k = 0; k < cfg.d_reg; ++k) {
            out << ',';
            if (s.y_reg) out << io::format_double((*s.y_reg)[k]);
        }
        out << ',';
        if (s.y_class) out << *s.y_class;
        if (cfg.n_tasks == 3)
            for (std::size_t k = 0; k < 3; ++k) {
                out << ',';
                if (s.y_dir) out << io::format_double((*s.y_dir)[k]);
            }
        out << '\n';
    }
}

std::vector<Sample> read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Io, "dataset csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = io::split(line, ',');
    std::size_t n_x = 0, n_mask = 0, n_y1 = 0, n_y3 = 0;
    std::ptrdiff_t domain_col = -1, y2_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto h = header[c];
        if (h.starts_with("x_")) ++n_x;
        else if (h == "domain") domain_col = static_cast<std::ptrdiff_t>(c);
        else if (h.starts_with("mask_")) ++n_mask;
        else if (h.starts_with("y1_")) ++n_y1;
        else if (h == "y2") y2_col = static_cast<std::ptrdiff_t>(c);
        else if (h.starts_with("y3_")) ++n_y3;
        else throw Error(ErrorKind::Schema, "dataset csv: unknown column '" + std::string(h) + "'");
    }
    if (domain_col != static_cast<std::ptrdiff_t>(n_x) || y2_col < 0 || n_mask < 2)
        throw Error(ErrorKind::Schema, "dataset csv: unexpected column layout");

    std::vector<Sample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = io::split(line, ',');
        if (f.size() != header.size())
            throw Error(ErrorKind::Schema, "dataset csv line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(header.size()) + " fields");
        Sample s;
        std::size_t c = 0;
        for (std::size_t k = 0; k < n_x; ++k) s.x.push_back(io::parse_double(f[c++]));
        s.domain = static_cast<std::size_t>(io::parse_int(f[c++]));
        for (std::size_t k = 0; k < n_mask; ++k) s.mask.push_back(static_cast<std::uint8_t>(io::parse_int(f[c++])));
        if (!f[c].empty()) {
            std::vector<double> y(n_y1);
            for (std::size_t k = 0; k < n_y1; ++k) y[k] = io::parse_double(f[c + k]);
            s.y_reg = std::move(y);
        }
        c += n_y1;
        if (!f[c].empty()) s.y_class = static_cast<std::size_t>(io::parse_int(f[c]));
        ++c;
        if (n_y3 > 0 && !f[c].empty()) {
            std::vector<double> y(n_y3);
            for (std::size_t k = 0; k < n_y3; ++k) y[k] = io::parse_double(f[c + k]);
            s.y_dir = std::move(y);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace nexusflow
