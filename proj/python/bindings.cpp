#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "nexusflow/alignment.hpp"
#include "nexusflow/commands.hpp"
#include "nexusflow/coupling.hpp"
#include "nexusflow/diagnostics.hpp"
#include "nexusflow/experiment.hpp"
#include "nexusflow/linalg.hpp"
#include "nexusflow/synthbench.hpp"
#include "nexusflow/trainer.hpp"
#include "nexusflow/verify.hpp"

namespace py = pybind11;
namespace nf = nexusflow;

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

nf::Matrix to_matrix(const Array& a) {
    if (a.ndim() == 1) return nf::Matrix(1, a.shape(0), std::vector<double>(a.data(), a.data() + a.size()));
    if (a.ndim() != 2) throw py::value_error("expected a 1-D or 2-D array");
    return nf::Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const nf::Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

std::vector<nf::Matrix> to_matrices(const std::vector<Array>& arrays) {
    std::vector<nf::Matrix> out;
    for (const auto& a : arrays) out.push_back(to_matrix(a));
    return out;
}

py::dict samples_dict(const std::vector<nf::Sample>& samples, std::size_t n_tasks) {
    const std::size_t n = samples.size();
    const std::size_t d = n ? samples.front().x.size() : 0;
    Array x({n, d});
    py::array_t<long long> domain(n);
    py::array_t<long long> mask({n, n_tasks});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(samples[i].x.begin(), samples[i].x.end(), x.mutable_data() + i * d);
        domain.mutable_data()[i] = static_cast<long long>(samples[i].domain);
        for (std::size_t t = 0; t < n_tasks; ++t) mask.mutable_data()[i * n_tasks + t] = samples[i].mask[t];
    }
    py::dict out;
    out["x"] = x;
    out["domain"] = domain;
    out["mask"] = mask;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "nexusflow core bindings";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const nf::Error& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<nf::CouplingStack>(m, "CouplingStack")
        .def_readonly("dim", &nf::CouplingStack::dim)
        .def_property_readonly("depth", [](const nf::CouplingStack& s) { return s.layers.size(); })
        .def("forward", [](const nf::CouplingStack& s, const Array& h) { return to_array(nf::stack_apply(s, to_matrix(h))); })
        .def("inverse", [](const nf::CouplingStack& s, const Array& z) { return to_array(nf::stack_inverse(s, to_matrix(z))); });

    m.def(
        "coupling_stack",
        [](std::size_t dim, std::size_t depth, std::uint64_t seed, bool identity_init, double clamp) {
            nf::Prng prng(seed);
            if (identity_init) {
                nf::CouplingOptions o;
                o.clamp = clamp;
                return nf::make_coupling_stack(dim, depth, prng, o);
            }
            return nf::random_stack(dim, depth, prng, clamp);
        },
        py::arg("dim"), py::arg("depth"), py::arg("seed") = 0, py::arg("identity_init") = false, py::arg("clamp") = 2.0);

    m.def(
        "align",
        [](const std::vector<Array>& latents, const std::string& variant, const std::string& norm) {
            const auto z = to_matrices(latents);
            const auto r = nf::align(z, {nf::align_variant_from_string(variant), nf::align_norm_from_string(norm), 1.0});
            std::vector<Array> grads;
            for (const auto& g : r.grads) grads.push_back(to_array(g));
            return py::make_tuple(r.loss, grads);
        },
        py::arg("latents"), py::arg("variant") = "center", py::arg("norm") = "l2");

    m.def(
        "mmd_rbf",
        [](const Array& x, const Array& y, std::optional<double> bandwidth) {
            const auto r = nf::mmd_rbf(to_matrix(x), to_matrix(y), bandwidth);
            return py::make_tuple(r.mmd_sq, r.bandwidth);
        },
        py::arg("x"), py::arg("y"), py::arg("bandwidth") = py::none());
    m.def("effective_rank", [](const std::vector<double>& ev) { return nf::effective_rank(ev); });
    m.def("pca_spectrum", [](const Array& data) { return nf::pca_spectrum(to_matrix(data)); });
    m.def("project_2d", [](const Array& data) { return to_array(nf::project_2d(to_matrix(data))); });

    m.def("default_spec", [] { return nf::experiment_to_json({}); });
    m.def("resolve_spec", [](const std::string& text) { return nf::experiment_to_json(nf::parse_experiment(text)); });

    m.def(
        "generate",
        [](const std::string& spec_json) {
            const auto spec = nf::parse_experiment(spec_json);
            const auto d = nf::generate(spec.bench);
            py::dict out;
            out["train"] = samples_dict(d.train, spec.bench.n_tasks);
            out["val"] = samples_dict(d.val, spec.bench.n_tasks);
            return out;
        },
        py::arg("spec_json"));

    m.def(
        "train",
        [](const std::string& spec_json) {
            const auto spec = nf::parse_experiment(spec_json);
            std::string csv, summary;
            {
                py::gil_scoped_release release;
                const auto data = nf::load_data(spec);
                auto model = nf::build_model(spec.bench, spec.train);
                const auto record = nf::train(model, data.train, data.val, spec.train);
                csv = nf::record_csv(record);
                summary = nf::record_summary_json(record);
            }
            return py::make_tuple(csv, summary);
        },
        py::arg("spec_json"), "Returns (per-epoch CSV, summary JSON).");

    m.def(
        "verify",
        [](std::uint64_t seed, bool inject_fault) {
            nf::VerifyOptions o;
            o.seed = seed;
            o.inject_fault = inject_fault;
            std::vector<py::tuple> out;
            for (const auto& r : nf::run_verify_suite(o)) out.push_back(py::make_tuple(r.name, r.passed, r.detail));
            return out;
        },
        py::arg("seed") = 0, py::arg("inject_fault") = false);
}
