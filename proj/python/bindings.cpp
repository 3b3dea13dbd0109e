// Copyright 2026 The qtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "qtraj/analysis.hpp"
#include "qtraj/commands.hpp"
#include "qtraj/data.hpp"
#include "qtraj/error.hpp"
#include "qtraj/infer.hpp"
#include "qtraj/nn.hpp"
#include "qtraj/sim.hpp"

namespace py = pybind11;
using namespace qtraj;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Label label_of(const std::string &s) {
    if (s.size() != 2 || (s[0] != '+' && s[0] != '-')) fail_config("label must look like '+X' or '-Z'");
    return Label{static_cast<std::uint8_t>(s[0] == '+' ? 1 : 0), parse_axis(s.substr(1))};
}

std::optional<Label> maybe_label(const std::optional<std::string> &s) {
    if (!s) return std::nullopt;
    return label_of(*s);
}

Array to_array(const PredictionSeries &s) {
    Array out({static_cast<py::ssize_t>(s.size()), py::ssize_t{3}});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t t = 0; t < s.size(); ++t) {
        for (int k = 0; k < 3; ++k) v(static_cast<py::ssize_t>(t), k) = s.probs[t][k];
    }
    return out;
}

PredictionSeries from_array(const Array &a, double dt) {
    if (a.ndim() != 2 || a.shape(1) != 3) fail_config("prediction arrays must have shape (T, 3)");
    PredictionSeries s;
    s.dt = dt;
    auto v = a.unchecked<2>();
    for (py::ssize_t t = 0; t < a.shape(0); ++t) s.probs.push_back({v(t, 0), v(t, 1), v(t, 2)});
    return s;
}

std::vector<float> to_record(const py::array_t<float, py::array::c_style | py::array::forcecast> &a) {
    if (a.ndim() != 1) fail_config("records must be one-dimensional");
    return {a.data(), a.data() + a.size()};
}

py::dict json_to_dict(const nlohmann::json &j) {
    return py::module_::import("json").attr("loads")(j.dump()).cast<py::dict>();
}

}  // namespace

PYBIND11_MODULE(_qtraj, m) {
    m.doc() = "Continuously monitored qubit trajectories: simulation, RNN prediction and analysis";

    // Handles are leaked on purpose: they must outlive interpreter teardown.
    static const py::handle base = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
    static const py::handle config_error = py::exception<Error>(m, "ConfigError", base).release();
    static const py::handle io_error = py::exception<Error>(m, "IOError", base).release();
    static const py::handle numeric_error = py::exception<Error>(m, "NumericError", base).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error &e) {
            switch (e.category()) {
                case ErrorCategory::config:
                    PyErr_SetString(config_error.ptr(), e.what());
                    return;
                case ErrorCategory::io:
                    PyErr_SetString(io_error.ptr(), e.what());
                    return;
                case ErrorCategory::numeric:
                    PyErr_SetString(numeric_error.ptr(), e.what());
                    return;
            }
        }
    });

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("rabi_freq", &SimConfig::rabi_freq)
        .def_readwrite("meas_rate", &SimConfig::meas_rate)
        .def_readwrite("efficiency", &SimConfig::efficiency)
        .def_readwrite("record_dt", &SimConfig::record_dt)
        .def_readwrite("substeps", &SimConfig::substeps)
        .def_readwrite("durations", &SimConfig::durations)
        .def_readwrite("seed", &SimConfig::seed)
        .def("validate", &SimConfig::validate)
        .def("to_dict", [](const SimConfig &c) { return json_to_dict(c.to_json()); });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("hidden", &TrainConfig::hidden)
        .def_property(
            "activation", [](const TrainConfig &c) { return to_string(c.activation); },
            [](TrainConfig &c, const std::string &s) { c.activation = parse_activation(s); })
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("lr_start", &TrainConfig::lr_start)
        .def_readwrite("lr_end", &TrainConfig::lr_end)
        .def_readwrite("dropout_start", &TrainConfig::dropout_start)
        .def_readwrite("dropout_end", &TrainConfig::dropout_end)
        .def_readwrite("clip_norm", &TrainConfig::clip_norm)
        .def_readwrite("unknown_conditioning_fraction", &TrainConfig::unknown_conditioning_fraction)
        .def_readwrite("seed", &TrainConfig::seed)
        .def("to_dict", [](const TrainConfig &c) { return json_to_dict(c.to_json()); });

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", &Dataset::size)
        .def_property_readonly("sample_count", &Dataset::sample_count)
        .def_property_readonly("config", [](const Dataset &d) { return SimConfig::from_json(d.config); })
        .def("record", [](const Dataset &d, std::size_t i) {
            if (i >= d.size()) throw py::index_error("record index out of range");
            const auto &r = d.records[i];
            py::array_t<float> v(static_cast<py::ssize_t>(r.voltages.size()));
            std::copy(r.voltages.begin(), r.voltages.end(), v.mutable_data());
            return py::make_tuple(to_string(r.prep), to_string(r.meas), v);
        })
        .def("save", [](const Dataset &d, const std::filesystem::path &p) { write_dataset(p, d); })
        .def_static("load", &read_dataset)
        .def("split", &split, py::arg("eval_fraction"), py::arg("seed") = 0);

    m.def(
        "simulate",
        [](const SimConfig &cfg, std::size_t n, unsigned workers) {
            py::gil_scoped_release release;
            return make_dataset(generate_dataset(cfg, n, workers), cfg);
        },
        py::arg("config"), py::arg("n_traces"), py::arg("workers") = 1,
        "Simulate n_traces records cycling through the preparation/measurement/duration sweep.");

    m.def(
        "sme_filter",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast> &v, const std::string &prep,
           const SimConfig &cfg) { return to_array(sme_filter(to_record(v), label_of(prep), cfg)); },
        py::arg("voltages"), py::arg("prep"), py::arg("config"));
    m.def(
        "sme_retrofilter",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast> &v,
           const std::optional<std::string> &final_outcome, const SimConfig &cfg) {
            return to_array(sme_retrofilter(to_record(v), maybe_label(final_outcome), cfg));
        },
        py::arg("voltages"), py::arg("final_outcome"), py::arg("config"));

    m.def("smooth_probability", &smooth_probability, py::arg("backward"), py::arg("forward"));
    m.def(
        "smooth",
        [](const Array &f, const Array &b) { return to_array(smooth(from_array(f, 0.0), from_array(b, 0.0))); },
        py::arg("forward"), py::arg("backward"));

    py::class_<RnnModel>(m, "Model")
        .def_readonly("hidden", &RnnModel::hidden)
        .def_property_readonly("direction", [](const RnnModel &r) { return to_string(r.direction); })
        .def_property_readonly("activation", [](const RnnModel &r) { return to_string(r.activation); })
        .def(
            "predict",
            [](const RnnModel &r, const py::array_t<float, py::array::c_style | py::array::forcecast> &v,
               const std::optional<std::string> &conditioning, double dt) {
                const auto rec = to_record(v);
                const auto label = maybe_label(conditioning);
                return to_array(r.direction == Direction::forward ? predict_forward(r, rec, label, dt)
                                                                  : predict_backward(r, rec, label, dt));
            },
            py::arg("voltages"), py::arg("conditioning") = std::nullopt, py::arg("dt") = 0.04)
        .def("save", [](const RnnModel &r, const std::filesystem::path &p) { save_model(p, r); })
        .def_static("load", &load_model);

    m.def(
        "train",
        [](const Dataset &train_set, const Dataset &eval_set, const TrainConfig &cfg, const std::string &direction) {
            py::gil_scoped_release release;
            auto result = train(train_set, eval_set, cfg, parse_direction(direction));
            std::vector<std::pair<double, double>> history;
            for (const auto &s : result.history) history.emplace_back(s.train_loss, s.eval_loss);
            return std::make_pair(std::move(result.model), history);
        },
        py::arg("train_set"), py::arg("eval_set"), py::arg("config"), py::arg("direction") = "forward",
        "Returns (model, [(train_loss, eval_loss) per epoch]).");

    m.def(
        "calibrate",
        [](const std::vector<double> &p, const std::vector<std::uint8_t> &y, const std::vector<std::string> &axes,
           double delta) {
            std::vector<Axis> ax;
            for (const auto &a : axes) ax.push_back(parse_axis(a));
            return json_to_dict(calibrate(p, y, ax, delta).to_json());
        },
        py::arg("predictions"), py::arg("outcomes"), py::arg("axes"), py::arg("delta") = 0.01);

    m.def(
        "fit_params",
        [](const std::vector<Array> &series, double dt, int grid, std::size_t min_count) {
            std::vector<PredictionSeries> ens;
            for (const auto &a : series) ens.push_back(from_array(a, dt));
            const auto map = build_field_map(ens, FieldOptions{grid, min_count});
            return json_to_dict(fit_params(map, map).to_json());
        },
        py::arg("series"), py::arg("dt") = 0.04, py::arg("grid") = 20, py::arg("min_count") = 50);

    m.def(
        "tomography",
        [](const Array &p0, std::size_t resamples, std::uint64_t seed) {
            if (p0.ndim() != 2 || p0.shape(1) != 3) fail_config("initial probabilities must have shape (N, 3)");
            const PredictionSeries s = from_array(p0, 0.0);
            auto out = tomography(s.probs).to_json();
            out["ci95"] = bootstrap_ci(s.probs, resamples, seed).to_json();
            return json_to_dict(out);
        },
        py::arg("initial_probs"), py::arg("resamples") = 1000, py::arg("seed") = 0);
}
