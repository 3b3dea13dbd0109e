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

#include "qtraj/commands.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qtraj/analysis.hpp"
#include "qtraj/data.hpp"
#include "qtraj/error.hpp"
#include "qtraj/infer.hpp"
#include "qtraj/parallel.hpp"

namespace qtraj {

namespace fs = std::filesystem;

namespace {

constexpr const char *kVersion = "0.1.0";

void require_input(const fs::path &p, const char *what) {
    if (p.empty()) fail_config(std::string("missing ") + what + " path");
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) fail_io(std::string(what) + " not found: " + p.string());
}

void prepare_output(const fs::path &p, const char *what) {
    if (p.empty()) fail_config(std::string("missing ") + what + " path");
    const fs::path parent = p.parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec || !fs::is_directory(parent)) fail_io("cannot create output directory " + parent.string());
}

fs::path with_suffix(const fs::path &p, const std::string &suffix) { return fs::path(p.string() + suffix); }

std::ofstream open_out(const fs::path &p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot open " + p.string() + " for writing");
    return out;
}

void finish(std::ofstream &out, const fs::path &p) {
    out.flush();
    if (!out) fail_io("write failed: " + p.string());
}

void write_text(const fs::path &p, const std::string &text) {
    auto out = open_out(p);
    out << text;
    finish(out, p);
}

void write_manifest(const fs::path &output, const std::string &command, nlohmann::json body) {
    body["command"] = command;
    body["qtraj_version"] = kVersion;
    write_text(manifest_path(output), body.dump(2) + "\n");
}

PredictionTable load_predictions(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail_io("cannot open " + p.string());
    return read_prediction_csv(in);
}

void save_predictions(const fs::path &p, const PredictionTable &table) {
    auto out = open_out(p);
    write_prediction_csv(out, table);
    finish(out, p);
}

SimConfig sim_config_of(const Dataset &ds) {
    if (ds.config.is_null() || ds.config.empty()) fail_config("dataset carries no simulation config");
    return SimConfig::from_json(ds.config);
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j{{"sim", sim.to_json()}, {"train", train.to_json()}, {"workers", workers}};
    if (seed) j["seed"] = *seed;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json &j) {
    if (!j.is_object()) fail_config("run config must be a JSON object");
    RunConfig rc;
    try {
        for (const auto &[key, value] : j.items()) {
            if (key == "sim") {
                rc.sim = SimConfig::from_json(value);
            } else if (key == "train") {
                rc.train = TrainConfig::from_json(value);
            } else if (key == "seed") {
                rc.seed = value.get<std::uint64_t>();
            } else if (key == "workers") {
                rc.workers = value.get<unsigned>();
            } else {
                fail_config("unknown run config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception &e) {
        fail_config(std::string("malformed run config: ") + e.what());
    }
    return rc;
}

RunConfig RunConfig::load(const fs::path &path) {
    require_input(path, "config");
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        fail_config("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig &cfg) {
    if (flag) return *flag;
    if (cfg.seed) return *cfg.seed;
    if (const char *env = std::getenv("QTRAJ_SEED"); env && *env) {
        std::uint64_t v = 0;
        const std::string_view s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail_config("QTRAJ_SEED is not an unsigned integer");
        return v;
    }
    return 0;
}

fs::path manifest_path(const fs::path &output) { return with_suffix(output, ".manifest.json"); }

std::string to_string(Column c) {
    switch (c) {
        case Column::forward:
            return "forward";
        case Column::backward:
            return "backward";
        case Column::smoothed:
            return "smoothed";
    }
    return "forward";
}

Column parse_column(std::string_view s) {
    if (s == "forward") return Column::forward;
    if (s == "backward") return Column::backward;
    if (s == "smoothed") return Column::smoothed;
    fail_config("unknown prediction column '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

void cmd_simulate(const SimulateArgs &args) {
    if (args.n_traces == 0) fail_config("simulate needs a positive trace count");
    prepare_output(args.out, "dataset output");
    SimConfig cfg = args.config.sim;
    cfg.seed = args.seed;
    cfg.validate();

    const auto shots = generate_dataset(cfg, args.n_traces, resolve_workers(args.config.workers));
    const Dataset ds = make_dataset(shots, cfg);
    write_dataset(args.out, ds);
    write_manifest(args.out, "simulate",
                   {{"seed", args.seed}, {"config", cfg.to_json()}, {"n_traces", args.n_traces},
                    {"outputs", {args.out.string()}}, {"dataset", ds.manifest()}});
}

void cmd_filter(const FilterArgs &args) {
    require_input(args.data, "dataset");
    prepare_output(args.out, "prediction output");
    const Dataset ds = read_dataset(args.data);
    if (ds.normalized) fail_config("the oracle filter needs raw (unnormalized) voltages");
    const SimConfig cfg = sim_config_of(ds);

    PredictionTable table;
    table.dt = cfg.record_dt;
    table.forward.resize(ds.size());
    table.backward.resize(ds.size());
    table.smoothed.resize(ds.size());
    parallel_for(ds.size(), resolve_workers(args.workers), [&](std::size_t i) {
        const auto &r = ds.records[i];
        table.forward[i] = sme_filter(r.voltages, r.prep, cfg);
        table.backward[i] = sme_retrofilter(r.voltages, r.meas, cfg);
        table.smoothed[i] = smooth(table.forward[i], table.backward[i]);
    });
    save_predictions(args.out, table);
    write_manifest(args.out, "filter",
                   {{"config", cfg.to_json()}, {"inputs", {args.data.string()}}, {"outputs", {args.out.string()}}});
}

void cmd_train(const TrainArgs &args) {
    require_input(args.data, "dataset");
    prepare_output(args.model_out, "model output");
    args.train.validate();
    if (!(args.eval_fraction > 0.0 && args.eval_fraction < 1.0)) fail_config("eval fraction must lie in (0, 1)");

    const Dataset ds = read_dataset(args.data);
    const auto [train_set, eval_set] = split(ds, args.eval_fraction, args.train.seed);
    const fs::path history_path = with_suffix(args.model_out, ".history.csv");

    std::ostringstream history;
    history << "epoch,learning_rate,dropout,train_loss,eval_loss\n";
    history.precision(10);
    auto on_epoch = [&](const EpochStats &s) {
        history << s.epoch << ',' << s.learning_rate << ',' << s.dropout << ',' << s.train_loss << ','
                << s.eval_loss << '\n';
        if (!args.quiet) {
            std::cerr << "epoch " << s.epoch << " lr " << s.learning_rate << " train " << s.train_loss << " eval "
                      << s.eval_loss << '\n';
        }
    };
    nlohmann::json manifest{{"seed", args.train.seed},
                            {"config", args.train.to_json()},
                            {"direction", to_string(args.direction)},
                            {"eval_fraction", args.eval_fraction},
                            {"inputs", {args.data.string()}},
                            {"outputs", {args.model_out.string(), history_path.string()}}};
    try {
        const TrainResult result = train(train_set, eval_set, args.train, args.direction, on_epoch);
        save_model(args.model_out, result.model);
    } catch (const TrainingDiverged &e) {
        save_model(args.model_out, e.last_good());
        write_text(history_path, history.str());
        manifest["diverged"] = e.what();
        write_manifest(args.model_out, "train", manifest);
        throw;
    }
    write_text(history_path, history.str());
    write_manifest(args.model_out, "train", manifest);
}

void cmd_predict(const PredictArgs &args) {
    require_input(args.model, "model");
    require_input(args.data, "dataset");
    prepare_output(args.out, "prediction output");
    const RnnModel model = load_model(args.model);
    const Dataset ds = read_dataset(args.data);
    if (ds.normalized) fail_config("predict expects raw voltages; the model applies its own normalization");
    const SimConfig cfg = sim_config_of(ds);

    PredictionTable table;
    table.dt = cfg.record_dt;
    auto preds = predict_all(model, ds, cfg.record_dt, args.unknown_conditioning, resolve_workers(args.workers));
    (model.direction == Direction::forward ? table.forward : table.backward) = std::move(preds);
    save_predictions(args.out, table);
    write_manifest(args.out, "predict",
                   {{"direction", to_string(model.direction)},
                    {"unknown_conditioning", args.unknown_conditioning},
                    {"inputs", {args.model.string(), args.data.string()}},
                    {"outputs", {args.out.string()}}});
}

void cmd_smooth(const SmoothArgs &args) {
    require_input(args.forward_csv, "forward predictions");
    require_input(args.backward_csv, "backward predictions");
    prepare_output(args.out, "prediction output");
    const PredictionTable fwd = load_predictions(args.forward_csv);
    const PredictionTable bwd = load_predictions(args.backward_csv);
    if (fwd.forward.empty()) fail_config(args.forward_csv.string() + " has no forward predictions");
    if (bwd.backward.empty()) fail_config(args.backward_csv.string() + " has no backward predictions");
    if (fwd.forward.size() != bwd.backward.size()) fail_config("forward and backward files cover different records");
    if (std::abs(fwd.dt - bwd.dt) > 1e-9) fail_config("forward and backward files use different time steps");

    PredictionTable table;
    table.dt = fwd.dt;
    table.forward = fwd.forward;
    table.backward = bwd.backward;
    table.smoothed.reserve(table.forward.size());
    for (std::size_t i = 0; i < table.forward.size(); ++i) {
        table.smoothed.push_back(smooth(table.forward[i], table.backward[i]));
    }
    save_predictions(args.out, table);
    write_manifest(args.out, "smooth",
                   {{"inputs", {args.forward_csv.string(), args.backward_csv.string()}},
                    {"outputs", {args.out.string()}}});
}

void cmd_validate(const ValidateArgs &args) {
    require_input(args.predictions, "predictions");
    require_input(args.data, "dataset");
    prepare_output(args.out, "report output");
    const PredictionTable table = load_predictions(args.predictions);
    const Dataset ds = read_dataset(args.data);
    if (table.record_count() != ds.size()) fail_config("prediction file and dataset cover different records");

    nlohmann::json report{{"delta", args.delta}};
    std::ostringstream bins;
    bins.precision(10);
    auto run = [&](const std::vector<PredictionSeries> &group, const char *name, bool final_time) {
        if (group.empty()) return;
        std::vector<double> p;
        std::vector<std::uint8_t> y;
        std::vector<Axis> ax;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto &s = group[i];
            const Label &lab = final_time ? ds.records[i].meas : ds.records[i].prep;
            p.push_back(s.at(final_time ? s.size() - 1 : 0, lab.axis));
            y.push_back(lab.bit);
            ax.push_back(lab.axis);
        }
        const CalibrationReport cal = calibrate(p, y, ax, args.delta);
        report[name] = cal.to_json();
        std::ostringstream part;
        part.precision(10);
        cal.write_csv(part);
        std::string text = part.str();
        std::istringstream lines(text);
        std::string line;
        std::getline(lines, line);  // header
        while (std::getline(lines, line)) bins << name << ',' << line << '\n';
    };
    run(table.forward, "forward", true);
    run(table.backward, "backward", false);
    if (table.forward.empty() && table.backward.empty()) fail_config("prediction file has no forward or backward column");

    const fs::path bins_path = with_suffix(args.out, ".bins.csv");
    write_text(args.out, report.dump(2) + "\n");
    write_text(bins_path, "direction,axis,p_center,half_width,mean_outcome,count\n" + bins.str());
    write_manifest(args.out, "validate",
                   {{"delta", args.delta},
                    {"inputs", {args.predictions.string(), args.data.string()}},
                    {"outputs", {args.out.string(), bins_path.string()}}});
}

void cmd_estimate(const EstimateArgs &args) {
    require_input(args.predictions, "predictions");
    prepare_output(args.out, "report output");
    const PredictionTable table = load_predictions(args.predictions);
    const std::vector<PredictionSeries> *group = nullptr;
    switch (args.column) {
        case Column::forward:
            group = &table.forward;
            break;
        case Column::backward:
            group = &table.backward;
            break;
        case Column::smoothed:
            group = &table.smoothed;
            break;
    }
    if (group->empty()) fail_config("prediction file has no " + to_string(args.column) + " column");

    const FieldOptions opts{args.grid, args.min_count};
    const VectorFieldMap map = build_field_map(*group, opts);
    const PhysParams params = fit_params(map, map);

    const fs::path drift_path = with_suffix(args.out, ".drift.csv");
    const fs::path diffusion_path = with_suffix(args.out, ".diffusion.csv");
    nlohmann::json report = params.to_json();
    report["column"] = to_string(args.column);
    report["valid_cells"] = map.valid_cells();
    write_text(args.out, report.dump(2) + "\n");
    std::ostringstream cells;
    cells.precision(10);
    map.write_csv(cells);
    write_text(drift_path, cells.str());
    write_text(diffusion_path, cells.str());
    write_manifest(args.out, "estimate",
                   {{"column", to_string(args.column)},
                    {"grid", args.grid},
                    {"min_count", args.min_count},
                    {"inputs", {args.predictions.string()}},
                    {"outputs", {args.out.string(), drift_path.string(), diffusion_path.string()}}});
}

void cmd_tomography(const TomographyArgs &args) {
    require_input(args.model, "model");
    require_input(args.data, "dataset");
    prepare_output(args.out, "report output");
    const RnnModel model = load_model(args.model);
    if (model.direction != Direction::backward) fail_config("tomography needs a backward model");
    const Dataset ds = read_dataset(args.data);
    const SimConfig cfg = sim_config_of(ds);

    const auto preds =
        predict_all(model, ds, cfg.record_dt, !args.measured_conditioning, resolve_workers(args.workers));
    std::vector<std::array<double, 3>> p0;
    p0.reserve(preds.size());
    for (const auto &s : preds) p0.push_back(s.probs.front());
    const TomographyResult tomo = tomography(p0);
    const BootstrapResult ci = bootstrap_ci(p0, args.resamples, args.seed);

    nlohmann::json report = tomo.to_json();
    report["ci95"] = ci.to_json();
    report["nearest_cardinal"] = to_string(nearest_cardinal(tomo.bloch));
    report["conditioning"] = args.measured_conditioning ? "measured" : "unknown";
    write_text(args.out, report.dump(2) + "\n");
    write_manifest(args.out, "tomography",
                   {{"seed", args.seed},
                    {"resamples", args.resamples},
                    {"conditioning", args.measured_conditioning ? "measured" : "unknown"},
                    {"inputs", {args.model.string(), args.data.string()}},
                    {"outputs", {args.out.string()}}});
}

}  // namespace qtraj
