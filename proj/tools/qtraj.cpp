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

// qtraj: simulate, train, predict, smooth, validate, estimate, tomography.

#include <cstdint>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qtraj/commands.hpp"
#include "qtraj/error.hpp"

using namespace qtraj;

namespace {

struct SimFlags {
    std::optional<double> rabi_freq;
    std::optional<double> rabi_mhz;
    std::optional<double> meas_rate;
    std::optional<double> efficiency;
    std::optional<double> record_dt;
    std::optional<int> substeps;

    void attach(CLI::App *app) {
        app->add_option("--rabi-freq", rabi_freq, "Rabi frequency in rad/us");
        app->add_option("--rabi-mhz", rabi_mhz, "Rabi frequency Omega/2pi in MHz")->excludes("--rabi-freq");
        app->add_option("--meas-rate", meas_rate, "measurement strength gamma in 1/us");
        app->add_option("--efficiency", efficiency, "detection efficiency eta");
        app->add_option("--dt", record_dt, "record bin width in us");
        app->add_option("--substeps", substeps, "integrator substeps per bin");
    }
    void apply(SimConfig &c) const {
        if (rabi_freq) c.rabi_freq = *rabi_freq;
        if (rabi_mhz) c.rabi_freq = 2.0 * std::numbers::pi * *rabi_mhz;
        if (meas_rate) c.meas_rate = *meas_rate;
        if (efficiency) c.efficiency = *efficiency;
        if (record_dt) {
            c.record_dt = *record_dt;
            c.durations = default_duration_grid(*record_dt);
        }
        if (substeps) c.substeps = *substeps;
    }
};

struct TrainFlags {
    std::optional<int> hidden;
    std::optional<std::string> activation;
    std::optional<int> epochs;
    std::optional<std::size_t> batch;
    std::optional<double> lr_start;
    std::optional<double> lr_end;
    std::optional<double> dropout_start;
    std::optional<double> dropout_end;
    std::optional<double> clip;
    std::optional<double> unknown_fraction;

    void attach(CLI::App *app) {
        app->add_option("--hidden", hidden, "LSTM units");
        app->add_option("--activation", activation, "tanh or relu");
        app->add_option("--epochs", epochs);
        app->add_option("--batch", batch, "mini-batch size");
        app->add_option("--lr-start", lr_start);
        app->add_option("--lr-end", lr_end);
        app->add_option("--dropout-start", dropout_start);
        app->add_option("--dropout-end", dropout_end);
        app->add_option("--clip", clip, "global gradient-norm clip");
        app->add_option("--unknown-fraction", unknown_fraction,
                        "fraction of training records shown with uniform conditioning");
    }
    void apply(TrainConfig &c) const {
        if (hidden) c.hidden = *hidden;
        if (activation) c.activation = parse_activation(*activation);
        if (epochs) c.epochs = *epochs;
        if (batch) c.batch_size = *batch;
        if (lr_start) c.lr_start = *lr_start;
        if (lr_end) c.lr_end = *lr_end;
        if (dropout_start) c.dropout_start = *dropout_start;
        if (dropout_end) c.dropout_end = *dropout_end;
        if (clip) c.clip_norm = *clip;
        if (unknown_fraction) c.unknown_conditioning_fraction = *unknown_fraction;
    }
};

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Continuously monitored qubit trajectories: simulation, RNN prediction and analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<unsigned> workers_flag;
    app.add_option("--config", config_path, "run config JSON (flags override it)");
    app.add_option("--seed", seed_flag, "master seed (fallback: config, then $QTRAJ_SEED)");
    app.add_option("--workers", workers_flag, "worker threads, 0 = auto, 1 = reproducible");

    SimFlags sim_flags;
    TrainFlags train_flags;

    auto *sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    std::string sim_out;
    std::size_t n_traces = 0;
    sim->add_option("-o,--out", sim_out, "dataset file")->required();
    sim->add_option("-n,--traces", n_traces, "number of traces")->required();
    sim_flags.attach(sim);

    auto *filt = app.add_subcommand("filter", "exact SME filter and retrofilter predictions");
    FilterArgs filter_args;
    filt->add_option("-d,--data", filter_args.data)->required();
    filt->add_option("-o,--out", filter_args.out, "prediction CSV")->required();

    auto *tr = app.add_subcommand("train", "train a forward or backward model");
    TrainArgs train_args;
    std::string direction = "forward";
    tr->add_option("-d,--data", train_args.data)->required();
    tr->add_option("--direction", direction, "forward or backward");
    tr->add_option("-o,--model", train_args.model_out, "model file")->required();
    tr->add_option("--eval-fraction", train_args.eval_fraction);
    tr->add_flag("-q,--quiet", train_args.quiet);
    train_flags.attach(tr);

    auto *pred = app.add_subcommand("predict", "run a trained model over a dataset");
    PredictArgs predict_args;
    pred->add_option("-m,--model", predict_args.model)->required();
    pred->add_option("-d,--data", predict_args.data)->required();
    pred->add_option("-o,--out", predict_args.out, "prediction CSV")->required();
    pred->add_flag("--unknown-conditioning", predict_args.unknown_conditioning,
                   "feed a uniform conditioning vector instead of the labels");

    auto *smo = app.add_subcommand("smooth", "combine forward and backward predictions");
    SmoothArgs smooth_args;
    smo->add_option("--forward", smooth_args.forward_csv)->required();
    smo->add_option("--backward", smooth_args.backward_csv)->required();
    smo->add_option("-o,--out", smooth_args.out)->required();

    auto *val = app.add_subcommand("validate", "calibration report");
    ValidateArgs validate_args;
    val->add_option("-p,--predictions", validate_args.predictions)->required();
    val->add_option("-d,--data", validate_args.data)->required();
    val->add_option("-o,--out", validate_args.out, "report JSON")->required();
    val->add_option("--delta", validate_args.delta, "bin half-width");

    auto *est = app.add_subcommand("estimate", "drift/diffusion maps and parameter fit");
    EstimateArgs estimate_args;
    std::string column = "forward";
    est->add_option("-p,--predictions", estimate_args.predictions)->required();
    est->add_option("-o,--out", estimate_args.out, "report JSON")->required();
    est->add_option("--column", column, "forward, backward or smoothed");
    est->add_option("--grid", estimate_args.grid);
    est->add_option("--min-count", estimate_args.min_count);

    auto *tom = app.add_subcommand("tomography", "initial-state reconstruction with bootstrap CIs");
    TomographyArgs tomo_args;
    tom->add_option("-m,--model", tomo_args.model)->required();
    tom->add_option("-d,--data", tomo_args.data)->required();
    tom->add_option("-o,--out", tomo_args.out, "report JSON")->required();
    tom->add_option("--resamples", tomo_args.resamples);
    tom->add_flag("--measured-conditioning", tomo_args.measured_conditioning,
                  "condition on the recorded final outcomes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorCategory::config);
    }

    try {
        RunConfig rc = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (workers_flag) rc.workers = *workers_flag;
        const std::uint64_t seed = resolve_seed(seed_flag, rc);
        sim_flags.apply(rc.sim);
        train_flags.apply(rc.train);
        rc.sim.seed = seed;
        rc.train.seed = seed;

        if (*sim) {
            cmd_simulate({rc, sim_out, n_traces, seed});
        } else if (*filt) {
            filter_args.workers = rc.workers;
            cmd_filter(filter_args);
        } else if (*tr) {
            train_args.direction = parse_direction(direction);
            train_args.train = rc.train;
            cmd_train(train_args);
        } else if (*pred) {
            predict_args.workers = rc.workers;
            cmd_predict(predict_args);
        } else if (*smo) {
            cmd_smooth(smooth_args);
        } else if (*val) {
            cmd_validate(validate_args);
        } else if (*est) {
            estimate_args.column = parse_column(column);
            cmd_estimate(estimate_args);
        } else if (*tom) {
            tomo_args.seed = seed;
            tomo_args.workers = rc.workers;
            cmd_tomography(tomo_args);
        }
    } catch (const Error &e) {
        std::cerr << "qtraj: " << category_name(e.category()) << " error: " << e.what() << '\n';
        return static_cast<int>(e.category());
    } catch (const std::exception &e) {
        std::cerr << "qtraj: numeric error: " << e.what() << '\n';
        return static_cast<int>(ErrorCategory::numeric);
    }
    return 0;
}
