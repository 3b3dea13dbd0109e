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

// Subcommand implementations behind the qtraj tool. Each command validates
// its paths before doing work and writes `<out>.manifest.json` next to its
// primary output.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "qtraj/nn.hpp"
#include "qtraj/sim.hpp"

namespace qtraj {

struct RunConfig {
    SimConfig sim;
    TrainConfig train;
    std::optional<std::uint64_t> seed;
    unsigned workers = 0;

    nlohmann::json to_json() const;
    /// Keys: "sim", "train", "seed", "workers". Anything else is rejected.
    static RunConfig from_json(const nlohmann::json &j);
    static RunConfig load(const std::filesystem::path &path);
};

/// Flag value if given, else the config file's seed, else $QTRAJ_SEED, else 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig &cfg);

std::filesystem::path manifest_path(const std::filesystem::path &output);

struct SimulateArgs {
    RunConfig config;
    std::filesystem::path out;
    std::size_t n_traces = 0;
    std::uint64_t seed = 0;
};
void cmd_simulate(const SimulateArgs &args);

struct FilterArgs {
    std::filesystem::path data;
    std::filesystem::path out;
    unsigned workers = 0;
};
void cmd_filter(const FilterArgs &args);

struct TrainArgs {
    std::filesystem::path data;
    Direction direction = Direction::forward;
    std::filesystem::path model_out;
    TrainConfig train;
    double eval_fraction = 0.2;
    bool quiet = false;
};
/// Also writes `<model_out>.history.csv`.
void cmd_train(const TrainArgs &args);

struct PredictArgs {
    std::filesystem::path model;
    std::filesystem::path data;
    std::filesystem::path out;
    bool unknown_conditioning = false;
    unsigned workers = 0;
};
void cmd_predict(const PredictArgs &args);

struct SmoothArgs {
    std::filesystem::path forward_csv;
    std::filesystem::path backward_csv;
    std::filesystem::path out;
};
void cmd_smooth(const SmoothArgs &args);

enum class Column : std::uint8_t { forward, backward, smoothed };
std::string to_string(Column c);
Column parse_column(std::string_view s);

struct ValidateArgs {
    std::filesystem::path predictions;
    std::filesystem::path data;
    std::filesystem::path out;  // JSON; bins go to `<out>.bins.csv`
    double delta = 0.01;
};
void cmd_validate(const ValidateArgs &args);

struct EstimateArgs {
    std::filesystem::path predictions;
    std::filesystem::path out;  // JSON; maps go to `<out>.drift.csv` and `<out>.diffusion.csv`
    Column column = Column::forward;
    int grid = 20;
    std::size_t min_count = 50;
};
void cmd_estimate(const EstimateArgs &args);

struct TomographyArgs {
    std::filesystem::path model;
    std::filesystem::path data;
    std::filesystem::path out;
    std::size_t resamples = 1000;
    bool measured_conditioning = false;
    std::uint64_t seed = 0;
    unsigned workers = 0;
};
void cmd_tomography(const TomographyArgs &args);

}  // namespace qtraj
