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

// Synthetic continuously monitored qubit: Rabi drive about X, weak
// measurement of sigma_Z with strength gamma and efficiency eta.

#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include <json.hpp>

#include "qtraj/core.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

/// Durations 0..max_duration in `count` values, each rounded to a whole
/// number of record bins.
std::vector<double> default_duration_grid(double record_dt = 0.040, std::size_t count = 20, double max_duration = 4.0);

struct SimConfig {
    double rabi_freq = 2.0 * std::numbers::pi * 0.82;  // rad/us
    double meas_rate = 1.1;                             // gamma, 1/us
    double efficiency = 0.36;                           // eta
    double record_dt = 0.040;                           // us
    int substeps = 10;
    std::vector<double> durations = default_duration_grid();
    std::uint64_t seed = 0;

    void validate() const;
    double substep_dt() const { return record_dt / substeps; }
    std::size_t steps_for(double duration) const;
    /// Amplitude of the record signal per unit z: 2 sqrt(eta) sqrt(gamma/2).
    double signal_gain() const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static SimConfig from_json(const nlohmann::json &j);
};

using MeasurementRecord = std::vector<float>;

struct SimulatedShot {
    Label prep;
    Label meas;
    MeasurementRecord record;
    /// States at each bin boundary (record.size() + 1 entries); only filled on request.
    std::vector<DensityMatrix> true_rho_series;
};

/// One update of the stochastic master equation driven by the innovation dW.
///
/// Uses the measurement-operator form rho -> U (K rho K^dag + (1-eta) dt c rho c^dag) U^dag
/// with c = sqrt(gamma/2) sigma_Z, K = 1 - c^dag c dt / 2 + sqrt(eta) c dy,
/// dy = dW + sqrt(eta) <c + c^dag> dt and U the exact Rabi propagator,
/// followed by trace renormalization. To first order in dt this is the
/// Euler-Maruyama step of the SME; unlike the raw Euler step it keeps the
/// state inside the Bloch ball and keeps pure states pure at eta = 1.
DensityMatrix sme_step(const DensityMatrix &rho, double dW, double dt, const SimConfig &cfg);

/// Deterministic (ensemble-averaged) dynamics; classical RK4 on the Lindblad generator.
DensityMatrix lindblad_step(const DensityMatrix &rho, double dt, const SimConfig &cfg);

SimulatedShot generate_shot(const Label &prep, Axis meas_axis, double duration, const SimConfig &cfg, Engine &rng,
                            bool keep_states = false);

/// A (preparation, measurement axis, duration) cell of the balanced sweep.
struct Setting {
    Label prep;
    Axis meas_axis = Axis::Z;
    std::size_t duration_index = 0;
};

std::size_t sweep_size(const SimConfig &cfg);
Setting setting_for_index(const SimConfig &cfg, std::uint64_t index);

/// Shot `index` of the balanced sweep; a pure function of (cfg, index).
SimulatedShot simulate_indexed_shot(const SimConfig &cfg, std::uint64_t index, bool keep_states = false);

/// Shots first_index .. first_index + n - 1 of the balanced sweep.
std::vector<SimulatedShot> generate_dataset(const SimConfig &cfg, std::size_t n_traces, unsigned workers = 1,
                                            std::uint64_t first_index = 0);

/// Fixed preparation, measurement axis and duration cycled; used for tomography ensembles.
std::vector<SimulatedShot> generate_prepared(const SimConfig &cfg, const Label &prep, std::size_t n_traces,
                                             unsigned workers = 1);

/// Oracle filter states at every bin boundary (record.size() + 1 entries).
std::vector<DensityMatrix> filter_states(const MeasurementRecord &record, const Label &prep, const SimConfig &cfg);

/// Oracle forward prediction: Born probabilities of the filtered state.
PredictionSeries sme_filter(const MeasurementRecord &record, const Label &prep, const SimConfig &cfg);

/// Oracle retrodiction: propagates the measurement effect backwards from the
/// final outcome (or from the identity when it is unknown) and returns
/// P(y_0 = 1 | a, record after t, final) for a = X, Y, Z with a uniform prior on y_0.
PredictionSeries sme_retrofilter(const MeasurementRecord &record, const std::optional<Label> &final_outcome,
                                 const SimConfig &cfg);

}  // namespace qtraj
