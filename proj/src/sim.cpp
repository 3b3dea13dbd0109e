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

#include "qtraj/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "qtraj/error.hpp"
#include "qtraj/parallel.hpp"

namespace qtraj {

std::vector<double> default_duration_grid(double record_dt, std::size_t count, double max_duration) {
    std::vector<double> grid;
    if (count == 0) return grid;
    const double max_steps = std::round(max_duration / record_dt);
    for (std::size_t k = 0; k < count; ++k) {
        const double frac = count == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(count - 1);
        grid.push_back(std::round(frac * max_steps) * record_dt);
    }
    return grid;
}

void SimConfig::validate() const {
    if (!std::isfinite(rabi_freq)) fail_config("rabi_freq must be finite");
    if (!(meas_rate >= 0.0) || !std::isfinite(meas_rate)) fail_config("meas_rate must be >= 0");
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) fail_config("efficiency must lie in [0, 1]");
    if (!(record_dt > 0.0) || !std::isfinite(record_dt)) fail_config("record_dt must be > 0");
    if (substeps < 1) fail_config("substeps must be >= 1");
    if (durations.empty()) fail_config("duration grid is empty");
    for (double d : durations) steps_for(d);
}

std::size_t SimConfig::steps_for(double duration) const {
    if (!(duration >= 0.0)) fail_config("durations must be non-negative");
    const double bins = duration / record_dt;
    const double rounded = std::round(bins);
    if (std::abs(bins - rounded) > 1e-6) fail_config("duration " + std::to_string(duration) + " is not a multiple of record_dt");
    if (rounded > 65535.0) fail_config("duration exceeds 65535 record bins");
    return static_cast<std::size_t>(rounded);
}

double SimConfig::signal_gain() const { return 2.0 * std::sqrt(efficiency) * std::sqrt(meas_rate / 2.0); }

nlohmann::json SimConfig::to_json() const {
    return {{"rabi_freq", rabi_freq}, {"meas_rate", meas_rate}, {"efficiency", efficiency}, {"record_dt", record_dt},
            {"substeps", substeps},   {"durations", durations}, {"seed", seed}};
}

SimConfig SimConfig::from_json(const nlohmann::json &j) {
    if (!j.is_object()) fail_config("sim config must be a JSON object");
    static const std::set<std::string> known{"rabi_freq", "meas_rate",  "efficiency", "record_dt",
                                             "substeps",  "durations", "seed"};
    for (const auto &[key, _] : j.items()) {
        if (!known.count(key)) fail_config("unknown sim config key '" + key + "'");
    }
    SimConfig cfg;
    try {
        cfg.rabi_freq = j.value("rabi_freq", cfg.rabi_freq);
        cfg.meas_rate = j.value("meas_rate", cfg.meas_rate);
        cfg.efficiency = j.value("efficiency", cfg.efficiency);
        cfg.record_dt = j.value("record_dt", cfg.record_dt);
        cfg.substeps = j.value("substeps", cfg.substeps);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("durations")) {
            cfg.durations = j.at("durations").get<std::vector<double>>();
        } else if (j.contains("record_dt")) {
            cfg.durations = default_duration_grid(cfg.record_dt);
        }
    } catch (const nlohmann::json::exception &e) {
        fail_config(std::string("bad sim config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

double z_of(const Matrix2 &m) { return (m(0, 0) - m(1, 1)).real(); }

Matrix2 rabi_propagator(double rabi_freq, double dt) {
    const double half = 0.5 * rabi_freq * dt;
    Matrix2 u;
    u << Complex(std::cos(half), 0.0), Complex(0.0, -std::sin(half)), Complex(0.0, -std::sin(half)),
        Complex(std::cos(half), 0.0);
    return u;
}

Matrix2 sigma_z_sandwich(const Matrix2 &m) {
    Matrix2 out = m;
    out(0, 1) = -m(0, 1);
    out(1, 0) = -m(1, 0);
    return out;
}

// Unnormalized one-substep map driven by the measured increment dy.
struct SubstepMap {
    double k_plus;
    double k_minus;
    double unmonitored;  // (1 - eta) dt gamma / 2
    Matrix2 u;

    SubstepMap(double dy, double dt, const SimConfig &cfg) {
        const double base = 1.0 - 0.25 * cfg.meas_rate * dt;
        const double kick = std::sqrt(cfg.efficiency * cfg.meas_rate / 2.0) * dy;
        k_plus = base + kick;
        k_minus = base - kick;
        unmonitored = (1.0 - cfg.efficiency) * dt * 0.5 * cfg.meas_rate;
        u = rabi_propagator(cfg.rabi_freq, 0.5 * dt);
    }

    Matrix2 apply_k(const Matrix2 &m) const {
        Matrix2 out;
        out(0, 0) = k_plus * k_plus * m(0, 0);
        out(0, 1) = k_plus * k_minus * m(0, 1);
        out(1, 0) = k_minus * k_plus * m(1, 0);
        out(1, 1) = k_minus * k_minus * m(1, 1);
        return out;
    }

    // half rotation on each side of the measurement map (symmetric split)
    Matrix2 forward(const Matrix2 &rho) const {
        const Matrix2 pre = u * rho * u.adjoint();
        const Matrix2 inner = apply_k(pre) + unmonitored * sigma_z_sandwich(pre);
        return u * inner * u.adjoint();
    }

    Matrix2 adjoint(const Matrix2 &effect) const {
        const Matrix2 rotated = u.adjoint() * effect * u;
        const Matrix2 inner = apply_k(rotated) + unmonitored * sigma_z_sandwich(rotated);
        return u.adjoint() * inner * u;
    }
};

// z seen by the measurement: the map acts after the first half rotation
double measured_z(const Matrix2 &rho, double dt, const SimConfig &cfg) {
    const Matrix2 u = rabi_propagator(cfg.rabi_freq, 0.5 * dt);
    return z_of(u * rho * u.adjoint());
}

Matrix2 lindblad_generator(const Matrix2 &rho, const SimConfig &cfg) {
    const Matrix2 h = 0.5 * cfg.rabi_freq * pauli(Axis::X);
    const Complex minus_i(0.0, -1.0);
    return minus_i * (h * rho - rho * h) + 0.5 * cfg.meas_rate * (sigma_z_sandwich(rho) - rho);
}

SimulatedShot run_shot(const Label &prep, Axis meas_axis, std::size_t steps, const SimConfig &cfg, Engine &rng,
                       bool keep_states) {
    SimulatedShot shot;
    shot.prep = prep;
    shot.record.resize(steps);
    DensityMatrix rho = cardinal_state(prep);
    if (keep_states) {
        shot.true_rho_series.reserve(steps + 1);
        shot.true_rho_series.push_back(rho);
    }
    const double dts = cfg.substep_dt();
    const double gain = cfg.signal_gain();
    std::normal_distribution<double> noise(0.0, std::sqrt(dts));
    for (std::size_t k = 0; k < steps; ++k) {
        double integrated = 0.0;
        for (int j = 0; j < cfg.substeps; ++j) {
            const double dW = noise(rng);
            integrated += gain * measured_z(rho.matrix(), dts, cfg) * dts + dW;
            rho = sme_step(rho, dW, dts, cfg);
        }
        shot.record[k] = static_cast<float>(integrated / cfg.record_dt);
        if (keep_states) shot.true_rho_series.push_back(rho);
    }
    std::bernoulli_distribution outcome(born_probability(rho, meas_axis));
    shot.meas = Label{static_cast<std::uint8_t>(outcome(rng) ? 1 : 0), meas_axis};
    return shot;
}

}  // namespace

DensityMatrix sme_step(const DensityMatrix &rho, double dW, double dt, const SimConfig &cfg) {
    if (!(dt > 0.0)) fail_numeric("sme_step requires dt > 0");
    const double dy = dW + cfg.signal_gain() * measured_z(rho.matrix(), dt, cfg) * dt;
    return DensityMatrix::project(SubstepMap(dy, dt, cfg).forward(rho.matrix()));
}

DensityMatrix lindblad_step(const DensityMatrix &rho, double dt, const SimConfig &cfg) {
    const Matrix2 &r0 = rho.matrix();
    const Matrix2 k1 = lindblad_generator(r0, cfg);
    const Matrix2 k2 = lindblad_generator(r0 + 0.5 * dt * k1, cfg);
    const Matrix2 k3 = lindblad_generator(r0 + 0.5 * dt * k2, cfg);
    const Matrix2 k4 = lindblad_generator(r0 + dt * k3, cfg);
    return DensityMatrix::project(r0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

SimulatedShot generate_shot(const Label &prep, Axis meas_axis, double duration, const SimConfig &cfg, Engine &rng,
                            bool keep_states) {
    return run_shot(prep, meas_axis, cfg.steps_for(duration), cfg, rng, keep_states);
}

std::size_t sweep_size(const SimConfig &cfg) { return 6 * 3 * cfg.durations.size(); }

Setting setting_for_index(const SimConfig &cfg, std::uint64_t index) {
    const std::uint64_t s = index % sweep_size(cfg);
    Setting out;
    out.prep = Label::from_index(static_cast<int>(s % 6));
    out.meas_axis = axis_from_index(static_cast<int>((s / 6) % 3));
    out.duration_index = static_cast<std::size_t>(s / 18);
    return out;
}

SimulatedShot simulate_indexed_shot(const SimConfig &cfg, std::uint64_t index, bool keep_states) {
    const Setting s = setting_for_index(cfg, index);
    Engine rng = make_engine(cfg.seed, Stream::shots, index);
    return generate_shot(s.prep, s.meas_axis, cfg.durations[s.duration_index], cfg, rng, keep_states);
}

std::vector<SimulatedShot> generate_dataset(const SimConfig &cfg, std::size_t n_traces, unsigned workers,
                                            std::uint64_t first_index) {
    cfg.validate();
    std::vector<SimulatedShot> shots(n_traces);
    parallel_for(n_traces, workers, [&](std::size_t i) { shots[i] = simulate_indexed_shot(cfg, first_index + i); });
    return shots;
}

std::vector<SimulatedShot> generate_prepared(const SimConfig &cfg, const Label &prep, std::size_t n_traces,
                                             unsigned workers) {
    cfg.validate();
    std::vector<SimulatedShot> shots(n_traces);
    const std::uint64_t salt = (static_cast<std::uint64_t>(prep.index()) + 1) << 40;
    parallel_for(n_traces, workers, [&](std::size_t i) {
        const Axis meas_axis = axis_from_index(static_cast<int>(i % 3));
        const double duration = cfg.durations[(i / 3) % cfg.durations.size()];
        Engine rng = make_engine(cfg.seed, Stream::shots, salt + i);
        shots[i] = generate_shot(prep, meas_axis, duration, cfg, rng);
    });
    return shots;
}

std::vector<DensityMatrix> filter_states(const MeasurementRecord &record, const Label &prep, const SimConfig &cfg) {
    std::vector<DensityMatrix> states;
    states.reserve(record.size() + 1);
    DensityMatrix rho = cardinal_state(prep);
    states.push_back(rho);
    const double dts = cfg.substep_dt();
    const double gain = cfg.signal_gain();
    for (float v : record) {
        for (int j = 0; j < cfg.substeps; ++j) {
            // Innovation recovered from the record: dw = (V - 2 sqrt(eta) Tr[rho c]) dt.
            const double dW = (static_cast<double>(v) - gain * measured_z(rho.matrix(), dts, cfg)) * dts;
            rho = sme_step(rho, dW, dts, cfg);
        }
        states.push_back(rho);
    }
    return states;
}

PredictionSeries sme_filter(const MeasurementRecord &record, const Label &prep, const SimConfig &cfg) {
    PredictionSeries out;
    out.dt = cfg.record_dt;
    for (const auto &rho : filter_states(record, prep, cfg)) {
        out.probs.push_back({born_probability(rho, Axis::X), born_probability(rho, Axis::Y), born_probability(rho, Axis::Z)});
    }
    return out;
}

PredictionSeries sme_retrofilter(const MeasurementRecord &record, const std::optional<Label> &final_outcome,
                                 const SimConfig &cfg) {
    Matrix2 effect = Matrix2::Identity();
    if (final_outcome) effect = cardinal_state(*final_outcome).matrix();

    const std::size_t n = record.size();
    PredictionSeries out;
    out.dt = cfg.record_dt;
    out.probs.resize(n + 1);
    auto emit = [&](std::size_t t) {
        const double tr = effect.trace().real();
        if (!(tr > 0.0) || !std::isfinite(tr)) fail_numeric("retrodiction effect lost positivity");
        for (Axis a : kAxes) {
            const double c = (effect * pauli(a)).trace().real() / tr;
            out.probs[t][axis_index(a)] = std::clamp(0.5 * (1.0 + c), 0.0, 1.0);
        }
    };
    emit(n);
    const double dts = cfg.substep_dt();
    for (std::size_t k = n; k-- > 0;) {
        const SubstepMap map(static_cast<double>(record[k]) * dts, dts, cfg);
        for (int j = 0; j < cfg.substeps; ++j) {
            effect = map.adjoint(effect);
            effect /= effect.trace().real();
        }
        emit(k);
    }
    return out;
}

}  // namespace qtraj
