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

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <tuple>

#include "qtraj/error.hpp"
#include "qtraj/sim.hpp"

using namespace qtraj;
using doctest::Approx;

namespace {

// Ito Bloch equations of the monitored qubit, integrated by plain Euler-Maruyama.
BlochVector bloch_euler(BlochVector v, double dW, double dt, const SimConfig &c) {
    const double k = std::sqrt(2.0 * c.meas_rate * c.efficiency);
    const double g = c.meas_rate;
    BlochVector n;
    n.x = v.x - g * v.x * dt - k * v.x * v.z * dW;
    n.y = v.y + (-c.rabi_freq * v.z - g * v.y) * dt - k * v.y * v.z * dW;
    n.z = v.z + c.rabi_freq * v.y * dt + k * (1.0 - v.z * v.z) * dW;
    return n;
}

}  // namespace

TEST_CASE("config validation") {
    SimConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.durations.size() == 20);
    CHECK(c.durations.front() == 0.0);
    CHECK(c.durations.back() == Approx(4.0));
    for (double d : c.durations) CHECK_NOTHROW(c.steps_for(d));
    CHECK(c.steps_for(4.0) == 100);
    CHECK(c.signal_gain() == Approx(std::sqrt(2.0 * 1.1 * 0.36)));

    SimConfig bad = c;
    bad.meas_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.efficiency = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK_THROWS_AS(c.steps_for(0.05), Error);

    const auto j = c.to_json();
    const SimConfig back = SimConfig::from_json(j);
    CHECK(back.to_json() == j);
    auto extra = j;
    extra["bogus"] = 1;
    CHECK_THROWS_AS(SimConfig::from_json(extra), Error);
}

TEST_CASE("sme step without measurement is a Rabi rotation") {
    SimConfig c;
    c.meas_rate = 0.0;
    const double dt = 0.004;
    const auto rho = sme_step(cardinal_state({1, Axis::Z}), 0.37, dt, c);
    const auto b = bloch_from_rho(rho);
    CHECK(b.z == Approx(std::cos(c.rabi_freq * dt)).epsilon(1e-12));
    CHECK(b.y == Approx(-std::sin(c.rabi_freq * dt)).epsilon(1e-12));
}

TEST_CASE("backaction leaves the poles fixed") {
    SimConfig c;
    c.rabi_freq = 0.0;
    for (double dW : {-0.3, 0.0, 0.2}) {
        CHECK(bloch_from_rho(sme_step(cardinal_state({1, Axis::Z}), dW, 0.004, c)).z == Approx(1.0).epsilon(1e-12));
        CHECK(bloch_from_rho(sme_step(cardinal_state({0, Axis::Z}), dW, 0.004, c)).z == Approx(-1.0).epsilon(1e-12));
    }
}

TEST_CASE("perfect efficiency preserves purity") {
    SimConfig c;
    c.efficiency = 1.0;
    std::mt19937_64 rng(3);
    const double dt = 1e-3;
    std::normal_distribution<double> w(0.0, std::sqrt(dt));
    DensityMatrix rho = cardinal_state({1, Axis::X});
    for (int i = 0; i < 1000; ++i) rho = sme_step(rho, w(rng), dt, c);
    CHECK(purity(rho) == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sme step tracks the Ito Bloch equations along a shared noise path") {
    SimConfig c;
    const double T = 0.5;
    for (const Label &prep : all_labels()) {
        std::mt19937_64 rng(17 + static_cast<unsigned>(prep.index()));
        const int n = 50000;
        const double dt = T / n;
        std::normal_distribution<double> w(0.0, std::sqrt(dt));
        DensityMatrix rho = cardinal_state(prep);
        BlochVector v = bloch_from_rho(rho);
        for (int i = 0; i < n; ++i) {
            const double dW = w(rng);
            rho = sme_step(rho, dW, dt, c);
            v = bloch_euler(v, dW, dt, c);
        }
        const auto b = bloch_from_rho(rho);
        CHECK(std::abs(b.x - v.x) < 5e-3);
        CHECK(std::abs(b.y - v.y) < 5e-3);
        CHECK(std::abs(b.z - v.z) < 5e-3);
    }
}

TEST_CASE("lindblad step") {
    SimConfig c;
    c.rabi_freq = 0.0;
    DensityMatrix rho = cardinal_state({1, Axis::X});
    const double dt = 0.004;
    for (int i = 1; i <= 500; ++i) {
        rho = lindblad_step(rho, dt, c);
        if (i % 100 == 0) CHECK(bloch_from_rho(rho).x == Approx(std::exp(-c.meas_rate * i * dt)).epsilon(1e-9));
    }

    SimConfig r;
    const auto mixed = lindblad_step(DensityMatrix(), dt, r);
    CHECK(bloch_from_rho(mixed).norm() < 1e-15);
}

TEST_CASE("noiseless simulation follows cos(Omega t)") {
    SimConfig c;
    c.meas_rate = 0.0;
    Engine rng(5);
    const auto shot = generate_shot({1, Axis::Z}, Axis::Z, 4.0, c, rng, true);
    REQUIRE(shot.true_rho_series.size() == 101);
    for (std::size_t t = 0; t < shot.true_rho_series.size(); ++t) {
        CHECK(std::abs(bloch_from_rho(shot.true_rho_series[t]).z - std::cos(c.rabi_freq * c.record_dt * t)) < 1e-9);
    }
    // The record is pure white noise with variance 1/dt.
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (int k = 0; k < 200; ++k) {
        for (float v : generate_shot({1, Axis::Z}, Axis::Z, 4.0, c, rng).record) {
            s += v;
            s2 += double(v) * v;
            ++n;
        }
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(1.0 / c.record_dt / n));
    CHECK(s2 / n - mean * mean == Approx(1.0 / c.record_dt).epsilon(0.03));
}

TEST_CASE("zero duration") {
    SimConfig c;
    Engine rng(1);
    const auto shot = generate_shot({1, Axis::Z}, Axis::Z, 0.0, c, rng);
    CHECK(shot.record.empty());
    CHECK(shot.meas.bit == 1);
    const auto minus = generate_shot({0, Axis::X}, Axis::X, 0.0, c, rng);
    CHECK(minus.meas.bit == 0);
}

TEST_CASE("mean record follows the ensemble z") {
    SimConfig c;
    const int shots = 10000;
    const std::size_t steps = 50;
    std::vector<double> s(steps), s2(steps);
    for (int k = 0; k < shots; ++k) {
        Engine rng = make_engine(9, Stream::shots, static_cast<std::uint64_t>(k));
        const auto shot = generate_shot({1, Axis::Z}, Axis::Z, 2.0, c, rng);
        for (std::size_t t = 0; t < steps; ++t) {
            s[t] += shot.record[t];
            s2[t] += double(shot.record[t]) * shot.record[t];
        }
    }
    // Deterministic reference: bin-averaged z of the Lindblad solution.
    DensityMatrix rho = cardinal_state({1, Axis::Z});
    int outside = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        double zbar = 0.0;
        for (int j = 0; j < c.substeps; ++j) {
            zbar += bloch_from_rho(rho).z / c.substeps;
            rho = lindblad_step(rho, c.substep_dt(), c);
        }
        const double mean = s[t] / shots;
        const double se = std::sqrt((s2[t] / shots - mean * mean) / shots);
        if (std::abs(mean - c.signal_gain() * zbar) > 4.0 * se) ++outside;
    }
    CHECK(outside <= 1);
}

TEST_CASE("setting sweep") {
    SimConfig c;
    c.seed = 42;
    CHECK(sweep_size(c) == 360);
    const auto shots = generate_dataset(c, 360);
    std::map<std::tuple<int, int, std::size_t>, int> seen;
    for (const auto &s : shots) ++seen[{s.prep.index(), axis_index(s.meas.axis), s.record.size()}];
    CHECK(seen.size() == 360);

    const auto again = generate_dataset(c, 360, 3);
    REQUIRE(again.size() == shots.size());
    bool identical = true;
    for (std::size_t i = 0; i < shots.size(); ++i) {
        identical = identical && shots[i].record == again[i].record && shots[i].meas == again[i].meas &&
                    shots[i].prep == again[i].prep;
    }
    CHECK(identical);

    SimConfig other = c;
    other.seed = 43;
    CHECK(generate_dataset(other, 360)[100].record != shots[100].record);
}

TEST_CASE("filter") {
    SimConfig c;
    c.meas_rate = 0.0;
    MeasurementRecord noise(60);
    std::mt19937 rng(1);
    std::normal_distribution<float> n(0.0f, 5.0f);
    for (auto &v : noise) v = n(rng);
    const auto p = sme_filter(noise, {1, Axis::Z}, c);
    for (std::size_t t = 0; t < p.size(); ++t) {
        CHECK(2.0 * p.at(t, Axis::Z) - 1.0 == Approx(std::cos(c.rabi_freq * p.time(t))).epsilon(1e-9));
    }

    // With one substep per bin the record holds the full noise path, so the
    // replay reproduces the simulated state up to float rounding.
    SimConfig d;
    d.substeps = 1;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        Engine e = make_engine(2, Stream::shots, static_cast<std::uint64_t>(k));
        const auto shot = generate_shot({1, Axis::X}, Axis::Z, 4.0, d, e, true);
        const auto states = filter_states(shot.record, shot.prep, d);
        for (std::size_t t = 0; t < states.size(); ++t) {
            const auto a = bloch_from_rho(states[t]);
            const auto b = bloch_from_rho(shot.true_rho_series[t]);
            worst = std::max({worst, std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("retrofilter") {
    SimConfig c;
    Engine e(4);
    const auto shot = generate_shot({1, Axis::X}, Axis::Y, 2.0, c, e);
    const auto p = sme_retrofilter(shot.record, shot.meas, c);
    CHECK(p.size() == shot.record.size() + 1);
    CHECK(p.at(p.size() - 1, Axis::Y) == Approx(shot.meas.bit ? 1.0 : 0.0));

    const auto blind = sme_retrofilter(shot.record, std::nullopt, c);
    CHECK(blind.at(blind.size() - 1, Axis::Z) == Approx(0.5));

    // Anti-causality: dropping early samples leaves later entries unchanged.
    const MeasurementRecord tail(shot.record.begin() + 10, shot.record.end());
    const auto q = sme_retrofilter(tail, shot.meas, c);
    for (std::size_t t = 0; t < q.size(); ++t) {
        for (Axis a : kAxes) CHECK(q.at(t, a) == Approx(p.at(t + 10, a)).epsilon(1e-12));
    }
}
