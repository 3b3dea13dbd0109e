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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "qtraj/analysis.hpp"
#include "qtraj/error.hpp"
#include "qtraj/sim.hpp"

using namespace qtraj;
using doctest::Approx;

namespace {

PredictionSeries series_of(const std::vector<DensityMatrix> &states, double dt) {
    PredictionSeries s;
    s.dt = dt;
    for (const auto &rho : states) {
        s.probs.push_back({born_probability(rho, Axis::X), born_probability(rho, Axis::Y), born_probability(rho, Axis::Z)});
    }
    return s;
}

// Deterministic Lindblad trajectories started uniformly inside the (y, z) disk.
std::vector<PredictionSeries> lindblad_ensemble(const SimConfig &c, std::size_t n, std::size_t steps) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<PredictionSeries> out;
    while (out.size() < n) {
        const double y = u(rng), z = u(rng);
        if (y * y + z * z > 1.0) continue;
        DensityMatrix rho = rho_from_bloch({0.0, y, z});
        std::vector<DensityMatrix> states{rho};
        for (std::size_t t = 0; t < steps; ++t) {
            for (int k = 0; k < c.substeps; ++k) rho = lindblad_step(rho, c.substep_dt(), c);
            states.push_back(rho);
        }
        out.push_back(series_of(states, c.record_dt));
    }
    return out;
}

std::vector<PredictionSeries> sme_ensemble(const SimConfig &c, std::size_t n,
                                           const std::vector<Label> &preps = {Label{1, Axis::Y}, Label{0, Axis::Y},
                                                                             Label{1, Axis::Z}, Label{0, Axis::Z}}) {
    std::vector<PredictionSeries> out;
    for (std::size_t i = 0; i < n; ++i) {
        Engine rng = make_engine(c.seed, Stream::shots, i);
        const auto shot = generate_shot(preps[i % preps.size()], Axis::Z, 4.0, c, rng, true);
        out.push_back(series_of(shot.true_rho_series, c.record_dt));
    }
    return out;
}

Eigen::Matrix2d generator(const SimConfig &c) {
    Eigen::Matrix2d a;
    a << -c.meas_rate, -c.rabi_freq, c.rabi_freq, 0.0;
    return a;
}

}  // namespace

TEST_CASE("calibration of a calibrated predictor") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 100000;
    std::vector<double> p(n);
    std::vector<std::uint8_t> y(n);
    std::vector<Axis> ax(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = u(rng);
        y[i] = u(rng) < p[i] ? 1 : 0;
        ax[i] = kAxes[i % 3];
    }
    const auto rep = calibrate(p, y, ax);
    REQUIRE(rep.axes.size() == 3);
    for (const auto &a : rep.axes) {
        CHECK(a.epsilon < 5e-3);
        CHECK(a.epsilon >= 0.0);
        CHECK(a.bins.size() == 50);
        std::size_t total = 0;
        for (const auto &b : a.bins) total += b.count;
        CHECK(total == a.total);
        CHECK(a.bins.front().center - a.bins.front().half_width == Approx(0.0));
        CHECK(a.bins.back().center + a.bins.back().half_width == Approx(1.0));
    }

    // Order invariance.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> p2(n);
    std::vector<std::uint8_t> y2(n);
    std::vector<Axis> ax2(n);
    for (std::size_t i = 0; i < n; ++i) {
        p2[i] = p[order[i]];
        y2[i] = y[order[i]];
        ax2[i] = ax[order[i]];
    }
    const auto rep2 = calibrate(p2, y2, ax2);
    for (int a = 0; a < 3; ++a) CHECK(rep2.axes[a].epsilon == Approx(rep.axes[a].epsilon).epsilon(1e-12));

    // A biased predictor is penalized.
    for (auto &v : p) v = std::min(1.0, v + 0.1);
    CHECK(calibrate(p, y, ax).axes[0].epsilon > 5e-3);
}

TEST_CASE("calibration edge cases") {
    const std::vector<double> p(1000, 0.5);
    std::vector<std::uint8_t> y(1000);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 2;
    const std::vector<Axis> ax(1000, Axis::Z);
    const auto rep = calibrate(p, y, ax);
    REQUIRE(rep.axes.size() == 1);
    // 0.5 sits on a bin edge and is scored against the centre 0.51.
    CHECK(rep.find(Axis::Z)->epsilon <= 1e-4 + 1e-12);
    CHECK(rep.find(Axis::X) == nullptr);
    CHECK_THROWS_AS(calibrate({}, {}, {}), Error);

    // p = 0.85 lands in the bin [0.84, 0.86].
    const std::vector<double> one{0.85};
    const std::vector<std::uint8_t> hit{1};
    const std::vector<Axis> z{Axis::Z};
    const auto r = calibrate(one, hit, z);
    for (const auto &b : r.axes[0].bins) {
        if (b.count) CHECK(b.center == Approx(0.85));
    }
}

TEST_CASE("drift of deterministic ensembles matches the finite-step field") {
    SimConfig c;
    const auto ens = lindblad_ensemble(c, 6000, 10);
    const auto map = drift_map(ens);
    const Eigen::Matrix2d step = (generator(c) * c.record_dt).exp();
    int checked = 0;
    for (const auto &cell : map.cells) {
        if (cell.empty) continue;
        const Eigen::Vector2d s(cell.mean_y, cell.mean_z);
        const Eigen::Vector2d expect = (step - Eigen::Matrix2d::Identity()) * s / c.record_dt;
        CHECK((cell.drift - expect).cwiseAbs().maxCoeff() < 1e-3);
        ++checked;
    }
    CHECK(checked > 100);

    const auto p = fit_params(map, map);
    CHECK(p.rabi_freq == Approx(c.rabi_freq).epsilon(1e-6));
    CHECK(p.dephasing_rate == Approx(c.meas_rate).epsilon(1e-6));
}

TEST_CASE("pure Rabi field circulates about X") {
    SimConfig c;
    c.meas_rate = 0.0;
    const auto map = drift_map(lindblad_ensemble(c, 4000, 10));
    for (const auto &cell : map.cells) {
        if (cell.empty) continue;
        const Eigen::Vector2d s(cell.mean_y, cell.mean_z);
        if (s.norm() < 0.2) continue;
        CHECK(std::abs(s.dot(cell.drift)) / (s.norm() * cell.drift.norm()) < 0.15);
        CHECK(cell.drift(0) * -s(1) + cell.drift(1) * s(0) > 0.0);  // counter-clockwise in (y, z)
        CHECK(cell.eigenvalues(1) < 1e-4);
    }
}

TEST_CASE("dephasing field points to the z axis") {
    SimConfig c;
    c.rabi_freq = 0.0;
    c.seed = 4;
    const auto map = drift_map(sme_ensemble(c, 4000, {Label{1, Axis::Y}, Label{0, Axis::Y}}));
    double sy = 0.0, sz = 0.0, n = 0.0;
    for (const auto &cell : map.cells) {
        if (cell.empty || cell.count < 200 || std::abs(cell.mean_y) < 0.2) continue;
        const double rate = (std::exp(-c.meas_rate * c.record_dt) - 1.0) / c.record_dt;
        sy += cell.drift(0) / (rate * cell.mean_y);
        sz += cell.drift(1);
        n += 1.0;
    }
    REQUIRE(n > 5);
    CHECK(sy / n == Approx(1.0).epsilon(0.05));
    CHECK(std::abs(sz / n) < 0.1);
}

TEST_CASE("diffusion of SME ensembles") {
    SimConfig c;
    c.seed = 9;
    const auto map = diffusion_map(sme_ensemble(c, 3000));
    const double gm = c.meas_rate * c.efficiency;
    int equator = 0;
    for (const auto &cell : map.cells) {
        if (cell.empty) continue;
        CHECK(cell.eigenvalues(0) >= 0.0);
        if (cell.count < 300 || std::abs(cell.center_z) > 0.1 || std::abs(cell.center_y) > 0.3) continue;
        ++equator;
        CHECK(cell.eigenvalues(1) == Approx(2.0 * gm * c.record_dt).epsilon(0.15));
        const double angle = std::acos(std::abs(cell.eigenvectors(1, 1))) * 180.0 / std::numbers::pi;
        CHECK(angle < 10.0);
    }
    CHECK(equator > 0);
    for (const auto &cell : map.cells) {
        if (!cell.empty && std::abs(cell.mean_z) > 0.97 && std::abs(cell.mean_y) < 0.1) {
            CHECK(cell.eigenvalues(1) < 0.2 * 2.0 * gm * c.record_dt);
        }
    }
}

TEST_CASE("sparse cells are flagged") {
    SimConfig c;
    const auto map = drift_map(lindblad_ensemble(c, 20, 3));
    for (const auto &cell : map.cells) {
        if (cell.count < 50) CHECK(cell.empty);
    }
    CHECK(map.valid_cells() == 0);
    CHECK_THROWS_AS(fit_params(map, map), Error);
}

TEST_CASE("fit recovers parameters from an exact model field") {
    SimConfig c;
    c.efficiency = 0.40 / 1.1;
    const double dt = c.record_dt;
    const Eigen::Matrix2d step = (generator(c) * dt).exp();
    VectorFieldMap map;
    map.dt = dt;
    map.cells.resize(static_cast<std::size_t>(map.grid * map.grid));
    for (int iy = 0; iy < map.grid; ++iy) {
        for (int iz = 0; iz < map.grid; ++iz) {
            FieldCell &cell = map.cells[static_cast<std::size_t>(iy * map.grid + iz)];
            cell.center_y = -0.95 + 0.1 * iy;
            cell.center_z = -0.95 + 0.1 * iz;
            cell.mean_y = cell.center_y + 0.01;
            cell.mean_z = cell.center_z - 0.02;
            cell.count = 100 + static_cast<std::size_t>(iy * 7 + iz);
            cell.empty = false;
            const Eigen::Vector2d s(cell.mean_y, cell.mean_z);
            cell.drift = (step - Eigen::Matrix2d::Identity()) * s / dt;
            const double a = 1.0 - s(1) * s(1);
            cell.eigenvalues << 0.0, 2.0 * c.meas_rate * c.efficiency * dt * (a * a + s(0) * s(0) * s(1) * s(1));
        }
    }
    const auto p = fit_params(map, map);
    CHECK(std::abs(p.rabi_freq - c.rabi_freq) < 1e-10);
    CHECK(std::abs(p.dephasing_rate - c.meas_rate) < 1e-10);
    CHECK(std::abs(p.meas_rate - 0.40) < 1e-10);
    CHECK(p.efficiency == Approx(0.3636).epsilon(1e-3));
    CHECK(p.rabi_freq_se < 1e-9);
    CHECK(p.to_json().at("efficiency").at("value").get<double>() == Approx(p.efficiency));
}

TEST_CASE("tomography") {
    const BlochVector v{0.3, -0.5, 0.6};
    const DensityMatrix rho = rho_from_bloch(v);
    const std::array<double, 3> born{born_probability(rho, Axis::X), born_probability(rho, Axis::Y),
                                     born_probability(rho, Axis::Z)};
    const std::vector<std::array<double, 3>> exact(200, born);
    const auto t = tomography(exact);
    CHECK(std::abs(t.bloch.x - v.x) < 1e-12);
    CHECK(std::abs(t.bloch.y - v.y) < 1e-12);
    CHECK(std::abs(t.bloch.z - v.z) < 1e-12);

    const std::vector<std::array<double, 3>> half(150, {0.5, 0.5, 0.5});
    CHECK(tomography(half).bloch.norm() < 1e-15);
    CHECK_THROWS_AS(tomography(std::vector<std::array<double, 3>>(99, {0.5, 0.5, 0.5})), Error);

    const std::vector<std::array<double, 3>> outside(100, {1.0, 1.0, 0.5});
    const auto o = tomography(outside);
    CHECK(o.raw_bloch.norm() == Approx(std::sqrt(2.0)));
    CHECK(o.bloch.norm() == Approx(1.0));

    CHECK(nearest_cardinal({0.1, -0.8, 0.3}) == Label{0, Axis::Y});
    CHECK(nearest_cardinal({0.9, 0.0, 0.3}) == Label{1, Axis::X});
}

TEST_CASE("bootstrap intervals") {
    const std::vector<std::array<double, 3>> same(300, {0.2, 0.5, 0.9});
    const auto flat = bootstrap_ci(same, 200, 1);
    for (int a = 0; a < 3; ++a) CHECK(flat.p0[a].hi - flat.p0[a].lo < 1e-12);
    CHECK(flat.p0[2].lo == Approx(0.9));
    CHECK_THROWS_AS(bootstrap_ci(same, 50, 1), Error);

    auto draw = [](std::size_t n, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<std::array<double, 3>> v(n);
        for (auto &x : v) {
            for (auto &p : x) p = u(rng) * u(rng);
        }
        return v;
    };
    const auto small = bootstrap_ci(draw(500, 1), 1000, 2);
    const auto large = bootstrap_ci(draw(2000, 1), 1000, 2);
    for (int a = 0; a < 3; ++a) {
        const double ratio = (small.p0[a].hi - small.p0[a].lo) / (large.p0[a].hi - large.p0[a].lo);
        CHECK(ratio == Approx(2.0).epsilon(0.2));
    }

    // Coverage: the product of two uniforms has mean 1/4.
    int covered = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        if (bootstrap_ci(draw(200, 100 + rep), 400, rep).p0[0].contains(0.25)) ++covered;
    }
    CHECK(covered >= 90);
}
