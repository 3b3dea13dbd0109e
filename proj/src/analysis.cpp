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

#include "qtraj/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>

#include "qtraj/error.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

// ---------------------------------------------------------------------------
// Calibration

const AxisCalibration *CalibrationReport::find(Axis a) const {
    for (const auto &c : axes) {
        if (c.axis == a) return &c;
    }
    return nullptr;
}

nlohmann::json CalibrationReport::to_json() const {
    nlohmann::json j;
    j["delta"] = delta;
    nlohmann::json per_axis = nlohmann::json::object();
    for (const auto &c : axes) {
        per_axis[std::string(1, axis_name(c.axis))] = {{"epsilon", c.epsilon}, {"records", c.total}};
    }
    j["axes"] = per_axis;
    return j;
}

void CalibrationReport::write_csv(std::ostream &out) const {
    out << "axis,p_center,half_width,mean_outcome,count\n";
    for (const auto &c : axes) {
        for (const auto &b : c.bins) {
            out << axis_name(c.axis) << ',' << b.center << ',' << b.half_width << ',' << b.mean_outcome << ','
                << b.count << '\n';
        }
    }
}

CalibrationReport calibrate(std::span<const double> predictions, std::span<const std::uint8_t> outcomes,
                            std::span<const Axis> axes, double delta) {
    if (predictions.empty()) fail_config("calibration needs at least one prediction");
    if (predictions.size() != outcomes.size() || predictions.size() != axes.size()) {
        fail_config("calibration inputs differ in length");
    }
    if (!(delta > 0.0 && delta <= 0.5)) fail_config("calibration half-width must lie in (0, 0.5]");

    const double width = 2.0 * delta;
    const auto n_bins = static_cast<std::size_t>(std::ceil(1.0 / width - 1e-9));
    std::array<std::vector<std::size_t>, 3> counts;
    std::array<std::vector<double>, 3> sums;
    for (int a = 0; a < 3; ++a) {
        counts[a].assign(n_bins, 0);
        sums[a].assign(n_bins, 0.0);
    }
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double p = std::clamp(predictions[i], 0.0, 1.0);
        const auto k = std::min(n_bins - 1, static_cast<std::size_t>(std::floor(p / width)));
        const int a = axis_index(axes[i]);
        ++counts[a][k];
        sums[a][k] += outcomes[i] ? 1.0 : 0.0;
    }

    CalibrationReport report;
    report.delta = delta;
    for (Axis axis : kAxes) {
        const int a = axis_index(axis);
        const std::size_t total = std::accumulate(counts[a].begin(), counts[a].end(), std::size_t{0});
        if (total == 0) continue;
        AxisCalibration cal;
        cal.axis = axis;
        cal.total = total;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double lo = static_cast<double>(k) * width;
            const double hi = std::min(1.0, lo + width);
            CalibrationBin bin;
            bin.center = 0.5 * (lo + hi);
            bin.half_width = 0.5 * (hi - lo);
            bin.count = counts[a][k];
            if (bin.count) {
                bin.mean_outcome = sums[a][k] / static_cast<double>(bin.count);
                const double gap = bin.mean_outcome - bin.center;
                cal.epsilon += static_cast<double>(bin.count) / static_cast<double>(total) * gap * gap;
            }
            cal.bins.push_back(bin);
        }
        report.axes.push_back(std::move(cal));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Vector field maps

std::size_t VectorFieldMap::valid_cells() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const FieldCell &c) { return !c.empty; }));
}

void VectorFieldMap::write_csv(std::ostream &out) const {
    out << "center_y,center_z,count,empty,mean_y,mean_z,drift_y,drift_z,cov_yy,cov_yz,cov_zz,"
           "eig_major,eig_minor,major_y,major_z\n";
    for (const auto &c : cells) {
        out << c.center_y << ',' << c.center_z << ',' << c.count << ',' << (c.empty ? 1 : 0) << ',' << c.mean_y << ','
            << c.mean_z << ',' << c.drift(0) << ',' << c.drift(1) << ',' << c.covariance(0, 0) << ','
            << c.covariance(0, 1) << ',' << c.covariance(1, 1) << ',' << c.eigenvalues(1) << ',' << c.eigenvalues(0)
            << ',' << c.eigenvectors(0, 1) << ',' << c.eigenvectors(1, 1) << '\n';
    }
}

VectorFieldMap build_field_map(std::span<const PredictionSeries> ensemble, const FieldOptions &opts) {
    if (opts.grid < 1) fail_config("field grid must be >= 1");
    VectorFieldMap map;
    map.grid = opts.grid;
    map.min_count = opts.min_count;
    const std::size_t n_cells = static_cast<std::size_t>(opts.grid) * static_cast<std::size_t>(opts.grid);

    struct Acc {
        std::size_t n = 0;
        Eigen::Vector2d pos = Eigen::Vector2d::Zero();
        Eigen::Vector2d disp = Eigen::Vector2d::Zero();
        Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();
    };
    std::vector<Acc> acc(n_cells);
    auto cell_of = [&](double v) {
        const int k = static_cast<int>(std::floor((v + 1.0) * 0.5 * opts.grid));
        return std::clamp(k, 0, opts.grid - 1);
    };
    for (const auto &s : ensemble) {
        if (s.size() < 2) continue;
        if (map.dt == 0.0) map.dt = s.dt;
        if (std::abs(s.dt - map.dt) > 1e-12) fail_config("ensemble mixes sampling intervals");
        for (std::size_t t = 0; t + 1 < s.size(); ++t) {
            const Eigen::Vector2d a(2.0 * s.at(t, Axis::Y) - 1.0, 2.0 * s.at(t, Axis::Z) - 1.0);
            const Eigen::Vector2d b(2.0 * s.at(t + 1, Axis::Y) - 1.0, 2.0 * s.at(t + 1, Axis::Z) - 1.0);
            const Eigen::Vector2d d = b - a;
            Acc &c = acc[static_cast<std::size_t>(cell_of(a(0)) * opts.grid + cell_of(a(1)))];
            ++c.n;
            c.pos += a;
            c.disp += d;
            c.outer += d * d.transpose();
        }
    }
    if (!(map.dt > 0.0)) map.dt = 0.0;

    map.cells.resize(n_cells);
    const double cell_w = 2.0 / opts.grid;
    for (int iy = 0; iy < opts.grid; ++iy) {
        for (int iz = 0; iz < opts.grid; ++iz) {
            const std::size_t idx = static_cast<std::size_t>(iy * opts.grid + iz);
            FieldCell &cell = map.cells[idx];
            const Acc &c = acc[idx];
            cell.center_y = -1.0 + (iy + 0.5) * cell_w;
            cell.center_z = -1.0 + (iz + 0.5) * cell_w;
            cell.count = c.n;
            cell.empty = c.n < std::max<std::size_t>(opts.min_count, 2);
            if (c.n == 0) continue;
            const double n = static_cast<double>(c.n);
            const Eigen::Vector2d mean_pos = c.pos / n;
            const Eigen::Vector2d mean_disp = c.disp / n;
            cell.mean_y = mean_pos(0);
            cell.mean_z = mean_pos(1);
            if (map.dt > 0.0) cell.drift = mean_disp / map.dt;
            if (c.n >= 2) {
                cell.covariance = (c.outer - n * mean_disp * mean_disp.transpose()) / (n - 1.0);
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cell.covariance);
                cell.eigenvalues = es.eigenvalues().cwiseMax(0.0);
                cell.eigenvectors = es.eigenvectors();
            }
        }
    }
    return map;
}

VectorFieldMap drift_map(std::span<const PredictionSeries> ensemble, const FieldOptions &opts) {
    return build_field_map(ensemble, opts);
}

VectorFieldMap diffusion_map(std::span<const PredictionSeries> ensemble, const FieldOptions &opts) {
    return build_field_map(ensemble, opts);
}

nlohmann::json PhysParams::to_json() const {
    return {{"rabi_freq", {{"value", rabi_freq}, {"se", rabi_freq_se}, {"unit", "rad/us"}}},
            {"rabi_freq_mhz", {{"value", rabi_freq / (2.0 * 3.141592653589793)}, {"se", rabi_freq_se / (2.0 * 3.141592653589793)}}},
            {"dephasing_rate", {{"value", dephasing_rate}, {"se", dephasing_rate_se}, {"unit", "1/us"}}},
            {"meas_rate", {{"value", meas_rate}, {"se", meas_rate_se}, {"unit", "1/us"}}},
            {"efficiency", {{"value", efficiency}, {"se", efficiency_se}}},
            {"cells_used", cells_used},
            {"generator", {{generator(0, 0), generator(0, 1)}, {generator(1, 0), generator(1, 1)}}}};
}

namespace {


// `skip` excludes one cell (jackknife); pass cells.size() to use all.
Eigen::Matrix2d fit_generator(const std::vector<const FieldCell *> &cells, double dt, std::size_t skip) {
    Eigen::Matrix2d ss = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d es = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i == skip) continue;
        const FieldCell &c = *cells[i];
        const Eigen::Vector2d s(c.mean_y, c.mean_z);
        const Eigen::Vector2d e = s + c.drift * dt;
        const double w = static_cast<double>(c.count);
        ss += w * s * s.transpose();
        es += w * e * s.transpose();
    }
    const Eigen::Matrix2d step = es * ss.inverse();
    const Eigen::Matrix2d gen = step.log() / dt;
    if (!gen.allFinite()) fail_numeric("drift map does not define a real one-step generator");
    return gen;
}

double diffusion_shape(double y, double z) {
    const double a = 1.0 - z * z;
    return a * a + y * y * z * z;
}

double fit_meas_rate(const std::vector<const FieldCell *> &cells, double dt, std::size_t skip) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i == skip) continue;
        const FieldCell &c = *cells[i];
        const double g = diffusion_shape(c.mean_y, c.mean_z);
        const double w = static_cast<double>(c.count);
        num += w * c.eigenvalues(1) * g;
        den += w * g * g;
    }
    if (!(den > 0.0)) fail_numeric("diffusion map carries no information");
    return num / (2.0 * dt * den);
}

std::vector<const FieldCell *> valid_cells_of(const VectorFieldMap &m) {
    std::vector<const FieldCell *> out;
    for (const auto &c : m.cells) {
        if (!c.empty) out.push_back(&c);
    }
    return out;
}

double jackknife_se(const std::vector<double> &values) {
    const double n = static_cast<double>(values.size());
    if (values.size() < 2) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt((n - 1.0) / n * ss);
}

}  // namespace

PhysParams fit_params(const VectorFieldMap &drift, const VectorFieldMap &diffusion) {
    constexpr std::size_t kMinCells = 10;
    const auto drift_cells = valid_cells_of(drift);
    const auto diff_cells = valid_cells_of(diffusion);
    if (drift_cells.size() < kMinCells || diff_cells.size() < kMinCells) {
        fail_numeric("field maps are under-populated (fewer than 10 valid cells)");
    }
    if (!(drift.dt > 0.0) || !(diffusion.dt > 0.0)) fail_numeric("field maps lack a sampling interval");

    PhysParams p;
    p.cells_used = drift_cells.size();
    p.generator = fit_generator(drift_cells, drift.dt, drift_cells.size());
    p.rabi_freq = 0.5 * (p.generator(1, 0) - p.generator(0, 1));
    p.dephasing_rate = -p.generator(0, 0);
    p.meas_rate = fit_meas_rate(diff_cells, diffusion.dt, diff_cells.size());
    p.efficiency = p.meas_rate / p.dephasing_rate;

    std::vector<double> rabi, deph, meas;
    for (std::size_t i = 0; i < drift_cells.size(); ++i) {
        const Eigen::Matrix2d g = fit_generator(drift_cells, drift.dt, i);
        rabi.push_back(0.5 * (g(1, 0) - g(0, 1)));
        deph.push_back(-g(0, 0));
    }
    for (std::size_t i = 0; i < diff_cells.size(); ++i) meas.push_back(fit_meas_rate(diff_cells, diffusion.dt, i));
    p.rabi_freq_se = jackknife_se(rabi);
    p.dephasing_rate_se = jackknife_se(deph);
    p.meas_rate_se = jackknife_se(meas);
    p.efficiency_se = std::abs(p.efficiency) * std::sqrt(std::pow(p.meas_rate_se / p.meas_rate, 2) +
                                                         std::pow(p.dephasing_rate_se / p.dephasing_rate, 2));
    return p;
}

// ---------------------------------------------------------------------------
// Tomography

nlohmann::json TomographyResult::to_json() const {
    return {{"p0", {{"X", p0[0]}, {"Y", p0[1]}, {"Z", p0[2]}}},
            {"bloch", {bloch.x, bloch.y, bloch.z}},
            {"raw_bloch", {raw_bloch.x, raw_bloch.y, raw_bloch.z}},
            {"records", records}};
}

TomographyResult tomography(std::span<const std::array<double, 3>> initial_probs) {
    constexpr std::size_t kMinRecords = 100;
    if (initial_probs.size() < kMinRecords) fail_config("tomography needs at least 100 records");
    TomographyResult r;
    r.records = initial_probs.size();
    for (int a = 0; a < 3; ++a) {
        double s = 0.0;
        for (const auto &p : initial_probs) s += p[a];
        r.p0[a] = std::clamp(s / static_cast<double>(initial_probs.size()), 0.0, 1.0);
    }
    r.raw_bloch = {2.0 * r.p0[0] - 1.0, 2.0 * r.p0[1] - 1.0, 2.0 * r.p0[2] - 1.0};
    r.bloch = r.raw_bloch;
    const double norm = r.bloch.norm();
    if (norm > 1.0) {
        r.bloch.x /= norm;
        r.bloch.y /= norm;
        r.bloch.z /= norm;
    }
    return r;
}

nlohmann::json BootstrapResult::to_json() const {
    nlohmann::json j;
    for (Axis a : kAxes) {
        const int i = axis_index(a);
        j[std::string(1, axis_name(a))] = {{"p0", {p0[i].lo, p0[i].hi}}, {"bloch", {bloch[i].lo, bloch[i].hi}}};
    }
    return j;
}

BootstrapResult bootstrap_ci(std::span<const std::array<double, 3>> initial_probs, std::size_t resamples,
                             std::uint64_t seed, double level) {
    if (resamples < 100) fail_config("bootstrap needs at least 100 resamples");
    if (initial_probs.empty()) fail_config("bootstrap needs at least one record");
    if (!(level > 0.0 && level < 1.0)) fail_config("confidence level must lie in (0, 1)");
    const std::size_t n = initial_probs.size();
    std::array<std::vector<double>, 3> means;
    for (auto &m : means) m.reserve(resamples);
    Engine rng = make_engine(seed, Stream::bootstrap, 0);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t r = 0; r < resamples; ++r) {
        std::array<double, 3> s{0.0, 0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) {
            const auto &p = initial_probs[pick(rng)];
            for (int a = 0; a < 3; ++a) s[a] += p[a];
        }
        for (int a = 0; a < 3; ++a) means[a].push_back(s[a] / static_cast<double>(n));
    }
    auto quantile = [](const std::vector<double> &sorted, double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    BootstrapResult out;
    const double tail = 0.5 * (1.0 - level);
    for (int a = 0; a < 3; ++a) {
        std::sort(means[a].begin(), means[a].end());
        out.p0[a] = {std::clamp(quantile(means[a], tail), 0.0, 1.0), std::clamp(quantile(means[a], 1.0 - tail), 0.0, 1.0)};
        out.bloch[a] = {2.0 * out.p0[a].lo - 1.0, 2.0 * out.p0[a].hi - 1.0};
    }
    return out;
}

Label nearest_cardinal(const BlochVector &v) {
    Axis best = Axis::X;
    for (Axis a : kAxes) {
        if (std::abs(v[a]) > std::abs(v[best])) best = a;
    }
    return Label{static_cast<std::uint8_t>(v[best] >= 0.0 ? 1 : 0), best};
}

}  // namespace qtraj
