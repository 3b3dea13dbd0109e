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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qtraj/core.hpp"

namespace qtraj {

// ---------------------------------------------------------------------------
// Calibration: bin predictions p +- delta and compare with observed outcome
// frequencies. epsilon = sum_p (N_p / N) (<y>_p - p)^2.

struct CalibrationBin {
    double center = 0.0;
    double half_width = 0.0;
    double mean_outcome = 0.0;
    std::size_t count = 0;
};

struct AxisCalibration {
    Axis axis = Axis::Z;
    std::vector<CalibrationBin> bins;
    std::size_t total = 0;
    double epsilon = 0.0;
};

struct CalibrationReport {
    double delta = 0.01;
    std::vector<AxisCalibration> axes;  // only axes that received data, ordered X, Y, Z

    const AxisCalibration *find(Axis a) const;
    nlohmann::json to_json() const;
    void write_csv(std::ostream &out) const;
};

/// `axes[i]` names the head whose prediction `predictions[i]` was paired with `outcomes[i]`.
CalibrationReport calibrate(std::span<const double> predictions, std::span<const std::uint8_t> outcomes,
                            std::span<const Axis> axes, double delta = 0.01);

// ---------------------------------------------------------------------------
// Drift and diffusion of predicted trajectories in the (y, z) Bloch plane.

struct FieldCell {
    double center_y = 0.0;
    double center_z = 0.0;
    std::size_t count = 0;
    bool empty = true;
    double mean_y = 0.0;  // mean start position of the samples in the cell
    double mean_z = 0.0;
    Eigen::Vector2d drift = Eigen::Vector2d::Zero();        // mean displacement per unit time
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();   // of drift-subtracted displacements, per step
    Eigen::Vector2d eigenvalues = Eigen::Vector2d::Zero();  // ascending
    Eigen::Matrix2d eigenvectors = Eigen::Matrix2d::Zero();  // columns match eigenvalues
};

struct VectorFieldMap {
    int grid = 20;
    double dt = 0.0;
    std::size_t min_count = 50;
    std::vector<FieldCell> cells;  // row-major: index = iy * grid + iz

    const FieldCell &cell(int iy, int iz) const { return cells[static_cast<std::size_t>(iy * grid + iz)]; }
    std::size_t valid_cells() const;
    void write_csv(std::ostream &out) const;
};

struct FieldOptions {
    int grid = 20;
    std::size_t min_count = 50;
};

/// Bins every consecutive pair (P_t, P_t+1) of each series by its start point
/// in the (2 P_Y - 1, 2 P_Z - 1) plane.
VectorFieldMap build_field_map(std::span<const PredictionSeries> ensemble, const FieldOptions &opts = {});
VectorFieldMap drift_map(std::span<const PredictionSeries> ensemble, const FieldOptions &opts = {});
VectorFieldMap diffusion_map(std::span<const PredictionSeries> ensemble, const FieldOptions &opts = {});

struct PhysParams {
    double rabi_freq = 0.0;  // rad/us
    double rabi_freq_se = 0.0;
    double dephasing_rate = 0.0;  // gamma_phi, 1/us
    double dephasing_rate_se = 0.0;
    double meas_rate = 0.0;  // gamma_m, 1/us
    double meas_rate_se = 0.0;
    double efficiency = 0.0;  // gamma_m / gamma_phi
    double efficiency_se = 0.0;
    std::size_t cells_used = 0;
    Eigen::Matrix2d generator = Eigen::Matrix2d::Zero();  // fitted drift generator on (y, z)

    nlohmann::json to_json() const;
};

/// Weighted least-squares fit of the SME drift and diffusion model.
///
/// Drift: the cell means are fitted by a linear one-step map (y, z) -> B (y, z),
/// and the generator A = log(B) / dt is matched to [[-gamma_phi, -Omega], [Omega, 0]].
/// Diffusion: the leading covariance eigenvalue is fitted to
/// 2 gamma_m dt ((1 - z^2)^2 + y^2 z^2). Standard errors are leave-one-cell-out
/// jackknife estimates.
PhysParams fit_params(const VectorFieldMap &drift, const VectorFieldMap &diffusion);

// ---------------------------------------------------------------------------
// Initial-state tomography from backward predictions at t = 0.

struct TomographyResult {
    std::array<double, 3> p0{0.5, 0.5, 0.5};
    BlochVector raw_bloch;  // 2 P0 - 1
    BlochVector bloch;      // projected into the unit ball
    std::size_t records = 0;

    nlohmann::json to_json() const;
};

/// argmin_P sum_n |P - P_n|^2 per axis, i.e. the mean, clamped to [0, 1].
TomographyResult tomography(std::span<const std::array<double, 3>> initial_probs);

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
};

struct BootstrapResult {
    std::array<ConfidenceInterval, 3> p0;
    std::array<ConfidenceInterval, 3> bloch;

    nlohmann::json to_json() const;
};

/// Percentile interval of the per-axis mean over record-level resampling with replacement.
BootstrapResult bootstrap_ci(std::span<const std::array<double, 3>> initial_probs, std::size_t resamples = 1000,
                             std::uint64_t seed = 0, double level = 0.95);

/// Cardinal label whose Bloch point is closest to `v`.
Label nearest_cardinal(const BlochVector &v);

}  // namespace qtraj
