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

// Single-qubit linear algebra. Units: hbar = 1, time in microseconds,
// angular frequencies in rad/us.

#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace qtraj {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;

enum class Axis : std::uint8_t { X = 0, Y = 1, Z = 2 };

inline constexpr std::array<Axis, 3> kAxes{Axis::X, Axis::Y, Axis::Z};

constexpr int axis_index(Axis a) { return static_cast<int>(a); }
char axis_name(Axis a);
Axis axis_from_index(int i);
Axis parse_axis(std::string_view s);

/// Outcome of a projective measurement along `axis`. bit = 1 is the +1
/// eigenvalue (Bloch coordinate +1), bit = 0 the -1 eigenvalue.
struct Label {
    std::uint8_t bit = 0;
    Axis axis = Axis::Z;

    /// One-hot slot in [0, 6): 2 * axis + bit.
    constexpr int index() const { return 2 * axis_index(axis) + bit; }
    static Label from_index(int i);

    friend bool operator==(const Label &, const Label &) = default;
};

/// All six cardinal labels, ordered by Label::index().
std::array<Label, 6> all_labels();
std::string to_string(const Label &l);

struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double operator[](Axis a) const { return a == Axis::X ? x : (a == Axis::Y ? y : z); }
    double &operator[](Axis a) { return a == Axis::X ? x : (a == Axis::Y ? y : z); }
    double norm() const;
};

/// Hermitian, unit-trace, positive semi-definite 2x2 matrix.
class DensityMatrix {
public:
    static constexpr double kHermitianTol = 1e-12;
    static constexpr double kTraceTol = 1e-10;
    static constexpr double kEigenTol = 1e-9;

    /// Maximally mixed state.
    DensityMatrix();

    /// Validates `m` against the invariants and throws Error(numeric) otherwise.
    static DensityMatrix from_matrix(const Matrix2 &m);

    /// Symmetrizes, renormalizes the trace, and projects eigenvalues in
    /// [-kEigenTol, 0) back onto the Bloch ball. Throws if the trace is not
    /// positive or an eigenvalue is below -kEigenTol.
    static DensityMatrix project(const Matrix2 &m);

    const Matrix2 &matrix() const { return m_; }

private:
    explicit DensityMatrix(const Matrix2 &m) : m_(m) {}
    Matrix2 m_;
};

Matrix2 pauli(Axis axis);
BlochVector bloch_from_rho(const DensityMatrix &rho);
DensityMatrix rho_from_bloch(const BlochVector &v);
DensityMatrix cardinal_state(const Label &prep);

/// Probability of outcome bit = 1 for a projective measurement along `axis`.
double born_probability(const DensityMatrix &rho, Axis axis);
double purity(const DensityMatrix &rho);

/// Outcome probabilities P_X, P_Y, P_Z (bit = 1) per time step. Entry 0 is
/// the prior at t = 0, entry k follows the k-th record sample.
struct PredictionSeries {
    double dt = 0.0;
    std::vector<std::array<double, 3>> probs;

    std::size_t size() const { return probs.size(); }
    double at(std::size_t t, Axis a) const { return probs[t][axis_index(a)]; }
    double time(std::size_t t) const { return dt * static_cast<double>(t); }
};

}  // namespace qtraj
