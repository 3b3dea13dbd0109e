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

#include "qtraj/core.hpp"

#include <algorithm>
#include <cmath>

#include "qtraj/error.hpp"

namespace qtraj {

char axis_name(Axis a) {
    static constexpr char names[] = {'X', 'Y', 'Z'};
    return names[axis_index(a)];
}

Axis axis_from_index(int i) {
    if (i < 0 || i > 2) fail_config("axis index out of range: " + std::to_string(i));
    return static_cast<Axis>(i);
}

Axis parse_axis(std::string_view s) {
    if (s == "X" || s == "x") return Axis::X;
    if (s == "Y" || s == "y") return Axis::Y;
    if (s == "Z" || s == "z") return Axis::Z;
    fail_config("unknown axis '" + std::string(s) + "'");
}

Label Label::from_index(int i) {
    if (i < 0 || i >= 6) fail_config("label index out of range: " + std::to_string(i));
    return Label{static_cast<std::uint8_t>(i % 2), axis_from_index(i / 2)};
}

std::array<Label, 6> all_labels() {
    std::array<Label, 6> out;
    for (int i = 0; i < 6; ++i) out[i] = Label::from_index(i);
    return out;
}

std::string to_string(const Label &l) {
    return std::string(l.bit ? "+" : "-") + axis_name(l.axis);
}

double BlochVector::norm() const { return std::sqrt(x * x + y * y + z * z); }

namespace {

BlochVector bloch_of(const Matrix2 &m) {
    return {2.0 * m(1, 0).real(), 2.0 * m(1, 0).imag(), (m(0, 0) - m(1, 1)).real()};
}

Matrix2 matrix_of(const BlochVector &v) {
    Matrix2 m;
    m << Complex(0.5 * (1.0 + v.z), 0.0), Complex(0.5 * v.x, -0.5 * v.y),
        Complex(0.5 * v.x, 0.5 * v.y), Complex(0.5 * (1.0 - v.z), 0.0);
    return m;
}

}  // namespace

DensityMatrix::DensityMatrix() : m_(Matrix2::Identity() * 0.5) {}

DensityMatrix DensityMatrix::from_matrix(const Matrix2 &m) {
    if (!m.allFinite()) fail_numeric("density matrix has non-finite entries");
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol) fail_numeric("density matrix is not Hermitian");
    if (std::abs(m.trace() - Complex(1.0, 0.0)) > kTraceTol) fail_numeric("density matrix trace is not 1");
    if (0.5 * (1.0 - bloch_of(m).norm()) < -kEigenTol) fail_numeric("density matrix has a negative eigenvalue");
    return DensityMatrix(m);
}

DensityMatrix DensityMatrix::project(const Matrix2 &m) {
    Matrix2 h = 0.5 * (m + m.adjoint());
    const double tr = h.trace().real();
    if (!(tr > 0.0) || !std::isfinite(tr)) fail_numeric("state trace is not positive; time step too large?");
    h /= tr;
    BlochVector v = bloch_of(h);
    const double r = v.norm();
    if (0.5 * (1.0 - r) < -kEigenTol) fail_numeric("state left the Bloch ball; time step too large?");
    if (r > 1.0) {
        v.x /= r;
        v.y /= r;
        v.z /= r;
    }
    return DensityMatrix(matrix_of(v));
}

Matrix2 pauli(Axis axis) {
    Matrix2 m;
    switch (axis) {
        case Axis::X:
            m << 0.0, 1.0, 1.0, 0.0;
            break;
        case Axis::Y:
            m << 0.0, Complex(0.0, -1.0), Complex(0.0, 1.0), 0.0;
            break;
        case Axis::Z:
            m << 1.0, 0.0, 0.0, -1.0;
            break;
    }
    return m;
}

BlochVector bloch_from_rho(const DensityMatrix &rho) { return bloch_of(rho.matrix()); }

DensityMatrix rho_from_bloch(const BlochVector &v) {
    if (!(v.norm() <= 1.0 + DensityMatrix::kEigenTol)) fail_numeric("Bloch vector outside the unit ball");
    return DensityMatrix::project(matrix_of(v));
}

DensityMatrix cardinal_state(const Label &prep) {
    BlochVector v;
    v[prep.axis] = prep.bit ? 1.0 : -1.0;
    return rho_from_bloch(v);
}

double born_probability(const DensityMatrix &rho, Axis axis) {
    const double expectation = (rho.matrix() * pauli(axis)).trace().real();
    return std::clamp(0.5 * (expectation + 1.0), 0.0, 1.0);
}

double purity(const DensityMatrix &rho) { return (rho.matrix() * rho.matrix()).trace().real(); }

}  // namespace qtraj
