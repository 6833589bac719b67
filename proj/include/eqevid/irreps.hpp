#pragma once

// (0e + 2e) irrep coefficients <-> Cartesian symmetric matrices.
//
// Basis (Frobenius-orthonormal):
//   B0 = I/sqrt(3)
//   B1 = diag(1,-1,0)/sqrt(2)     B2 = diag(1,1,-2)/sqrt(6)
//   B3 = (Exy+Eyx)/sqrt(2)        B4 = (Exz+Ezx)/sqrt(2)    B5 = (Eyz+Ezy)/sqrt(2)

#include <array>

#include "eqevid/linalg3.hpp"

namespace eqevid {

struct IrrepCoeffs {
    double s = 0.0;                 // l = 0
    std::array<double, 5> t{};      // l = 2

    friend bool operator==(const IrrepCoeffs&, const IrrepCoeffs&) = default;
};

using Mat5 = std::array<std::array<double, 5>, 5>;
using L2Vec = std::array<double, 5>;

/// B0..B5 as listed above.
const std::array<SymMat3, 6>& irrep_basis();

SymMat3 coeffs_to_sym(const IrrepCoeffs& z);
IrrepCoeffs sym_to_coeffs(const SymMat3& s);

/// D(R)_ab = <B_a, R B_b R^T>_F over the five l = 2 basis elements.
Mat5 induced_rotation_l2(const Mat3& r);

L2Vec apply(const Mat5& d, const L2Vec& t);
double l2_norm(const L2Vec& t);

} // namespace eqevid
