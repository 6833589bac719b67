#include "eqevid/irreps.hpp"

#include <cmath>

namespace eqevid {

const std::array<SymMat3, 6>& irrep_basis() {
    static const std::array<SymMat3, 6> basis = [] {
        const double r2 = 1.0 / std::sqrt(2.0);
        const double r3 = 1.0 / std::sqrt(3.0);
        const double r6 = 1.0 / std::sqrt(6.0);
        return std::array<SymMat3, 6>{
            SymMat3{r3, r3, r3, 0, 0, 0},
            SymMat3{r2, -r2, 0, 0, 0, 0},
            SymMat3{r6, r6, -2 * r6, 0, 0, 0},
            SymMat3{0, 0, 0, r2, 0, 0},
            SymMat3{0, 0, 0, 0, r2, 0},
            SymMat3{0, 0, 0, 0, 0, r2},
        };
    }();
    return basis;
}

SymMat3 coeffs_to_sym(const IrrepCoeffs& z) {
    const auto& b = irrep_basis();
    SymMat3 s = z.s * b[0];
    for (int k = 0; k < 5; ++k) s += z.t[k] * b[k + 1];
    return s;
}

IrrepCoeffs sym_to_coeffs(const SymMat3& s) {
    const auto& b = irrep_basis();
    IrrepCoeffs z;
    z.s = frobenius_inner(s, b[0]);
    for (int k = 0; k < 5; ++k) z.t[k] = frobenius_inner(s, b[k + 1]);
    return z;
}

Mat5 induced_rotation_l2(const Mat3& r) {
    const auto& b = irrep_basis();
    Mat5 d{};
    for (int col = 0; col < 5; ++col) {
        const SymMat3 rotated = conjugate(r, b[col + 1]);
        for (int row = 0; row < 5; ++row) d[row][col] = frobenius_inner(b[row + 1], rotated);
    }
    return d;
}

L2Vec apply(const Mat5& d, const L2Vec& t) {
    L2Vec out{};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) out[i] += d[i][j] * t[j];
    return out;
}

double l2_norm(const L2Vec& t) {
    double acc = 0.0;
    for (double v : t) acc += v * v;
    return std::sqrt(acc);
}

} // namespace eqevid
