#include "eqevid/linalg3.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "eqevid/errors.hpp"

namespace eqevid {

namespace {

constexpr double kExpOverflow = 700.0;
constexpr double kPivotFloor = 1e-300;
constexpr int kMaxSweeps = 50;

void check_finite(const SymMat3& s, const char* where) {
    if (!is_finite(s)) {
        throw NonFiniteInput(std::string(where) + ": non-finite matrix entry");
    }
}

void check_overflow(const EigenSym3& e, const char* where) {
    if (e.values[2] > kExpOverflow) {
        throw OverflowError(std::string(where) + ": eigenvalue " + std::to_string(e.values[2]) +
                            " exceeds exp overflow limit");
    }
}

// U diag(f) U^T
SymMat3 reassemble(const Mat3& u, const std::array<double, 3>& f) {
    Mat3 out;
    for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += u(i, k) * f[k] * u(j, k);
            out(i, j) = acc;
            out(j, i) = acc;
        }
    }
    return symmetric_part(out);
}

} // namespace

double SymMat3::operator()(int i, int j) const {
    if (i == j) return i == 0 ? d1 : (i == 1 ? d2 : d3);
    if (i > j) std::swap(i, j);
    if (i == 0) return j == 1 ? o12 : o13;
    return o23;
}

SymMat3& SymMat3::operator+=(const SymMat3& o) {
    d1 += o.d1; d2 += o.d2; d3 += o.d3;
    o12 += o.o12; o13 += o.o13; o23 += o.o23;
    return *this;
}

SymMat3& SymMat3::operator-=(const SymMat3& o) {
    d1 -= o.d1; d2 -= o.d2; d3 -= o.d3;
    o12 -= o.o12; o13 -= o.o13; o23 -= o.o23;
    return *this;
}

SymMat3& SymMat3::operator*=(double a) {
    d1 *= a; d2 *= a; d3 *= a;
    o12 *= a; o13 *= a; o23 *= a;
    return *this;
}

Mat3 Mat3::from_sym(const SymMat3& s) {
    return {{s.d1, s.o12, s.o13, s.o12, s.d2, s.o23, s.o13, s.o23, s.d3}};
}

Mat3 Mat3::transposed() const {
    Mat3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = (*this)(j, i);
    return t;
}

double Mat3::det() const {
    const auto& m = *this;
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 c;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            c(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return c;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
            a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

Mat3 operator-(const Mat3& a, const Mat3& b) {
    Mat3 c;
    for (int k = 0; k < 9; ++k) c.a[k] = a.a[k] - b.a[k];
    return c;
}

Rotation3 Rotation3::from_matrix(const Mat3& m) {
    const double orth = frobenius_norm(m.transposed() * m - Mat3::identity());
    const double d = m.det();
    if (!(orth <= 1e-12) || !(std::abs(d - 1.0) <= 1e-12)) {
        throw InputError("matrix is not a proper rotation");
    }
    return Rotation3(m);
}

Rotation3 Rotation3::from_quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n; x /= n; y /= n; z /= n;
    Mat3 m{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
    return Rotation3(m);
}

Vec3 Cholesky3::solve_lower(const Vec3& b) const {
    const double x1 = b.x / l11;
    const double x2 = (b.y - l21 * x1) / l22;
    const double x3 = (b.z - l31 * x1 - l32 * x2) / l33;
    return {x1, x2, x3};
}

Vec3 Cholesky3::solve_upper(const Vec3& b) const {
    const double x3 = b.z / l33;
    const double x2 = (b.y - l32 * x3) / l22;
    const double x1 = (b.x - l21 * x2 - l31 * x3) / l11;
    return {x1, x2, x3};
}

Vec3 Cholesky3::apply(const Vec3& g) const {
    return {l11 * g.x, l21 * g.x + l22 * g.y, l31 * g.x + l32 * g.y + l33 * g.z};
}

double frobenius_inner(const SymMat3& a, const SymMat3& b) {
    return a.d1 * b.d1 + a.d2 * b.d2 + a.d3 * b.d3 +
           2.0 * (a.o12 * b.o12 + a.o13 * b.o13 + a.o23 * b.o23);
}

double frobenius_norm(const SymMat3& a) { return std::sqrt(frobenius_inner(a, a)); }

double frobenius_norm(const Mat3& a) {
    double acc = 0.0;
    for (double v : a.a) acc += v * v;
    return std::sqrt(acc);
}

double trace(const SymMat3& a) { return a.d1 + a.d2 + a.d3; }

double det(const SymMat3& a) { return Mat3::from_sym(a).det(); }

bool is_finite(const SymMat3& a) {
    return std::isfinite(a.d1) && std::isfinite(a.d2) && std::isfinite(a.d3) &&
           std::isfinite(a.o12) && std::isfinite(a.o13) && std::isfinite(a.o23);
}

SymMat3 outer(const Vec3& v) {
    return {v.x * v.x, v.y * v.y, v.z * v.z, v.x * v.y, v.x * v.z, v.y * v.z};
}

SymMat3 outer_sym(const Vec3& a, const Vec3& b) {
    return {a.x * b.x, a.y * b.y, a.z * b.z, 0.5 * (a.x * b.y + a.y * b.x),
            0.5 * (a.x * b.z + a.z * b.x), 0.5 * (a.y * b.z + a.z * b.y)};
}

Vec3 operator*(const SymMat3& a, const Vec3& v) {
    return {a.d1 * v.x + a.o12 * v.y + a.o13 * v.z, a.o12 * v.x + a.d2 * v.y + a.o23 * v.z,
            a.o13 * v.x + a.o23 * v.y + a.d3 * v.z};
}

SymMat3 conjugate(const Mat3& r, const SymMat3& s) {
    return symmetric_part(r * Mat3::from_sym(s) * r.transposed());
}

SymMat3 symmetric_part(const Mat3& m) {
    return {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
            0.5 * (m(1, 2) + m(2, 1))};
}

EigenSym3 eig_sym3(const SymMat3& s) {
    check_finite(s, "eig_sym3");
    Mat3 a = Mat3::from_sym(s);
    Mat3 v = Mat3::identity();
    const double scale = frobenius_norm(s);

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        const double off = std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
        if (off <= 1e-14 * scale) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                // A <- J^T A J with J the (p,q) Givens rotation
                for (int k = 0; k < 3; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
    EigenSym3 out;
    for (int k = 0; k < 3; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (int r = 0; r < 3; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

SpdMat3 expm_sym(const SymMat3& s) {
    const EigenSym3 e = eig_sym3(s);
    check_overflow(e, "expm_sym");
    return SpdMat3(reassemble(e.vectors, {std::exp(e.values[0]), std::exp(e.values[1]),
                                          std::exp(e.values[2])}));
}

SymMat3 expm_dirderiv(const SymMat3& s, const SymMat3& h) {
    check_finite(h, "expm_dirderiv");
    const EigenSym3 e = eig_sym3(s);
    check_overflow(e, "expm_dirderiv");
    const Mat3& u = e.vectors;
    const auto& lam = e.values;

    // First divided differences of exp on the spectrum.
    double g[3][3];
    for (int i = 0; i < 3; ++i) {
        g[i][i] = std::exp(lam[i]);
        for (int j = i + 1; j < 3; ++j) {
            const double delta = 0.5 * (lam[i] - lam[j]);
            const double mid = std::exp(0.5 * (lam[i] + lam[j]));
            double ratio;
            if (std::abs(delta) < 1e-4) {
                const double d2 = delta * delta;
                ratio = 1.0 + d2 / 6.0 + d2 * d2 / 120.0;
            } else {
                ratio = std::sinh(delta) / delta;
            }
            g[i][j] = g[j][i] = mid * ratio;
        }
    }

    const Mat3 ht = u.transposed() * Mat3::from_sym(h) * u;
    Mat3 inner;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) inner(i, j) = g[i][j] * ht(i, j);
    return symmetric_part(u * inner * u.transposed());
}

Cholesky3 factor_spd(const SymMat3& a) {
    if (!is_finite(a)) throw NotPositiveDefinite("factor_spd: non-finite matrix");
    Cholesky3 l;
    const double p1 = a.d1;
    if (!(p1 > kPivotFloor)) throw NotPositiveDefinite("factor_spd: pivot 1 not positive");
    l.l11 = std::sqrt(p1);
    l.l21 = a.o12 / l.l11;
    l.l31 = a.o13 / l.l11;
    const double p2 = a.d2 - l.l21 * l.l21;
    if (!(p2 > kPivotFloor)) throw NotPositiveDefinite("factor_spd: pivot 2 not positive");
    l.l22 = std::sqrt(p2);
    l.l32 = (a.o23 - l.l31 * l.l21) / l.l22;
    const double p3 = a.d3 - l.l31 * l.l31 - l.l32 * l.l32;
    if (!(p3 > kPivotFloor)) throw NotPositiveDefinite("factor_spd: pivot 3 not positive");
    l.l33 = std::sqrt(p3);
    return l;
}

double mahalanobis_sq(const Vec3& e, const Cholesky3& l) {
    const Vec3 w = l.solve_lower(e);
    return dot(w, w);
}

double mahalanobis_sq(const Vec3& e, const SymMat3& a) { return mahalanobis_sq(e, factor_spd(a)); }

double logdet(const Cholesky3& l) {
    return 2.0 * (std::log(l.l11) + std::log(l.l22) + std::log(l.l33));
}

double logdet_spd(const SymMat3& a) { return logdet(factor_spd(a)); }

SymMat3 inverse_spd(const SymMat3& a) {
    const Cholesky3 l = factor_spd(a);
    const Vec3 c0 = l.solve_upper(l.solve_lower({1, 0, 0}));
    const Vec3 c1 = l.solve_upper(l.solve_lower({0, 1, 0}));
    const Vec3 c2 = l.solve_upper(l.solve_lower({0, 0, 1}));
    return {c0.x, c1.y, c2.z, 0.5 * (c0.y + c1.x), 0.5 * (c0.z + c2.x), 0.5 * (c1.z + c2.y)};
}

double condition_ratio(const SymMat3& a) {
    const EigenSym3 e = eig_sym3(a);
    if (!(e.values[0] > 0.0)) throw NotPositiveDefinite("condition_ratio: non-positive eigenvalue");
    return e.values[2] / e.values[0];
}

Rotation3 sample_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    double w = 0, x = 0, y = 0, z = 0, len2 = 0;
    do {
        w = n01(rng); x = n01(rng); y = n01(rng); z = n01(rng);
        len2 = w * w + x * x + y * y + z * z;
    } while (len2 < 1e-20);
    return Rotation3::from_quaternion(w, x, y, z);
}

} // namespace eqevid
