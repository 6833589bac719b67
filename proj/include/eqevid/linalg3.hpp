#pragma once

// Fixed-size 3-vector and 3x3 symmetric matrix algebra.

#include <array>
#include <cmath>
#include <random>

namespace eqevid {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double a) { x *= a; y *= a; z *= a; return *this; }

    friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline bool is_finite(const Vec3& a) {
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Symmetric 3x3 matrix; only the upper triangle is stored.
struct SymMat3 {
    double d1 = 0.0, d2 = 0.0, d3 = 0.0;
    double o12 = 0.0, o13 = 0.0, o23 = 0.0;

    static SymMat3 identity() { return {1.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }
    static SymMat3 diag(double a, double b, double c) { return {a, b, c, 0.0, 0.0, 0.0}; }

    double operator()(int i, int j) const;

    SymMat3& operator+=(const SymMat3& o);
    SymMat3& operator-=(const SymMat3& o);
    SymMat3& operator*=(double a);

    friend SymMat3 operator+(SymMat3 a, const SymMat3& b) { return a += b; }
    friend SymMat3 operator-(SymMat3 a, const SymMat3& b) { return a -= b; }
    friend SymMat3 operator*(double s, SymMat3 a) { return a *= s; }
    friend SymMat3 operator*(SymMat3 a, double s) { return a *= s; }
    friend bool operator==(const SymMat3&, const SymMat3&) = default;
};

/// Symmetric positive-definite 3x3 matrix. Construction does not verify
/// definiteness; `factor_spd` is the check.
struct SpdMat3 : SymMat3 {
    SpdMat3() : SymMat3(SymMat3::identity()) {}
    explicit SpdMat3(const SymMat3& m) : SymMat3(m) {}
};

/// General 3x3 matrix, row-major.
struct Mat3 {
    std::array<double, 9> a{};

    static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
    static Mat3 from_sym(const SymMat3& s);

    double operator()(int i, int j) const { return a[3 * i + j]; }
    double& operator()(int i, int j) { return a[3 * i + j]; }

    Mat3 transposed() const;
    double det() const;
};

Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& a, const Vec3& v);
Mat3 operator-(const Mat3& a, const Mat3& b);

/// Proper rotation: R^T R = I and det R = +1.
struct Rotation3 : Mat3 {
    Rotation3() : Mat3(Mat3::identity()) {}
    /// Throws InputError when `m` is not a proper rotation within 1e-12.
    static Rotation3 from_matrix(const Mat3& m);
    /// Unit quaternion (w, x, y, z) to rotation; the quaternion is normalized first.
    static Rotation3 from_quaternion(double w, double x, double y, double z);

private:
    explicit Rotation3(const Mat3& m) : Mat3(m) {}
};

struct EigenSym3 {
    std::array<double, 3> values{};  // ascending
    Mat3 vectors;                     // column k is the eigenvector of values[k]
};

/// Lower-triangular factor L with A = L L^T.
struct Cholesky3 {
    double l11 = 0, l21 = 0, l22 = 0, l31 = 0, l32 = 0, l33 = 0;

    Vec3 solve_lower(const Vec3& b) const;  // L x = b
    Vec3 solve_upper(const Vec3& b) const;  // L^T x = b
    Vec3 apply(const Vec3& g) const;        // L g
};

double frobenius_inner(const SymMat3& a, const SymMat3& b);
double frobenius_norm(const SymMat3& a);
double frobenius_norm(const Mat3& a);
double trace(const SymMat3& a);
double det(const SymMat3& a);
bool is_finite(const SymMat3& a);

SymMat3 outer(const Vec3& v);
SymMat3 outer_sym(const Vec3& a, const Vec3& b);  // (a b^T + b a^T) / 2
Vec3 operator*(const SymMat3& a, const Vec3& v);
/// R S R^T.
SymMat3 conjugate(const Mat3& r, const SymMat3& s);
/// Symmetric part of a general matrix.
SymMat3 symmetric_part(const Mat3& m);

/// Cyclic Jacobi eigendecomposition. Throws NonFiniteInput.
EigenSym3 eig_sym3(const SymMat3& s);

/// Matrix exponential through the eigendecomposition. Throws OverflowError
/// when an eigenvalue exceeds 700.
SpdMat3 expm_sym(const SymMat3& s);

/// Frechet derivative D exp(S)[H] (Daleckii-Krein). Self-adjoint in H.
SymMat3 expm_dirderiv(const SymMat3& s, const SymMat3& h);

/// Throws NotPositiveDefinite when a pivot falls to 1e-300 or below.
Cholesky3 factor_spd(const SymMat3& a);

/// e^T A^{-1} e via two triangular solves.
double mahalanobis_sq(const Vec3& e, const SymMat3& a);
double mahalanobis_sq(const Vec3& e, const Cholesky3& l);

double logdet_spd(const SymMat3& a);
double logdet(const Cholesky3& l);

/// A^{-1} for positive-definite A.
SymMat3 inverse_spd(const SymMat3& a);

/// lambda_max / lambda_min.
double condition_ratio(const SymMat3& a);

/// Haar-uniform rotation from a normalized Gaussian quaternion.
Rotation3 sample_rotation(std::mt19937_64& rng);

} // namespace eqevid
