#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "eqevid/errors.hpp"
#include "eqevid/linalg3.hpp"
#include "oracles.hpp"

using namespace eqevid;

namespace {

double reconstruction_error(const SymMat3& s, const EigenSym3& e) {
    oracle::M3 d{};
    for (int k = 0; k < 3; ++k) d[k][k] = e.values[k];
    const oracle::M3 u = oracle::to_m3(e.vectors);
    const oracle::M3 r = oracle::mul(oracle::mul(u, d), oracle::transpose(u));
    return oracle::frob_diff(r, oracle::to_m3(s)) / std::max(frobenius_norm(s), 1e-300);
}

double orthonormality_error(const Mat3& u) {
    const oracle::M3 a = oracle::to_m3(u);
    return oracle::frob_diff(oracle::mul(oracle::transpose(a), a),
                             {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}});
}

} // namespace

TEST_CASE("eig_sym3 on a diagonal matrix returns its entries") {
    const EigenSym3 e = eig_sym3(SymMat3::diag(1, 2, 3));
    CHECK(e.values[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(e.values[1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(e.values[2] == doctest::Approx(3.0).epsilon(1e-15));
    for (int k = 0; k < 3; ++k) CHECK(std::abs(e.vectors(k, k)) == doctest::Approx(1.0));
}

TEST_CASE("eig_sym3 of the zero matrix") {
    const EigenSym3 e = eig_sym3(SymMat3{});
    for (double v : e.values) CHECK(v == 0.0);
    CHECK(orthonormality_error(e.vectors) < 1e-15);
}

TEST_CASE("eig_sym3 reconstructs random matrices") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const SymMat3 s = oracle::random_sym(rng, trial % 2 ? 1.0 : 100.0);
        const EigenSym3 e = eig_sym3(s);
        CHECK(reconstruction_error(s, e) <= 1e-12);
        CHECK(orthonormality_error(e.vectors) <= 1e-12);
        CHECK(e.values[0] <= e.values[1]);
        CHECK(e.values[1] <= e.values[2]);
    }
}

TEST_CASE("eig_sym3 handles degenerate spectra") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const Rotation3 r = sample_rotation(rng);
        const SymMat3 s = conjugate(r, SymMat3::diag(2.0, 2.0, 2.0 + (trial % 3) * 1e-9));
        const EigenSym3 e = eig_sym3(s);
        CHECK(reconstruction_error(s, e) <= 1e-12);
        CHECK(orthonormality_error(e.vectors) <= 1e-12);
    }
}

TEST_CASE("eig_sym3 rejects non-finite input") {
    SymMat3 s = SymMat3::identity();
    s.o13 = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(eig_sym3(s), NonFiniteInput);
    s.o13 = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(eig_sym3(s), NonFiniteInput);
}

TEST_CASE("expm_sym basic values") {
    CHECK(oracle::frob_diff(expm_sym(SymMat3{}), SymMat3::identity()) == 0.0);
    const SpdMat3 e = expm_sym(SymMat3::diag(std::log(2.0), 0.0, -std::log(2.0)));
    CHECK(oracle::frob_diff(e, SymMat3::diag(2.0, 1.0, 0.5)) <= 1e-15);
}

TEST_CASE("expm_sym agrees with a scaling-and-squaring Taylor oracle") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        const SymMat3 s = oracle::random_sym(rng, trial % 3 == 0 ? 3.0 : 1.0);
        const oracle::M3 ref = oracle::expm_taylor(oracle::to_m3(s));
        const double err = oracle::frob_diff(oracle::to_m3(expm_sym(s)), ref) / oracle::frob(ref);
        CHECK(err <= 1e-10);
    }
}

TEST_CASE("expm_sym overflow and positivity") {
    CHECK_THROWS_AS(expm_sym(SymMat3::diag(701.0, 0.0, 0.0)), OverflowError);
    CHECK_NOTHROW(expm_sym(SymMat3::diag(699.0, 0.0, 0.0)));
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 1000; ++trial) {
        CHECK_NOTHROW(factor_spd(expm_sym(oracle::random_sym(rng, 2.0))));
    }
}

TEST_CASE("expm_sym conjugation equivariance") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 1000; ++trial) {
        const SymMat3 s = oracle::random_sym(rng);
        const Rotation3 r = sample_rotation(rng);
        const SpdMat3 e = expm_sym(s);
        const double err = oracle::frob_diff(expm_sym(conjugate(r, s)), conjugate(r, e));
        CHECK(err <= 1e-10 * frobenius_norm(e));
    }
}

TEST_CASE("expm_dirderiv at zero is the identity map") {
    std::mt19937_64 rng(16);
    const SymMat3 h = oracle::random_sym(rng);
    CHECK(oracle::frob_diff(expm_dirderiv(SymMat3{}, h), h) <= 1e-15);
}

TEST_CASE("expm_dirderiv with diagonal arguments") {
    const SymMat3 d = expm_dirderiv(SymMat3::diag(0.3, -1.2, 2.0), SymMat3::diag(1.5, -0.5, 2.5));
    CHECK(oracle::frob_diff(d, SymMat3::diag(1.5 * std::exp(0.3), -0.5 * std::exp(-1.2),
                                             2.5 * std::exp(2.0))) <= 1e-14);
}

TEST_CASE("expm_dirderiv matches central finite differences") {
    std::mt19937_64 rng(17);
    const double h = 1e-6;
    for (int trial = 0; trial < 500; ++trial) {
        const SymMat3 s = oracle::random_sym(rng);
        const SymMat3 dir = oracle::random_sym(rng);
        const oracle::M3 plus = oracle::expm_taylor(oracle::to_m3(s + h * dir));
        const oracle::M3 minus = oracle::expm_taylor(oracle::to_m3(s - h * dir));
        oracle::M3 fd{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) fd[i][j] = (plus[i][j] - minus[i][j]) / (2 * h);
        const double err = oracle::frob_diff(oracle::to_m3(expm_dirderiv(s, dir)), fd) / oracle::frob(fd);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("expm_dirderiv is accurate for near-degenerate spectra") {
    std::mt19937_64 rng(18);
    const double h = 1e-6;
    for (double gap : {0.0, 1e-12, 1e-8, 5e-5, 2e-4, 1e-2}) {
        const Rotation3 r = sample_rotation(rng);
        const SymMat3 s = conjugate(r, SymMat3::diag(0.7, 0.7 + gap, -0.4));
        const SymMat3 dir = oracle::random_sym(rng);
        const oracle::M3 plus = oracle::expm_taylor(oracle::to_m3(s + h * dir));
        const oracle::M3 minus = oracle::expm_taylor(oracle::to_m3(s - h * dir));
        oracle::M3 fd{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) fd[i][j] = (plus[i][j] - minus[i][j]) / (2 * h);
        CHECK(oracle::frob_diff(oracle::to_m3(expm_dirderiv(s, dir)), fd) / oracle::frob(fd) <= 1e-6);
    }
}

TEST_CASE("expm_dirderiv is self-adjoint") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 500; ++trial) {
        const SymMat3 s = oracle::random_sym(rng, 2.0);
        const SymMat3 h1 = oracle::random_sym(rng);
        const SymMat3 h2 = oracle::random_sym(rng);
        const double a = frobenius_inner(expm_dirderiv(s, h1), h2);
        const double b = frobenius_inner(h1, expm_dirderiv(s, h2));
        CHECK(std::abs(a - b) <= 1e-12 * (std::abs(a) + 1.0));
    }
}

TEST_CASE("factor_spd on simple matrices") {
    const Cholesky3 id = factor_spd(SymMat3::identity());
    CHECK(id.l11 == 1.0);
    CHECK(id.l22 == 1.0);
    CHECK(id.l33 == 1.0);
    CHECK(id.l21 == 0.0);
    CHECK(id.l31 == 0.0);
    CHECK(id.l32 == 0.0);
    const Cholesky3 d = factor_spd(SymMat3::diag(4, 9, 16));
    CHECK(d.l11 == 2.0);
    CHECK(d.l22 == 3.0);
    CHECK(d.l33 == 4.0);
}

TEST_CASE("factor_spd reconstructs random SPD matrices") {
    std::mt19937_64 rng(20);
    for (int trial = 0; trial < 1000; ++trial) {
        const SymMat3 a = oracle::random_spd(rng);
        const Cholesky3 c = factor_spd(a);
        const oracle::M3 l{{{c.l11, 0, 0}, {c.l21, c.l22, 0}, {c.l31, c.l32, c.l33}}};
        const oracle::M3 r = oracle::mul(l, oracle::transpose(l));
        CHECK(oracle::frob_diff(r, oracle::to_m3(a)) <= 1e-12 * frobenius_norm(a));
    }
}

TEST_CASE("factor_spd rejects indefinite and singular input") {
    CHECK_THROWS_AS(factor_spd(SymMat3::diag(1, -1, 1)), NotPositiveDefinite);
    CHECK_THROWS_AS(factor_spd(SymMat3::diag(1, 1, 0)), NotPositiveDefinite);
    CHECK_THROWS_AS(factor_spd(SymMat3{1, 1, 1, 1, 0, 0}), NotPositiveDefinite);
    CHECK_NOTHROW(factor_spd(SymMat3::diag(1e-200, 1, 1)));
}

TEST_CASE("mahalanobis_sq") {
    CHECK(mahalanobis_sq(Vec3{}, SymMat3::diag(2, 3, 4)) == 0.0);
    CHECK(mahalanobis_sq(Vec3{1, 0, 0}, SymMat3::identity()) == 1.0);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec3 e = oracle::random_vec(rng);
        CHECK(mahalanobis_sq(e, SymMat3::identity()) == dot(e, e));
        const SymMat3 a = oracle::random_spd(rng, 0.5);
        const double ref = oracle::quad_form(oracle::inverse_adjugate(oracle::to_m3(a)), e);
        CHECK(oracle::rel_err(mahalanobis_sq(e, a), ref) <= 1e-11);
    }
    CHECK_THROWS_AS(mahalanobis_sq(Vec3{1, 1, 1}, SymMat3::diag(1, 0, 1)), NotPositiveDefinite);
}

TEST_CASE("inverse_spd matches the adjugate inverse") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 500; ++trial) {
        const SymMat3 a = oracle::random_spd(rng);
        const oracle::M3 ref = oracle::inverse_adjugate(oracle::to_m3(a));
        CHECK(oracle::frob_diff(oracle::to_m3(inverse_spd(a)), ref) <= 1e-11 * oracle::frob(ref));
    }
}

TEST_CASE("logdet_spd") {
    CHECK(logdet_spd(SymMat3::identity()) == 0.0);
    const double e = std::exp(1.0);
    CHECK(logdet_spd(SymMat3::diag(e, e, e)) == doctest::Approx(3.0).epsilon(1e-15));
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const SymMat3 a = oracle::random_spd(rng, 0.1);
        const EigenSym3 es = eig_sym3(a);
        const double ref = std::log(es.values[0] * es.values[1] * es.values[2]);
        CHECK(std::abs(logdet_spd(a) - ref) <= 1e-11 * std::max(1.0, std::abs(ref)));
        CHECK(std::abs(logdet_spd(a) - std::log(oracle::det(oracle::to_m3(a)))) <= 1e-10);
    }
}

TEST_CASE("sample_rotation produces proper rotations") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 10000; ++trial) {
        const Rotation3 r = sample_rotation(rng);
        CHECK(orthonormality_error(r) <= 1e-12);
        CHECK(std::abs(r.det() - 1.0) <= 1e-12);
    }
}

TEST_CASE("sample_rotation is reproducible under a fixed seed") {
    std::mt19937_64 a(99), b(99);
    for (int k = 0; k < 10; ++k) CHECK(sample_rotation(a).a == sample_rotation(b).a);
}

TEST_CASE("sample_rotation entry means vanish under Haar measure") {
    // Each entry of a Haar rotation has mean 0 and variance 1/3.
    const int n = 10000;
    std::mt19937_64 rng(25);
    std::array<double, 9> sum{};
    for (int k = 0; k < n; ++k) {
        const Rotation3 r = sample_rotation(rng);
        for (int i = 0; i < 9; ++i) sum[i] += r.a[i];
    }
    const double bound = 3.0 * std::sqrt(1.0 / 3.0 / n);
    for (double s : sum) CHECK(std::abs(s / n) <= bound);
}

TEST_CASE("Rotation3::from_matrix validation") {
    CHECK_NOTHROW(Rotation3::from_matrix(Mat3::identity()));
    Mat3 reflect = Mat3::identity();
    reflect(2, 2) = -1.0;
    CHECK_THROWS_AS(Rotation3::from_matrix(reflect), InputError);
    Mat3 scaled = Mat3::identity();
    scaled(0, 0) = 1.0 + 1e-9;
    CHECK_THROWS_AS(Rotation3::from_matrix(scaled), InputError);
}

TEST_CASE("condition_ratio") {
    CHECK(condition_ratio(SymMat3::identity()) == doctest::Approx(1.0));
    CHECK(condition_ratio(SymMat3::diag(1, 1, 100)) == doctest::Approx(100.0).epsilon(1e-14));
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 500; ++trial) {
        const SymMat3 s = oracle::random_sym(rng);
        const double c = std::normal_distribution<double>(0.0, 3.0)(rng);
        const double base = condition_ratio(expm_sym(s));
        CHECK(base >= 1.0);
        CHECK(oracle::rel_err(condition_ratio(expm_sym(s + c * SymMat3::identity())), base) <= 1e-12);
    }
}

TEST_CASE("conjugate matches explicit matrix products") {
    std::mt19937_64 rng(27);
    const SymMat3 s = oracle::random_sym(rng);
    const Rotation3 r = sample_rotation(rng);
    const oracle::M3 ref = oracle::mul(oracle::mul(oracle::to_m3(r), oracle::to_m3(s)),
                                       oracle::transpose(oracle::to_m3(r)));
    CHECK(oracle::frob_diff(oracle::to_m3(conjugate(r, s)), ref) <= 1e-14);
}
