#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "eqevid/errors.hpp"
#include "eqevid/evidential.hpp"
#include "eqevid/irreps.hpp"
#include "eqevid/toymodel.hpp"
#include "oracles.hpp"

using namespace eqevid;

namespace {

ModelParams test_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams p = ModelParams::initialize(RadialBasis{16, 5.0}, 8, rng, 1.0);
    std::normal_distribution<double> n(0.0, 0.3);
    for (double& w : p.energy_w) w = n(rng);
    for (double& w : p.iso_w) w = n(rng);
    for (double& w : p.aniso_w) w = n(rng);
    p.iso_bias = 0.2;
    return p;
}

Configuration random_cluster(std::mt19937_64& rng, int n_atoms) {
    DatasetSpec spec;
    spec.n_configs = 1;
    spec.min_atoms = spec.max_atoms = n_atoms;
    spec.seed = rng();
    return generate_dataset(spec).front();
}

/// Independent evaluation of basis function k.
double basis_oracle(int k, double r, int n_rbf, double rc) {
    if (r >= rc) return 0.0;
    const double c = rc * k / (n_rbf - 1);
    const double w = rc / (n_rbf - 1);
    return std::exp(-((r - c) / w) * ((r - c) / w)) * 0.5 * (std::cos(std::numbers::pi * r / rc) + 1.0);
}

double pair_phi(const ModelParams& p, double r) {
    double e = 0.0;
    for (int k = 0; k < p.basis.n_rbf; ++k) e += p.energy_w[k] * basis_oracle(k, r, p.basis.n_rbf, p.basis.cutoff);
    return e;
}

double max_abs_diff(const RawHeadOutputs& a, const RawHeadOutputs& b) {
    double m = std::max({std::abs(a.nu_hat - b.nu_hat), std::abs(a.kappa_hat - b.kappa_hat), std::abs(a.z.s - b.z.s)});
    for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(a.gamma[k] - b.gamma[k]));
    for (int k = 0; k < 5; ++k) m = std::max(m, std::abs(a.z.t[k] - b.z.t[k]));
    return m;
}

} // namespace

TEST_CASE("radial basis vanishes beyond the cutoff with matching derivatives") {
    const RadialBasis b{16, 5.0};
    std::vector<double> v(16), d(16);
    for (double r : {5.0, 5.3, 12.0}) {
        b.eval(r, v, d);
        for (int k = 0; k < 16; ++k) {
            CHECK(v[k] == 0.0);
            CHECK(d[k] == 0.0);
        }
    }
    b.eval(5.0 - 1e-7, v, d);
    for (int k = 0; k < 16; ++k) {
        CHECK(std::abs(v[k]) <= 1e-12);
        CHECK(std::abs(d[k]) <= 1e-6);
    }
    std::vector<double> vp(16), vm(16), tmp(16);
    const double h = 1e-6;
    for (double r = 0.3; r < 4.99; r += 0.137) {
        b.eval(r, v, d);
        b.eval(r + h, vp, tmp);
        b.eval(r - h, vm, tmp);
        for (int k = 0; k < 16; ++k) {
            CHECK(std::abs(v[k] - basis_oracle(k, r, 16, 5.0)) <= 1e-15);
            CHECK(std::abs(d[k] - (vp[k] - vm[k]) / (2 * h)) <= 1e-8);
        }
    }
}

TEST_CASE("energy examples") {
    const ModelParams p = test_params(81);
    Configuration single;
    single.species = {1};
    single.positions = {{0.3, -0.2, 1.0}};
    single.forces = {{0, 0, 0}};
    CHECK(energy(single, p) == 0.0);

    Configuration pair;
    pair.species = {1, 1};
    pair.positions = {{0, 0, 0}, {0.6, 1.1, -0.4}};
    pair.forces = {{}, {}};
    CHECK(energy(pair, p) == doctest::Approx(pair_phi(p, norm(pair.positions[1]))).epsilon(1e-14));
}

TEST_CASE("energy is invariant under rotation and translation") {
    std::mt19937_64 rng(82);
    const ModelParams p = test_params(83);
    for (int trial = 0; trial < 30; ++trial) {
        const Configuration c = random_cluster(rng, 6 + trial % 10);
        const Configuration moved = transform_configuration(c, sample_rotation(rng), oracle::random_vec(rng, 5.0));
        const double e = energy(c, p);
        CHECK(std::abs(energy(moved, p) - e) <= 1e-12 * std::max(1.0, std::abs(e)));
    }
}

TEST_CASE("forces are the negative energy gradient and sum to zero") {
    std::mt19937_64 rng(84);
    const ModelParams p = test_params(85);
    const double h = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        Configuration c = random_cluster(rng, 8 + trial);
        const std::vector<Vec3> f = forces(c, p);
        Vec3 net{};
        double scale = 0.0;
        for (const Vec3& fi : f) {
            net += fi;
            scale = std::max(scale, norm(fi));
        }
        CHECK(norm(net) <= 1e-12 * std::max(1.0, scale));
        for (std::size_t i = 0; i < c.size(); ++i) {
            for (int k = 0; k < 3; ++k) {
                const double x0 = c.positions[i][k];
                c.positions[i][k] = x0 + h;
                const double ep = energy(c, p);
                c.positions[i][k] = x0 - h;
                const double em = energy(c, p);
                c.positions[i][k] = x0;
                const double fd = -(ep - em) / (2 * h);
                CHECK(std::abs(f[i][k] - fd) <= 1e-6 * std::max({std::abs(fd), 1e-2 * scale, 1e-3}));
            }
        }
    }
}

TEST_CASE("two atoms at a stationary point of the pair potential feel no force") {
    ModelParams p = test_params(86);
    std::fill(p.energy_w.begin(), p.energy_w.end(), 0.0);
    p.energy_w[5] = 1.0;
    // phi = b_5 peaks slightly inside its center because of the envelope.
    const auto dphi = [&](double r) {
        const double h = 1e-7;
        return -(pair_phi(p, r + h) - pair_phi(p, r - h)) / (2 * h);
    };
    const double r_star = oracle::bisect(dphi, 0.0, 1.0, 2.0);
    Configuration c;
    c.species = {1, 1};
    c.positions = {{0, 0, 0}, {0, 0, r_star}};
    c.forces = {{}, {}};
    const std::vector<Vec3> f = forces(c, p);
    CHECK(norm(f[0]) <= 1e-8);
    CHECK(norm(f[1]) <= 1e-8);
}

TEST_CASE("forces are conservative along a closed path") {
    std::mt19937_64 rng(87);
    const ModelParams p = test_params(88);
    Configuration c = random_cluster(rng, 10);
    const Vec3 a = c.positions[0];
    const Vec3 b = a + Vec3{0.15, 0.05, -0.1};
    const Vec3 d = a + Vec3{-0.05, 0.12, 0.08};
    const std::array<Vec3, 4> corners{a, b, d, a};
    double work = 0.0;
    for (int leg = 0; leg < 3; ++leg) {
        const Vec3 from = corners[leg], to = corners[leg + 1];
        const auto integrand = [&](double s) {
            c.positions[0] = from + s * (to - from);
            return dot(forces(c, p)[0], to - from);
        };
        work += oracle::simpson(integrand, 0.0, 1.0, 400);
    }
    CHECK(std::abs(work) <= 1e-9);
}

TEST_CASE("isolated atom head outputs sit at their biases") {
    const ModelParams p = test_params(89);
    Configuration c;
    c.species = {1};
    c.positions = {{1, 2, 3}};
    c.forces = {{}};
    const RawHeadOutputs h = head_outputs(c, p).front();
    for (double t : h.z.t) CHECK(t == 0.0);
    CHECK(h.z.s == p.iso_bias);
    std::vector<double> zeros(16, 0.0), hidden(8);
    CHECK(h.nu_hat == p.nu_block.forward(zeros, hidden));
    CHECK(h.kappa_hat == p.kappa_block.forward(zeros, hidden));
    CHECK(norm(h.gamma) == 0.0);
}

TEST_CASE("head outputs transform equivariantly") {
    std::mt19937_64 rng(90);
    const ModelParams p = test_params(91);
    for (int trial = 0; trial < 30; ++trial) {
        const Configuration c = random_cluster(rng, 8 + trial % 12);
        const Rotation3 r = sample_rotation(rng);
        const Mat5 d = induced_rotation_l2(r);
        const std::vector<RawHeadOutputs> base = head_outputs(c, p);
        const std::vector<RawHeadOutputs> rot = head_outputs(transform_configuration(c, r), p);
        for (std::size_t i = 0; i < c.size(); ++i) {
            RawHeadOutputs expected = base[i];
            expected.gamma = r * base[i].gamma;
            expected.z.t = eqevid::apply(d, base[i].z.t);
            CHECK(max_abs_diff(rot[i], expected) <= 1e-12);
        }
        const std::vector<RawHeadOutputs> moved =
            head_outputs(transform_configuration(c, Mat3::identity(), oracle::random_vec(rng, 10.0)), p);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(max_abs_diff(moved[i], base[i]) <= 1e-12);
    }
}

TEST_CASE("collinear neighbours give a uniaxial tensor head") {
    ModelParams p = test_params(92);
    Configuration c;
    c.species = {1, 1, 1};
    c.positions = {{0, 0, 0}, {1.3, 0, 0}, {-1.7, 0, 0}};
    c.forces = {{}, {}, {}};
    IrrepCoeffs z = head_outputs(c, p).front().z;
    z.s = 0.0;
    const SymMat3 traceless = coeffs_to_sym(z);
    const double a = traceless.d1 / (2.0 / 3.0);
    CHECK(std::abs(a) > 1e-6);
    CHECK(oracle::frob_diff(traceless, a * SymMat3::diag(2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0)) <= 1e-14);
}

TEST_CASE("parameter gradients match finite differences") {
    std::mt19937_64 rng(93);
    const ModelParams base = test_params(94);
    const LossWeights w{1.0, 1.0, 0.1};
    const HeadConfig head{};
    const Configuration c = random_cluster(rng, 9);
    const ConfigFeatures f = compute_features(c, base.basis);
    const auto loss_at = [&](const ModelParams& p) {
        const ModelOutputs out = predict(f, p);
        return total_loss(c.forces, c.energy, out.energy, out.heads, w, head).total;
    };
    const ModelOutputs out = predict(f, base);
    const LossBreakdown lb = total_loss(c.forces, c.energy, out.energy, out.heads, w, head);
    std::vector<double> grad(base.param_count(), 0.0);
    accumulate_param_grad(f, base, lb.energy_grad, lb.head_grads, grad);

    const std::vector<double> flat = base.flatten();
    CHECK(flat.size() == base.param_count());
    const double h = 1e-6;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        ModelParams p = base;
        std::vector<double> x = flat;
        x[k] = flat[k] + h;
        p.assign(x);
        const double up = loss_at(p);
        x[k] = flat[k] - h;
        p.assign(x);
        const double dn = loss_at(p);
        const double fd = (up - dn) / (2 * h);
        const double floor = 1e-7 * std::max(1.0, std::abs(lb.total));
        CHECK_MESSAGE(std::abs(grad[k] - fd) <= 1e-5 * std::max({std::abs(fd), std::abs(grad[k]), floor}) + floor,
                      "parameter " << k << " analytic " << grad[k] << " fd " << fd);
    }
}

TEST_CASE("flatten and assign round trip") {
    const ModelParams p = test_params(95);
    ModelParams q = test_params(96);
    q.assign(p.flatten());
    CHECK(q.flatten() == p.flatten());
    CHECK_THROWS_AS(q.assign(std::vector<double>(3, 0.0)), InputError);
}

TEST_CASE("LJ labels are conservative") {
    std::mt19937_64 rng(97);
    DatasetSpec spec;
    spec.sigma_iso = spec.sigma_aniso = 0.0;
    Configuration c = random_cluster(rng, 12);
    const Configuration labelled = label_configuration(c.positions, spec);
    const double h = 1e-6;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            std::vector<Vec3> x = c.positions;
            x[i][k] += h;
            const double ep = label_configuration(x, spec).energy;
            x[i][k] -= 2 * h;
            const double em = label_configuration(x, spec).energy;
            const double fd = -(ep - em) / (2 * h);
            CHECK(std::abs(labelled.forces[i][k] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
    CHECK(lj_pair_energy(5.0, 5.0) == 0.0);
    CHECK(lj_pair_energy(std::pow(2.0, 1.0 / 6.0), 5.0) == doctest::Approx(-1.0 - 4.0 * (std::pow(5.0, -12) - std::pow(5.0, -6))));
    CHECK(std::abs(lj_pair_deriv(std::pow(2.0, 1.0 / 6.0), 5.0)) <= 1e-12);
}

TEST_CASE("noise covariance follows its definition") {
    std::mt19937_64 rng(98);
    DatasetSpec spec;
    const Configuration c = random_cluster(rng, 10);
    const Configuration labelled = label_configuration(c.positions, spec);
    REQUIRE(labelled.noise_cov.has_value());
    for (std::size_t i = 0; i < c.size(); ++i) {
        SymMat3 ref = (spec.sigma_iso * spec.sigma_iso) * SymMat3::identity();
        for (std::size_t j = 0; j < c.size(); ++j) {
            if (j == i) continue;
            const Vec3 d = c.positions[i] - c.positions[j];
            const double r = norm(d);
            if (r >= spec.cutoff) continue;
            const double wr = std::exp(-(r - 1.0) / 0.5) * 0.5 * (std::cos(std::numbers::pi * r / spec.cutoff) + 1.0);
            const Vec3 e = (1.0 / r) * d;
            ref += (spec.sigma_aniso * spec.sigma_aniso * wr) * outer(e);
        }
        CHECK(oracle::frob_diff((*labelled.noise_cov)[i], ref) <= 1e-12 * frobenius_norm(ref));
        CHECK_NOTHROW(factor_spd((*labelled.noise_cov)[i]));
    }
}

TEST_CASE("generate_dataset without noise reproduces the potential") {
    DatasetSpec spec;
    spec.n_configs = 20;
    spec.sigma_iso = spec.sigma_aniso = 0.0;
    spec.seed = 5;
    for (const Configuration& c : generate_dataset(spec)) {
        const Configuration ref = label_configuration(c.positions, spec);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.forces[i] == ref.forces[i]);
        CHECK(c.energy == ref.energy);
    }
}

TEST_CASE("generate_dataset is deterministic and respects its geometry") {
    DatasetSpec spec;
    spec.n_configs = 40;
    spec.seed = 17;
    const std::vector<Configuration> a = generate_dataset(spec);
    const std::vector<Configuration> b = generate_dataset(spec);
    REQUIRE(a.size() == 40);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].positions == b[k].positions);
        CHECK(a[k].forces == b[k].forces);
        CHECK(a[k].energy == b[k].energy);
        CHECK(a[k].size() >= 8);
        CHECK(a[k].size() <= 32);
        CHECK_NOTHROW(a[k].validate());
        for (std::size_t i = 0; i < a[k].size(); ++i)
            for (std::size_t j = i + 1; j < a[k].size(); ++j)
                CHECK(norm(a[k].positions[i] - a[k].positions[j]) >= spec.min_separation);
    }
    spec.seed = 18;
    CHECK(generate_dataset(spec).front().positions != a.front().positions);
}

TEST_CASE("generate_dataset reports impossible packing") {
    DatasetSpec spec;
    spec.n_configs = 1;
    spec.min_atoms = spec.max_atoms = 30;
    spec.rho_min = spec.rho_max = 0.1;
    CHECK_THROWS_AS(generate_dataset(spec), InputError);
}

TEST_CASE("empirical label noise matches the stored covariance") {
    std::mt19937_64 rng(99);
    DatasetSpec spec;
    const Configuration base = label_configuration(random_cluster(rng, 8).positions, spec);
    const int draws = 40000;
    std::vector<std::array<double, 6>> acc(base.size());
    for (int s = 0; s < draws; ++s) {
        Configuration c = base;
        add_label_noise(c, rng);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const Vec3 e = c.forces[i] - base.forces[i];
            acc[i][0] += e.x * e.x;
            acc[i][1] += e.y * e.y;
            acc[i][2] += e.z * e.z;
            acc[i][3] += e.x * e.y;
            acc[i][4] += e.x * e.z;
            acc[i][5] += e.y * e.z;
        }
    }
    for (std::size_t i = 0; i < base.size(); ++i) {
        const SymMat3& s = (*base.noise_cov)[i];
        const std::array<double, 6> truth{s.d1, s.d2, s.d3, s.o12, s.o13, s.o23};
        const std::array<std::pair<int, int>, 6> idx{{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};
        for (int k = 0; k < 6; ++k) {
            const auto [a, b] = idx[k];
            // Var of the product of two jointly Gaussian components: S_aa S_bb + S_ab^2.
            const double sd = std::sqrt((s(a, a) * s(b, b) + s(a, b) * s(a, b)) / draws);
            CHECK(std::abs(acc[i][k] / draws - truth[k]) <= 5.0 * sd);
        }
    }
}

TEST_CASE("ood_split partitions by nearest-neighbour distance") {
    DatasetSpec spec;
    spec.n_configs = 300;
    spec.seed = 3;
    const std::vector<Configuration> data = generate_dataset(spec);
    SplitRule rule;
    rule.seed = 4;
    const DatasetSplit s = ood_split(data, rule);
    const std::size_t in_dist = data.size() - s.test_ood.size();
    CHECK(s.test_ood.size() == 30);
    CHECK(s.train.size() + s.val.size() + s.test_id.size() == in_dist);
    CHECK(s.train.size() == static_cast<std::size_t>(std::llround(0.8 * in_dist)));
    CHECK(s.val.size() == static_cast<std::size_t>(std::llround(0.1 * in_dist)));
    double train_min = 1e300, ood_max = 0.0;
    for (const Configuration& c : s.train) train_min = std::min(train_min, mean_nn_distance(c));
    for (const Configuration& c : s.val) train_min = std::min(train_min, mean_nn_distance(c));
    for (const Configuration& c : s.test_id) train_min = std::min(train_min, mean_nn_distance(c));
    for (const Configuration& c : s.test_ood) ood_max = std::max(ood_max, mean_nn_distance(c));
    CHECK(ood_max < train_min);
    CHECK(ood_max < s.threshold);
    CHECK(train_min >= s.threshold);

    const DatasetSplit again = ood_split(data, rule);
    CHECK(again.train.front().positions == s.train.front().positions);

    SplitRule below = rule;
    below.threshold = 0.01;
    CHECK_THROWS_AS(ood_split(data, below), InputError);
    SplitRule above = rule;
    above.threshold = 100.0;
    CHECK_THROWS_AS(ood_split(data, above), InputError);
}

TEST_CASE("Configuration::validate") {
    Configuration c;
    c.species = {1, 1};
    c.positions = {{0, 0, 0}, {1, 0, 0}};
    c.forces = {{}, {}};
    CHECK_NOTHROW(c.validate());
    c.positions[1] = {0.05, 0, 0};
    CHECK_THROWS_AS(c.validate(), InputError);
    c.positions[1] = {1, 0, 0};
    c.forces.pop_back();
    CHECK_THROWS_AS(c.validate(), InputError);
    c.forces = {{}, {std::nan(""), 0, 0}};
    CHECK_THROWS_AS(c.validate(), InputError);
}
