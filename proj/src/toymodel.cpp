#include "eqevid/toymodel.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>

#include "eqevid/errors.hpp"

namespace eqevid {

void Configuration::validate() const {
    const std::size_t n = positions.size();
    if (species.size() != n || forces.size() != n) {
        throw InputError("configuration: species/positions/forces lengths differ");
    }
    if (noise_cov && noise_cov->size() != n) {
        throw InputError("configuration: noise_cov length differs from atom count");
    }
    if (!std::isfinite(energy)) throw InputError("configuration: non-finite energy");
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_finite(positions[i]) || !is_finite(forces[i])) {
            throw InputError("configuration: non-finite position or force");
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (norm(positions[i] - positions[j]) < 0.1) {
                throw InputError("configuration: atoms closer than 0.1");
            }
        }
    }
}

double cosine_cutoff(double r, double cutoff) {
    if (r >= cutoff) return 0.0;
    return 0.5 * (std::cos(std::numbers::pi * r / cutoff) + 1.0);
}

double cosine_cutoff_deriv(double r, double cutoff) {
    if (r >= cutoff) return 0.0;
    return -0.5 * std::numbers::pi / cutoff * std::sin(std::numbers::pi * r / cutoff);
}

double RadialBasis::center(int k) const {
    return n_rbf == 1 ? 0.5 * cutoff : cutoff * k / (n_rbf - 1);
}

double RadialBasis::width() const { return n_rbf == 1 ? cutoff : cutoff / (n_rbf - 1); }

void RadialBasis::eval(double r, std::span<double> values, std::span<double> derivs) const {
    const double fc = cosine_cutoff(r, cutoff);
    const double dfc = cosine_cutoff_deriv(r, cutoff);
    const double w = width();
    for (int k = 0; k < n_rbf; ++k) {
        const double u = (r - center(k)) / w;
        const double gauss = std::exp(-u * u);
        values[k] = gauss * fc;
        derivs[k] = gauss * (dfc - 2.0 * u / w * fc);
    }
}

double DenseBlock::forward(std::span<const double> x, std::span<double> hidden_out) const {
    double out = b2;
    for (int h = 0; h < hidden; ++h) {
        double a = b1[h];
        for (int k = 0; k < n_in; ++k) a += w1[h * n_in + k] * x[k];
        hidden_out[h] = std::tanh(a);
        out += w2[h] * hidden_out[h];
    }
    return out;
}

void DenseBlock::backward(std::span<const double> x, std::span<const double> hidden_act,
                          double upstream, std::span<double> grad) const {
    const std::size_t off_b1 = w1.size();
    const std::size_t off_w2 = off_b1 + b1.size();
    const std::size_t off_b2 = off_w2 + w2.size();
    for (int h = 0; h < hidden; ++h) {
        const double act = hidden_act[h];
        grad[off_w2 + h] += upstream * act;
        const double da = upstream * w2[h] * (1.0 - act * act);
        grad[off_b1 + h] += da;
        for (int k = 0; k < n_in; ++k) grad[h * n_in + k] += da * x[k];
    }
    grad[off_b2] += upstream;
}

namespace {

DenseBlock make_block(int n_in, int hidden, std::mt19937_64& rng) {
    DenseBlock b;
    b.n_in = n_in;
    b.hidden = hidden;
    std::normal_distribution<double> w1d(0.0, 1.0 / std::sqrt(static_cast<double>(n_in)));
    std::normal_distribution<double> w2d(0.0, 0.1 / std::sqrt(static_cast<double>(hidden)));
    b.w1.resize(static_cast<std::size_t>(hidden) * n_in);
    for (double& w : b.w1) w = w1d(rng);
    b.b1.assign(hidden, 0.0);
    b.w2.resize(hidden);
    for (double& w : b.w2) w = w2d(rng);
    return b;
}

void append(std::vector<double>& out, const DenseBlock& b) {
    out.insert(out.end(), b.w1.begin(), b.w1.end());
    out.insert(out.end(), b.b1.begin(), b.b1.end());
    out.insert(out.end(), b.w2.begin(), b.w2.end());
    out.push_back(b.b2);
}

std::size_t take(std::span<const double> flat, std::size_t pos, DenseBlock& b) {
    auto copy = [&](std::vector<double>& v) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), v.size(), v.begin());
        pos += v.size();
    };
    copy(b.w1);
    copy(b.b1);
    copy(b.w2);
    b.b2 = flat[pos++];
    return pos;
}

} // namespace

ModelParams ModelParams::initialize(const RadialBasis& basis, int hidden, std::mt19937_64& rng,
                                    double tensor_scale) {
    if (basis.n_rbf < 1) throw InputError("model: n_rbf must be at least 1");
    ModelParams p;
    p.basis = basis;
    const int n = basis.n_rbf;
    std::normal_distribution<double> small(0.0, 0.1);
    p.energy_w.resize(n);
    for (double& w : p.energy_w) w = small(rng);
    p.iso_w.resize(n);
    for (double& w : p.iso_w) w = 0.1 * small(rng);
    p.iso_bias = 0.0;
    p.aniso_w.resize(n);
    for (double& w : p.aniso_w) w = tensor_scale * small(rng);
    p.nu_block = make_block(n, hidden, rng);
    p.kappa_block = make_block(n, hidden, rng);
    return p;
}

std::size_t ModelParams::param_count() const {
    return energy_w.size() + iso_w.size() + 1 + aniso_w.size() + nu_block.param_count() +
           kappa_block.param_count();
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    out.insert(out.end(), energy_w.begin(), energy_w.end());
    out.insert(out.end(), iso_w.begin(), iso_w.end());
    out.push_back(iso_bias);
    out.insert(out.end(), aniso_w.begin(), aniso_w.end());
    append(out, nu_block);
    append(out, kappa_block);
    return out;
}

void ModelParams::assign(std::span<const double> flat) {
    if (flat.size() != param_count()) throw InputError("model: parameter vector size mismatch");
    std::size_t pos = 0;
    auto copy = [&](std::vector<double>& v) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), v.size(), v.begin());
        pos += v.size();
    };
    copy(energy_w);
    copy(iso_w);
    iso_bias = flat[pos++];
    copy(aniso_w);
    pos = take(flat, pos, nu_block);
    take(flat, pos, kappa_block);
}

ConfigFeatures compute_features(const Configuration& config, const RadialBasis& basis) {
    const std::size_t n_atoms = config.size();
    const int n = basis.n_rbf;
    ConfigFeatures f;
    f.energy_basis.assign(n, 0.0);
    f.atoms.resize(n_atoms);
    for (AtomFeatures& a : f.atoms) {
        a.g.assign(n, 0.0);
        a.force_basis.assign(n, Vec3{});
        a.tensor_basis.assign(n, L2Vec{});
    }
    std::vector<double> val(n), der(n);
    for (std::size_t i = 0; i < n_atoms; ++i) {
        for (std::size_t j = i + 1; j < n_atoms; ++j) {
            const Vec3 d = config.positions[i] - config.positions[j];
            const double r = norm(d);
            if (r >= basis.cutoff) continue;
            basis.eval(r, val, der);
            const Vec3 e = (1.0 / r) * d;  // unit vector j -> i
            const L2Vec dir = sym_to_coeffs(outer(e)).t;  // the I/3 part has no l=2 component
            AtomFeatures& ai = f.atoms[i];
            AtomFeatures& aj = f.atoms[j];
            for (int k = 0; k < n; ++k) {
                f.energy_basis[k] += val[k];
                ai.g[k] += val[k];
                aj.g[k] += val[k];
                ai.force_basis[k] -= der[k] * e;
                aj.force_basis[k] += der[k] * e;
                for (int c = 0; c < 5; ++c) {
                    ai.tensor_basis[k][c] += val[k] * dir[c];
                    aj.tensor_basis[k][c] += val[k] * dir[c];
                }
            }
        }
    }
    for (AtomFeatures& a : f.atoms) {
        a.dense_input.resize(n);
        for (int k = 0; k < n; ++k) a.dense_input[k] = std::log1p(a.g[k]);
    }
    return f;
}

ModelOutputs predict(const ConfigFeatures& features, const ModelParams& params) {
    const int n = params.basis.n_rbf;
    ModelOutputs out;
    for (int k = 0; k < n; ++k) out.energy += params.energy_w[k] * features.energy_basis[k];
    out.heads.resize(features.atoms.size());
    std::vector<double> hidden(std::max(params.nu_block.hidden, params.kappa_block.hidden));
    for (std::size_t i = 0; i < features.atoms.size(); ++i) {
        const AtomFeatures& a = features.atoms[i];
        RawHeadOutputs& h = out.heads[i];
        h.z.s = params.iso_bias;
        for (int k = 0; k < n; ++k) {
            h.gamma += params.energy_w[k] * a.force_basis[k];
            h.z.s += params.iso_w[k] * a.g[k];
            for (int c = 0; c < 5; ++c) h.z.t[c] += params.aniso_w[k] * a.tensor_basis[k][c];
        }
        h.nu_hat = params.nu_block.forward(a.dense_input, hidden);
        h.kappa_hat = params.kappa_block.forward(a.dense_input, hidden);
    }
    return out;
}

void accumulate_param_grad(const ConfigFeatures& features, const ModelParams& params,
                           double energy_grad, std::span<const RawHeadGrad> head_grads,
                           std::span<double> grad) {
    const int n = params.basis.n_rbf;
    const std::size_t off_iso = static_cast<std::size_t>(n);
    const std::size_t off_bias = off_iso + n;
    const std::size_t off_aniso = off_bias + 1;
    const std::size_t off_nu = off_aniso + n;
    const std::size_t off_kappa = off_nu + params.nu_block.param_count();
    const std::size_t end = off_kappa + params.kappa_block.param_count();

    for (int k = 0; k < n; ++k) grad[k] += energy_grad * features.energy_basis[k];
    std::vector<double> hidden(std::max(params.nu_block.hidden, params.kappa_block.hidden));
    for (std::size_t i = 0; i < features.atoms.size(); ++i) {
        const AtomFeatures& a = features.atoms[i];
        const RawHeadGrad& g = head_grads[i];
        for (int k = 0; k < n; ++k) {
            grad[k] += dot(g.gamma, a.force_basis[k]);
            grad[off_iso + k] += g.z.s * a.g[k];
            double tk = 0.0;
            for (int c = 0; c < 5; ++c) tk += g.z.t[c] * a.tensor_basis[k][c];
            grad[off_aniso + k] += tk;
        }
        grad[off_bias] += g.z.s;
        params.nu_block.forward(a.dense_input, hidden);
        params.nu_block.backward(a.dense_input, hidden, g.nu_hat,
                                 grad.subspan(off_nu, params.nu_block.param_count()));
        params.kappa_block.forward(a.dense_input, hidden);
        params.kappa_block.backward(a.dense_input, hidden, g.kappa_hat,
                                    grad.subspan(off_kappa, end - off_kappa));
    }
}

double energy(const Configuration& config, const ModelParams& params) {
    return predict(compute_features(config, params.basis), params).energy;
}

std::vector<Vec3> forces(const Configuration& config, const ModelParams& params) {
    const ModelOutputs out = predict(compute_features(config, params.basis), params);
    std::vector<Vec3> f;
    f.reserve(out.heads.size());
    for (const RawHeadOutputs& h : out.heads) f.push_back(h.gamma);
    return f;
}

std::vector<RawHeadOutputs> head_outputs(const Configuration& config, const ModelParams& params) {
    return predict(compute_features(config, params.basis), params).heads;
}

double lj_pair_energy(double r, double cutoff) {
    if (r >= cutoff) return 0.0;
    auto lj = [](double x) {
        const double inv6 = 1.0 / std::pow(x, 6);
        return 4.0 * (inv6 * inv6 - inv6);
    };
    return lj(r) - lj(cutoff);
}

double lj_pair_deriv(double r, double cutoff) {
    if (r >= cutoff) return 0.0;
    const double inv6 = 1.0 / std::pow(r, 6);
    return 4.0 * (-12.0 * inv6 * inv6 + 6.0 * inv6) / r;
}

double noise_weight(double r, double cutoff) {
    return std::exp(-(r - 1.0) / 0.5) * cosine_cutoff(r, cutoff);
}

void DatasetSpec::validate() const {
    if (n_configs < 1 || min_atoms < 1 || max_atoms < min_atoms) {
        throw InputError("dataset spec: need n_configs >= 1 and 1 <= min_atoms <= max_atoms");
    }
    if (!(rho_min > 0.0 && rho_max >= rho_min && min_separation > 0.0 && cutoff > 0.0)) {
        throw InputError("dataset spec: radii, separation and cutoff must be positive");
    }
    if (!(sigma_iso >= 0.0 && sigma_aniso >= 0.0)) {
        throw InputError("dataset spec: noise scales must be non-negative");
    }
}

Configuration label_configuration(std::vector<Vec3> positions, const DatasetSpec& spec) {
    Configuration c;
    const std::size_t n = positions.size();
    c.species.assign(n, 1);
    c.positions = std::move(positions);
    c.forces.assign(n, Vec3{});
    std::vector<SymMat3> cov(n, spec.sigma_iso * spec.sigma_iso * SymMat3::identity());
    const double aniso2 = spec.sigma_aniso * spec.sigma_aniso;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec3 d = c.positions[i] - c.positions[j];
            const double r = norm(d);
            if (r >= spec.cutoff) continue;
            const Vec3 e = (1.0 / r) * d;
            c.energy += lj_pair_energy(r, spec.cutoff);
            const Vec3 f = -lj_pair_deriv(r, spec.cutoff) * e;
            c.forces[i] += f;
            c.forces[j] -= f;
            const SymMat3 contrib = (aniso2 * noise_weight(r, spec.cutoff)) * outer(e);
            cov[i] += contrib;
            cov[j] += contrib;
        }
    }
    c.noise_cov = std::move(cov);
    return c;
}

void add_label_noise(Configuration& config, std::mt19937_64& rng) {
    if (!config.noise_cov) return;
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t i = 0; i < config.size(); ++i) {
        const SymMat3& cov = (*config.noise_cov)[i];
        const Vec3 g{n01(rng), n01(rng), n01(rng)};
        if (frobenius_norm(cov) == 0.0) continue;
        // Symmetric square root; cov may be only semidefinite.
        const EigenSym3 e = eig_sym3(cov);
        Vec3 noise;
        for (int k = 0; k < 3; ++k) {
            const Vec3 v{e.vectors(0, k), e.vectors(1, k), e.vectors(2, k)};
            noise += (std::sqrt(std::max(e.values[k], 0.0)) * dot(v, g)) * v;
        }
        config.forces[i] += noise;
    }
}

std::vector<Configuration> generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> atoms(spec.min_atoms, spec.max_atoms);
    std::uniform_real_distribution<double> rho(spec.rho_min, spec.rho_max);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    std::vector<Configuration> out;
    out.reserve(spec.n_configs);
    for (int c = 0; c < spec.n_configs; ++c) {
        const int n = atoms(rng);
        const double radius = rho(rng) * std::cbrt(static_cast<double>(n));
        std::vector<Vec3> pos;
        pos.reserve(n);
        int attempts = 0;
        while (static_cast<int>(pos.size()) < n) {
            if (++attempts > 10000) {
                throw InputError("generate_dataset: rejection sampling failed after 10^4 attempts");
            }
            const Vec3 p{unit(rng), unit(rng), unit(rng)};
            if (dot(p, p) > 1.0) continue;
            const Vec3 x = radius * p;
            const bool clear = std::all_of(pos.begin(), pos.end(), [&](const Vec3& q) {
                return norm(x - q) >= spec.min_separation;
            });
            if (clear) {
                pos.push_back(x);
                attempts = 0;
            }
        }
        Configuration cfg = label_configuration(std::move(pos), spec);
        add_label_noise(cfg, rng);
        out.push_back(std::move(cfg));
    }
    return out;
}

double mean_nn_distance(const Configuration& config) {
    const std::size_t n = config.size();
    if (n < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) best = std::min(best, norm(config.positions[i] - config.positions[j]));
        }
        acc += best;
    }
    return acc / static_cast<double>(n);
}

DatasetSplit ood_split(const std::vector<Configuration>& dataset, const SplitRule& rule) {
    if (dataset.empty()) throw InputError("ood_split: empty dataset");
    std::vector<double> desc(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) desc[i] = mean_nn_distance(dataset[i]);

    DatasetSplit split;
    if (rule.threshold) {
        split.threshold = *rule.threshold;
    } else {
        std::vector<double> sorted = desc;
        std::sort(sorted.begin(), sorted.end());
        const auto k = static_cast<std::size_t>(rule.ood_fraction * static_cast<double>(sorted.size()));
        split.threshold = sorted[std::min(k, sorted.size() - 1)];
    }

    std::vector<std::size_t> in_dist;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (desc[i] < split.threshold) split.test_ood.push_back(dataset[i]);
        else in_dist.push_back(i);
    }
    std::mt19937_64 rng(rule.seed);
    std::shuffle(in_dist.begin(), in_dist.end(), rng);
    const std::size_t m = in_dist.size();
    const auto n_train = static_cast<std::size_t>(std::llround(rule.train_fraction * static_cast<double>(m)));
    const auto n_val = static_cast<std::size_t>(std::llround(rule.val_fraction * static_cast<double>(m)));
    for (std::size_t k = 0; k < m; ++k) {
        const Configuration& c = dataset[in_dist[k]];
        if (k < n_train) split.train.push_back(c);
        else if (k < n_train + n_val) split.val.push_back(c);
        else split.test_id.push_back(c);
    }
    if (split.train.empty() || split.val.empty() || split.test_id.empty() || split.test_ood.empty()) {
        throw InputError("ood_split: a slice is empty under this rule");
    }
    return split;
}

Configuration transform_configuration(const Configuration& config, const Mat3& rotation,
                                      const Vec3& translation) {
    Configuration out = config;
    for (std::size_t i = 0; i < config.size(); ++i) {
        out.positions[i] = rotation * config.positions[i] + translation;
        out.forces[i] = rotation * config.forces[i];
    }
    if (config.noise_cov) {
        for (auto& c : *out.noise_cov) c = conjugate(rotation, c);
    }
    return out;
}

} // namespace eqevid
