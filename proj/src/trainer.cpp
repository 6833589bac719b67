#include "eqevid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "eqevid/errors.hpp"

namespace eqevid {

void TrainConfig::validate() const {
    if (!(optimizer.learning_rate > 0.0)) throw InputError("train: learning rate must be positive");
    if (epochs < 0) throw InputError("train: epochs must be non-negative");
    if (batch_size < 1) throw InputError("train: batch size must be at least 1");
    if (n_rbf < 1 || hidden < 1) throw InputError("train: n_rbf and hidden must be at least 1");
    if (!(optimizer.plateau_factor > 0.0 && optimizer.plateau_factor <= 1.0)) {
        throw InputError("train: plateau factor must lie in (0, 1]");
    }
    head.damper.validate();
}

namespace {

// Solve (A + ridge I) x = b for symmetric positive-definite A, row-major n x n.
std::vector<double> solve_ridge(std::vector<double> a, std::vector<double> b, int n) {
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += a[i * n + i];
    const double ridge = 1e-8 * (tr > 0.0 ? tr / n : 1.0);
    for (int i = 0; i < n; ++i) a[i * n + i] += ridge;
    for (int j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (int k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) throw NotPositiveDefinite("warm start: normal equations not positive definite");
        const double ljj = std::sqrt(d);
        a[j * n + j] = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / ljj;
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return b;
}

struct Adam {
    std::vector<double> m, v;
    long t = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& p, const std::vector<double>& g, const OptimizerConfig& o,
              double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
            v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
            const double mh = m[k] / c1;
            const double vh = v[k] / c2;
            p[k] -= lr * (mh / (std::sqrt(vh) + o.eps) + o.weight_decay * p[k]);
        }
    }
};

std::vector<ConfigFeatures> features_of(const std::vector<Configuration>& set, const RadialBasis& basis) {
    std::vector<ConfigFeatures> out;
    out.reserve(set.size());
    for (const Configuration& c : set) out.push_back(compute_features(c, basis));
    return out;
}

} // namespace

ModelParams initial_params(const std::vector<Configuration>& train, const TrainConfig& config) {
    std::mt19937_64 rng(config.seed);
    const RadialBasis basis{config.n_rbf, config.cutoff};
    ModelParams params = ModelParams::initialize(basis, config.hidden, rng, config.tensor_init_scale);
    if (!config.warm_start || train.empty()) return params;

    const int n = basis.n_rbf;
    std::vector<std::size_t> pick(train.size());
    std::uniform_int_distribution<std::size_t> draw(0, train.size() - 1);
    for (auto& p : pick) p = draw(rng);

    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0), b(n, 0.0);
    std::vector<ConfigFeatures> feats;
    feats.reserve(pick.size());
    for (std::size_t idx : pick) {
        feats.push_back(compute_features(train[idx], basis));
        const ConfigFeatures& f = feats.back();
        const Configuration& c = train[idx];
        for (std::size_t i = 0; i < c.size(); ++i) {
            const auto& fb = f.atoms[i].force_basis;
            for (int k = 0; k < n; ++k) {
                b[k] += dot(fb[k], c.forces[i]);
                for (int l = 0; l < n; ++l) a[k * n + l] += dot(fb[k], fb[l]);
            }
        }
    }
    params.energy_w = solve_ridge(std::move(a), std::move(b), n);

    // Start the isotropic channel at the residual scale so the first steps
    // are not spent moving the bias.
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < pick.size(); ++c) {
        const ModelOutputs out = predict(feats[c], params);
        for (std::size_t i = 0; i < out.heads.size(); ++i) {
            const Vec3 r = train[pick[c]].forces[i] - out.heads[i].gamma;
            sq += dot(r, r);
            ++count;
        }
    }
    if (count > 0 && sq > 0.0) {
        const EvidenceScalars ev = constrain_scalars(0.0, 0.0);
        const double dof = ev.nu - kDim + 1.0;
        // covariance of St_dof(0, c Sigma0) is c dof/(dof-2) Sigma0
        const double spread = ev.nu * (ev.kappa + 1.0) / (ev.kappa * dof) * dof / (dof - 2.0);
        params.iso_bias = std::sqrt(3.0) * std::log(sq / (3.0 * count) / spread);
    }
    return params;
}

double mean_loss(const std::vector<ConfigFeatures>& features,
                 const std::vector<Configuration>& configs, const ModelParams& params,
                 const TrainConfig& config) {
    double acc = 0.0;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        const ModelOutputs out = predict(features[c], params);
        const LossBreakdown lb = total_loss(configs[c].forces, configs[c].energy, out.energy,
                                            out.heads, config.weights, config.head);
        acc += lb.total;
    }
    return configs.empty() ? 0.0 : acc / static_cast<double>(configs.size());
}

TrainResult train(const std::vector<Configuration>& train_set,
                  const std::vector<Configuration>& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) throw InputError("train: empty training set");

    TrainResult result;
    result.params = initial_params(train_set, config);
    ModelParams& params = result.params;
    RunReport& report = result.report;

    const std::vector<ConfigFeatures> train_feats = features_of(train_set, params.basis);
    const std::vector<ConfigFeatures> val_feats = features_of(val_set, params.basis);

    std::vector<double> flat = params.flatten();
    std::vector<double> grad(flat.size());
    Adam adam(flat.size());
    double lr = config.optimizer.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    // Separate stream from initialization so the batch order does not shift
    // when the model size changes.
    std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    auto fail = [&](const NumericalError& e) {
        report.failure = TrainingFailure{report.steps, e.failure_class(), e.what()};
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            if (config.max_steps > 0 && report.steps >= config.max_steps) break;
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            ConditionRecord cond{report.steps, 0.0, std::numeric_limits<double>::infinity(), 0.0};
            std::size_t n_cond = 0;
            try {
                for (std::size_t b = start; b < stop; ++b) {
                    const std::size_t c = order[b];
                    const ModelOutputs out = predict(train_feats[c], params);
                    LossBreakdown lb = total_loss(train_set[c].forces, train_set[c].energy, out.energy,
                                                  out.heads, config.weights, config.head);
                    for (const SpdMat3& s : lb.sigma0) {
                        const double ratio = condition_ratio(s);
                        cond.mean += ratio;
                        cond.min = std::min(cond.min, ratio);
                        cond.max = std::max(cond.max, ratio);
                        ++n_cond;
                    }
                    if (!std::isfinite(lb.total)) throw NonFiniteInput("train: non-finite loss");
                    batch_loss += lb.total * inv_b;
                    for (auto& g : lb.head_grads) {
                        g.gamma *= inv_b;
                        g.nu_hat *= inv_b;
                        g.kappa_hat *= inv_b;
                        g.z.s *= inv_b;
                        for (double& t : g.z.t) t *= inv_b;
                    }
                    accumulate_param_grad(train_feats[c], params, lb.energy_grad * inv_b,
                                          lb.head_grads, grad);
                }
            } catch (const NumericalError& e) {
                if (n_cond > 0) {
                    cond.mean /= static_cast<double>(n_cond);
                    report.condition.push_back(cond);
                }
                fail(e);
                return result;
            }
            cond.mean /= static_cast<double>(n_cond);
            report.condition.push_back(cond);

            adam.step(flat, grad, config.optimizer, lr);
            params.assign(flat);
            ++report.steps;
            epoch_loss += batch_loss;
            ++batches;
        }
        if (batches == 0) break;

        EpochRecord rec{epoch, epoch_loss / static_cast<double>(batches), 0.0, lr};
        if (!val_set.empty()) {
            try {
                rec.val_loss = mean_loss(val_feats, val_set, params, config);
            } catch (const NumericalError& e) {
                report.epochs.push_back(rec);
                fail(e);
                return result;
            }
            if (rec.val_loss < best_val) {
                best_val = rec.val_loss;
                since_best = 0;
            } else if (++since_best >= config.optimizer.plateau_patience) {
                lr *= config.optimizer.plateau_factor;
                since_best = 0;
            }
        }
        report.epochs.push_back(rec);
    }
    return result;
}

} // namespace eqevid
