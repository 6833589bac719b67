#pragma once

// Pairwise radial force field with an exactly equivariant evidential head,
// plus the synthetic Lennard-Jones dataset it is trained on.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "eqevid/evidential.hpp"
#include "eqevid/irreps.hpp"
#include "eqevid/linalg3.hpp"

namespace eqevid {

struct Configuration {
    std::vector<int> species;
    std::vector<Vec3> positions;
    double energy = 0.0;
    std::vector<Vec3> forces;
    std::optional<std::vector<SymMat3>> noise_cov;

    std::size_t size() const { return positions.size(); }
    /// Throws InputError on length mismatch, non-finite values or atoms closer than 0.1.
    void validate() const;
};

/// Gaussian radial basis on [0, cutoff] times a cosine envelope; values and
/// first derivatives vanish at r >= cutoff.
struct RadialBasis {
    int n_rbf = 16;
    double cutoff = 5.0;

    double center(int k) const;
    double width() const;
    /// values[k] and derivs[k] for k < n_rbf.
    void eval(double r, std::span<double> values, std::span<double> derivs) const;
};

double cosine_cutoff(double r, double cutoff);
double cosine_cutoff_deriv(double r, double cutoff);

/// One-hidden-layer tanh network mapping invariant features to a scalar.
struct DenseBlock {
    int n_in = 0;
    int hidden = 0;
    std::vector<double> w1;  // hidden x n_in, row-major
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    double forward(std::span<const double> x, std::span<double> hidden_out) const;
    /// Accumulates d/dparams of `upstream * output` into grad (same layout as flatten).
    void backward(std::span<const double> x, std::span<const double> hidden_act, double upstream,
                  std::span<double> grad) const;
    std::size_t param_count() const { return w1.size() + b1.size() + w2.size() + 1; }
};

struct ModelParams {
    RadialBasis basis;
    std::vector<double> energy_w;  // pair energy phi(r) = sum_k w_k b_k(r)
    std::vector<double> iso_w;     // s_i = iso_bias + sum_k iso_w_k g_ik
    double iso_bias = 0.0;
    std::vector<double> aniso_w;   // t_i = sum_k aniso_w_k T_ik
    DenseBlock nu_block;
    DenseBlock kappa_block;

    static ModelParams initialize(const RadialBasis& basis, int hidden, std::mt19937_64& rng,
                                  double tensor_scale = 1.0);

    std::size_t param_count() const;
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
};

/// Parameter-independent per-configuration quantities. Model outputs are
/// linear maps of these (except the two dense blocks).
struct AtomFeatures {
    std::vector<double> g;             // sum_j b_k(r_ij)
    std::vector<double> dense_input;   // log1p(g)
    std::vector<Vec3> force_basis;     // -d/dx_i sum_pairs b_k(r)
    std::vector<L2Vec> tensor_basis;   // l=2 coefficients of sum_j b_k(r_ij) (e e^T - I/3)
};

struct ConfigFeatures {
    std::vector<double> energy_basis;  // sum_pairs b_k(r)
    std::vector<AtomFeatures> atoms;
};

ConfigFeatures compute_features(const Configuration& config, const RadialBasis& basis);

struct ModelOutputs {
    double energy = 0.0;
    std::vector<RawHeadOutputs> heads;
};

ModelOutputs predict(const ConfigFeatures& features, const ModelParams& params);

/// Accumulate d loss / d params into grad, given d loss / d (energy, heads).
void accumulate_param_grad(const ConfigFeatures& features, const ModelParams& params,
                           double energy_grad, std::span<const RawHeadGrad> head_grads,
                           std::span<double> grad);

double energy(const Configuration& config, const ModelParams& params);
std::vector<Vec3> forces(const Configuration& config, const ModelParams& params);
std::vector<RawHeadOutputs> head_outputs(const Configuration& config, const ModelParams& params);

/// Ground-truth label potential 4(r^-12 - r^-6), truncated and shifted at the cutoff.
double lj_pair_energy(double r, double cutoff);
double lj_pair_deriv(double r, double cutoff);

/// Weight of neighbour j in the anisotropic label-noise covariance.
double noise_weight(double r, double cutoff);

struct DatasetSpec {
    int n_configs = 2000;
    int min_atoms = 8;
    int max_atoms = 32;
    // Ball radius is rho * n_atoms^(1/3) with rho uniform in [rho_min, rho_max].
    double rho_min = 0.85;
    double rho_max = 1.25;
    double min_separation = 0.8;
    double sigma_iso = 0.3;
    double sigma_aniso = 1.0;
    double cutoff = 5.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Exact labels, noise-free forces and the per-atom noise covariance for a
/// set of positions.
Configuration label_configuration(std::vector<Vec3> positions, const DatasetSpec& spec);

/// Throws InputError when rejection sampling fails after 10^4 attempts.
std::vector<Configuration> generate_dataset(const DatasetSpec& spec);

/// Adds N(0, noise_cov_i) to every force of a labelled configuration.
void add_label_noise(Configuration& config, std::mt19937_64& rng);

/// Mean nearest-neighbour distance.
double mean_nn_distance(const Configuration& config);

struct SplitRule {
    double ood_fraction = 0.1;        // used when threshold is unset
    std::optional<double> threshold;  // descriptor < threshold goes out-of-distribution
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct DatasetSplit {
    std::vector<Configuration> train, val, test_id, test_ood;
    double threshold = 0.0;
};

/// Throws InputError when any slice is empty.
DatasetSplit ood_split(const std::vector<Configuration>& dataset, const SplitRule& rule);

Configuration transform_configuration(const Configuration& config, const Mat3& rotation,
                                      const Vec3& translation = {});

} // namespace eqevid
