#include "eqevid/evidential.hpp"

#include <cmath>
#include <numbers>

#include "eqevid/errors.hpp"
#include "eqevid/specfun.hpp"

namespace eqevid {

EvidenceScalars constrain_scalars(double nu_hat, double kappa_hat) {
    return {softplus(nu_hat) + (kDim + 2.0), softplus(kappa_hat) + kEvidenceEpsilon};
}

SpdMat3 build_sigma0(const IrrepCoeffs& z, const HeadConfig& head) {
    const IrrepCoeffs damped = head.damping ? damp_coeffs(z, head.damper) : z;
    return expm_sym(coeffs_to_sym(damped));
}

EvidentialOutput evaluate_head(const RawHeadOutputs& raw, const HeadConfig& head) {
    const EvidenceScalars ev = constrain_scalars(raw.nu_hat, raw.kappa_hat);
    return {raw.gamma, build_sigma0(raw.z, head), ev.nu, ev.kappa};
}

PredictiveT predictive(const EvidentialOutput& out) {
    const double dof = out.nu - kDim + 1.0;
    const double factor = out.nu * (out.kappa + 1.0) / (out.kappa * dof);
    return {dof, SpdMat3(factor * out.sigma0)};
}

UncertaintyDecomposition decompose_uncertainty(const EvidentialOutput& out) {
    const double ale = out.nu / (out.nu - kDim - 1.0);
    UncertaintyDecomposition u;
    u.u_ale = SpdMat3(ale * out.sigma0);
    u.u_epi = SpdMat3((ale / out.kappa) * out.sigma0);
    u.u_scalar = std::sqrt(trace(u.u_epi) / 3.0);
    return u;
}

namespace {

double nll_constant_terms(double nu, double kappa) {
    return ln_gamma(0.5 * (nu - kDim + 1.0)) - ln_gamma(0.5 * (nu + 1.0)) +
           0.5 * kDim * std::log(std::numbers::pi * nu * (1.0 + kappa) / kappa);
}

} // namespace

double nll(const Vec3& y, const EvidentialOutput& out) {
    const Cholesky3 l = factor_spd(out.sigma0);
    const double m = mahalanobis_sq(y - out.gamma, l);
    const double beta = out.kappa / (out.nu * (1.0 + out.kappa));
    return nll_constant_terms(out.nu, out.kappa) + 0.5 * logdet(l) +
           0.5 * (out.nu + 1.0) * std::log1p(beta * m);
}

double nll_logdet_form(const Vec3& y, const EvidentialOutput& out) {
    const double nu = out.nu;
    const double kappa = out.kappa;
    const SymMat3 psi = nu * out.sigma0;
    const SymMat3 updated = psi + (kappa / (1.0 + kappa)) * outer(y - out.gamma);
    const double det_psi = det(psi);
    const double det_updated = det(updated);
    if (!(det_psi > 0.0) || !(det_updated > 0.0)) {
        throw NotPositiveDefinite("nll_logdet_form: non-positive determinant");
    }
    return ln_gamma(0.5 * (nu - kDim + 1.0)) - ln_gamma(0.5 * (nu + 1.0)) +
           0.5 * kDim * std::log(std::numbers::pi * (1.0 + kappa) / kappa) -
           0.5 * nu * std::log(det_psi) + 0.5 * (nu + 1.0) * std::log(det_updated);
}

double reg_loss(const Vec3& y, const Vec3& gamma, double nu, double kappa) {
    return (nu + kappa) * norm(y - gamma);
}

AtomLoss loss_and_grad(const Vec3& y, const RawHeadOutputs& raw, const HeadConfig& head,
                       const LossWeights& weights) {
    const EvidenceScalars ev = constrain_scalars(raw.nu_hat, raw.kappa_hat);
    const double nu = ev.nu;
    const double kappa = ev.kappa;

    const IrrepCoeffs damped = head.damping ? damp_coeffs(raw.z, head.damper) : raw.z;
    const SymMat3 s = coeffs_to_sym(damped);
    const SpdMat3 sigma0 = expm_sym(s);
    const Cholesky3 l = factor_spd(sigma0);

    const Vec3 v = y - raw.gamma;
    const Vec3 pv = l.solve_upper(l.solve_lower(v));  // Sigma0^{-1} v
    const double m = dot(v, pv);
    const double beta = kappa / (nu * (1.0 + kappa));
    const double q = 1.0 + beta * m;
    const double half_nu1 = 0.5 * (nu + 1.0);
    const double vnorm = norm(v);

    AtomLoss out;
    out.sigma0 = sigma0;
    out.nll = nll_constant_terms(nu, kappa) + 0.5 * logdet(l) + half_nu1 * std::log(q);
    out.reg = (nu + kappa) * vnorm;
    const double wf = weights.forces;
    out.value = wf * (out.nll + weights.reg * out.reg);

    // d nll
    const double c_m = half_nu1 * beta / q;  // d nll / d M
    Vec3 g_gamma = (-2.0 * c_m) * pv;
    double g_nu = 0.5 * digamma(0.5 * (nu - kDim + 1.0)) - 0.5 * digamma(0.5 * (nu + 1.0)) +
                  0.5 * kDim / nu + 0.5 * std::log(q) - half_nu1 * (m / q) * beta / nu;
    double g_kappa = 0.5 * kDim * (1.0 / (1.0 + kappa) - 1.0 / kappa) +
                     half_nu1 * (m / q) / (nu * (1.0 + kappa) * (1.0 + kappa));
    // d nll / d Sigma0 = P/2 - c_m P v v^T P
    SymMat3 g_sigma = 0.5 * inverse_spd(sigma0) - c_m * outer(pv);

    // d reg; the subgradient at v = 0 is taken as zero
    if (vnorm > 0.0) g_gamma -= (weights.reg * (nu + kappa) / vnorm) * v;
    g_nu += weights.reg * vnorm;
    g_kappa += weights.reg * vnorm;

    // back through exp (self-adjoint derivative), basis map, damper
    const SymMat3 g_s = expm_dirderiv(s, g_sigma);
    const IrrepCoeffs g_damped = sym_to_coeffs(g_s);
    const IrrepCoeffs g_z =
        head.damping ? damp_coeffs_dirderiv(raw.z, g_damped, head.damper) : g_damped;

    out.grad.gamma = wf * g_gamma;
    out.grad.nu_hat = wf * g_nu * sigmoid(raw.nu_hat);
    out.grad.kappa_hat = wf * g_kappa * sigmoid(raw.kappa_hat);
    out.grad.z.s = wf * g_z.s;
    for (int k = 0; k < 5; ++k) out.grad.z.t[k] = wf * g_z.t[k];
    return out;
}

LossBreakdown total_loss(std::span<const Vec3> forces_ref, double energy_ref,
                         double energy_pred, std::span<const RawHeadOutputs> heads,
                         const LossWeights& weights, const HeadConfig& head) {
    if (forces_ref.size() != heads.size() || heads.empty()) {
        throw InputError("total_loss: need one head output per atom");
    }
    const double n = static_cast<double>(heads.size());
    LossBreakdown out;
    out.head_grads.resize(heads.size());
    out.sigma0.resize(heads.size());
    double force_terms = 0.0;
    for (std::size_t i = 0; i < heads.size(); ++i) {
        const AtomLoss a = loss_and_grad(forces_ref[i], heads[i], head, weights);
        out.nll += a.nll;
        out.reg += a.reg;
        force_terms += a.value;
        RawHeadGrad g = a.grad;
        g.gamma *= 1.0 / n;
        g.nu_hat /= n;
        g.kappa_hat /= n;
        g.z.s /= n;
        for (double& t : g.z.t) t /= n;
        out.head_grads[i] = g;
        out.sigma0[i] = a.sigma0;
    }
    out.nll /= n;
    out.reg /= n;
    const double de = energy_pred - energy_ref;
    out.energy = de * de / n;
    out.energy_grad = weights.energy * 2.0 * de / n;
    out.total = weights.energy * out.energy + force_terms / n;
    return out;
}

std::vector<Vec3> sample_predictive(const PredictiveT& pred, const Vec3& gamma,
                                    std::mt19937_64& rng, std::size_t n) {
    const Cholesky3 l = factor_spd(pred.scale);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::chi_squared_distribution<double> chi2(pred.dof);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 g{n01(rng), n01(rng), n01(rng)};
        const double w = chi2(rng);
        out.push_back(gamma + std::sqrt(pred.dof / w) * l.apply(g));
    }
    return out;
}

} // namespace eqevid
