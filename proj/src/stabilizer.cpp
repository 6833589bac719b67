#include "eqevid/stabilizer.hpp"

#include <algorithm>
#include <cmath>

#include "eqevid/errors.hpp"

namespace eqevid {

void DamperConfig::validate() const {
    if (!(threshold > 0.0 && ceiling > threshold && epsilon > 0.0)) {
        throw InputError("damper config requires ceiling > threshold > 0 and epsilon > 0");
    }
}

double phi_high(double x, const DamperConfig& cfg) {
    const double ax = std::abs(x);
    if (ax <= cfg.threshold) return x;
    const double span = cfg.ceiling - cfg.threshold;
    const double raw = span * std::tanh((ax - cfg.threshold) / span) + cfg.threshold;
    // tanh rounds to 1 for large arguments; keep the bound strict.
    const double mag = std::min(raw, std::nextafter(cfg.ceiling, 0.0));
    return x > 0.0 ? mag : -mag;
}

double phi_high_deriv(double x, const DamperConfig& cfg) {
    const double ax = std::abs(x);
    if (ax <= cfg.threshold) return 1.0;
    const double th = std::tanh((ax - cfg.threshold) / (cfg.ceiling - cfg.threshold));
    return 1.0 - th * th;
}

double phi_low(double x, const DamperConfig& cfg) { return -phi_high(-x, cfg); }

double phi_low_deriv(double x, const DamperConfig& cfg) { return phi_high_deriv(-x, cfg); }

namespace {

struct MagnitudeScale {
    double alpha;
    double dalpha_dn;  // d alpha / d |t|
};

MagnitudeScale magnitude_scale(double n, const DamperConfig& cfg) {
    const double denom = n + cfg.epsilon;
    const double ph = phi_high(n, cfg);
    return {ph / denom, (phi_high_deriv(n, cfg) * denom - ph) / (denom * denom)};
}

} // namespace

IrrepCoeffs damp_coeffs(const IrrepCoeffs& z, const DamperConfig& cfg) {
    IrrepCoeffs out;
    out.s = phi_low(phi_high(z.s, cfg), cfg);
    const double alpha = magnitude_scale(l2_norm(z.t), cfg).alpha;
    for (int k = 0; k < 5; ++k) out.t[k] = alpha * z.t[k];
    return out;
}

IrrepCoeffs damp_coeffs_dirderiv(const IrrepCoeffs& z, const IrrepCoeffs& dz,
                                 const DamperConfig& cfg) {
    IrrepCoeffs out;
    out.s = phi_low_deriv(phi_high(z.s, cfg), cfg) * phi_high_deriv(z.s, cfg) * dz.s;

    // d(alpha t) = alpha dt + (alpha'/|t|) t (t . dt)
    const double n = l2_norm(z.t);
    const MagnitudeScale m = magnitude_scale(n, cfg);
    double radial = 0.0;
    if (n > 0.0) {
        double tdt = 0.0;
        for (int k = 0; k < 5; ++k) tdt += z.t[k] * dz.t[k];
        radial = m.dalpha_dn * tdt / n;
    }
    for (int k = 0; k < 5; ++k) out.t[k] = m.alpha * dz.t[k] + radial * z.t[k];
    return out;
}

} // namespace eqevid
