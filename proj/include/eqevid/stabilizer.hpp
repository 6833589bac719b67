#pragma once

#include "eqevid/irreps.hpp"

namespace eqevid {

/// Linear-tanh damper parameters. Requires ceiling > threshold > 0, epsilon > 0.
struct DamperConfig {
    double threshold = 4.0;
    double ceiling = 5.0;
    double epsilon = 1e-6;

    /// Throws InputError when the invariants fail.
    void validate() const;
};

/// Identity on [-threshold, threshold], saturating smoothly towards +-ceiling.
double phi_high(double x, const DamperConfig& cfg);
double phi_high_deriv(double x, const DamperConfig& cfg);

/// Floor damper, -phi_high(-x).
double phi_low(double x, const DamperConfig& cfg);
double phi_low_deriv(double x, const DamperConfig& cfg);

/// s -> phi_low(phi_high(s)); t -> alpha t with alpha = phi_high(|t|) / (|t| + eps).
IrrepCoeffs damp_coeffs(const IrrepCoeffs& z, const DamperConfig& cfg);

/// Jacobian-vector product of damp_coeffs at z. The Jacobian is symmetric, so
/// this is also the vector-Jacobian product.
IrrepCoeffs damp_coeffs_dirderiv(const IrrepCoeffs& z, const IrrepCoeffs& dz,
                                 const DamperConfig& cfg);

} // namespace eqevid
