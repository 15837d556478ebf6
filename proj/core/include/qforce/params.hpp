// Physical parameters of the probed oscillator
#pragma once

namespace qforce {

/**
 * @brief Mass, trap frequency, reduced Planck constant and horizon.
 *
 * omega = 0 is the free particle. The rescaled ("dimensionless") model is the
 * special case m = 1, hbar = 2, tau = 1 for which the unit scale matrix is
 * the identity, see dimensionless().
 */
struct PhysicalParams {
    double mass = 1.0;
    double omega = 0.0;
    double hbar = 1.0;
    double tau = 1.0;

    /// Throws Error(InvalidArgument) unless m, hbar, tau > 0 and omega >= 0.
    void validate() const;

    bool is_free() const { return omega == 0.0; }
    double omega_tau() const { return omega * tau; }

    /// Parameters whose natural units coincide with the rescaled model.
    static PhysicalParams dimensionless(double omega_tau = 0.0);
};

} // namespace qforce
