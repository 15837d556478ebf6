// Gaussian wavefunction of a continuously monitored particle
#pragma once

#include <complex>

#include <qforce/params.hpp>

namespace qforce::dynamics {

using Complex = std::complex<double>;

/**
 * @brief psi(x) ∝ exp(-(x - x_tilde)^2 / (2 sigma_tilde)), Re(sigma_tilde) > 0.
 *
 * `theta` arguments in this namespace are the coefficient of x in the
 * Hamiltonian, H = p^2/2m + m omega^2 x^2/2 + theta x, so the force on the
 * particle is -theta.
 */
struct GaussianState {
    Complex x_tilde{0.0, 0.0};
    Complex sigma_tilde{1.0, 0.0};
};

struct Moments {
    double x_bar;
    double p_bar;
    double var_x;
    double var_p;
    double cov; ///< symmetrized <dx dp + dp dx>/2
};

/// Throws Error(InvalidState) unless Re(sigma) > 0 and all parts are finite.
void check_state(const GaussianState &state);

Moments derived_moments(const GaussianState &state, const PhysicalParams &params);

/// State with given mean position/momentum and complex width.
GaussianState from_moments(double x_bar, double p_bar, Complex sigma,
                           const PhysicalParams &params);

/// Pure state with the given second moments; throws if they violate purity.
GaussianState from_covariance(double x_bar, double p_bar, double var_x,
                              double var_p, double cov,
                              const PhysicalParams &params, double tol = 1e-6);

/// (var_x var_p - cov^2) / (hbar^2/4) - 1, zero for every pure Gaussian.
double purity_defect(const Moments &m, double hbar);

/// d sigma/dt of the monitored width: (i hbar/m)(1 - m^2 w^2 sigma^2/hbar^2) - k sigma^2.
Complex sigma_rate(const PhysicalParams &params, double k, Complex sigma);

/// Free Schroedinger flow over dt (closed form if omega = 0, RK4 otherwise).
GaussianState evolve_unmeasured(const GaussianState &state,
                                const PhysicalParams &params, double theta,
                                double dt);

/// Bayes update with a position readout xi of variance D/2.
GaussianState weak_measurement_update(const GaussianState &state, double xi,
                                      double D);

struct SdeStep {
    GaussianState state;
    double dxi; ///< record increment x_bar dt + dW / sqrt(2k)
};

/// One Euler-Maruyama step of the conditioned means; sigma is advanced exactly.
SdeStep sde_step(const GaussianState &state, const PhysicalParams &params,
                 double k, double theta, double dt, double dW);

/// Attracting fixed point of sigma_rate, branch with Re > 0.
Complex steady_state_sigma(const PhysicalParams &params, double k);

/// Exact sigma(t) under constant k > 0 starting from sigma0.
Complex sigma_solution(const PhysicalParams &params, double k, Complex sigma0,
                       double t);

} // namespace qforce::dynamics
