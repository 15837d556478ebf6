// Closed-form and quadrature estimation variances, standard quantum limits
#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <qforce/force_basis.hpp>
#include <qforce/params.hpp>

namespace qforce::sql {

/// Functions below work in rescaled units (m = 1, hbar = 2, tau = 1) unless they
/// take PhysicalParams. A rescaled variance times hbar m/(2 tau^3) is physical.

struct DampedResponse {
    double a; ///< decay rate
    double b; ///< oscillation frequency
};

/// Closed-loop poles -a +- ib of the steadily monitored oscillator.
DampedResponse response_coefficients(double omega_tau, double k);

/// g(s) = exp(-a s) sin(b s) / b.
double autocorrelation_g(double omega_tau, double k, double s);

struct QuadratureResult {
    double sigma;          ///< +inf when the signal carries no information
    double error_estimate; ///< |sigma(N) - sigma(N/2)| / 3
    std::size_t n;
};

/**
 * @brief 1/sigma = 2k int_0^1 (int_0^t g(t - t') f(t') dt')^2 dt by nested trapezoid.
 *
 * The inner convolution is carried as a complex recursion, so the cost is
 * O(n). n is raised as needed to resolve the response and narrow kicks.
 */
QuadratureResult variance_integral(double k, const ForceBasis &f, double omega_tau = 0.0,
                                   std::size_t n = 2000);

/// (1 - x^2)^(1/4) sqrt((1 + sqrt(1 + x^2)) / (2 (1 + x^2))), 0 <= x < 1.
double chi(double x);

/// Constant force, steady-state start, free particle.
double sigma_free_constant_steady(double k);
/// Constant force, momentum-squeezed (epsilon -> 0) start, free particle.
double sigma_free_constant_optimal_init(double k);
/// As optimal_init plus an exact position readout at the end.
double sigma_free_constant_projective_end(double k);

/// Oscillator, constant force: 1/sigma = x/(1+x^2)/(omega tau)^2, x = 2k/(omega tau)^2.
double oscillator_constant_inverse_variance(double omega_tau, double k);

/// |F(beta)|^2 with F(beta) = int_0^1 f(s) exp(-i beta s) ds.
double window_spectrum_abs2(const ForceBasis &f, double beta, std::size_t n = 20000);

enum class Regime {
    VonNeumann,
    SteadyState,
    OptimalInit,
    ProjectiveEnd,
    Scheduled,
    OscillatorResonant,
    OscillatorConstant,
};

const char *to_string(Regime r);

struct SqlResult {
    Regime regime;
    double sigma_theta;    ///< rescaled units
    double sigma_physical; ///< force^2 units of the given params
    double optimal_k;      ///< rescaled; NaN where no sensitivity is involved
    std::complex<double> optimal_sigma0{0.0, 0.0}; ///< von Neumann preparation
    std::vector<std::string> flags;                 ///< violated validity conditions
};

/// 2 m^2 (sr^2 + (si + hbar t/m)^2) / (sr t^4), physical units.
double von_neumann_sigma(const PhysicalParams &params, std::complex<double> sigma0, double t);

/// 4 hbar m / t^3 at sigma0 = hbar t/m (free particle, t = tau).
SqlResult sql_von_neumann(const PhysicalParams &params);

SqlResult sql_free_steady(const PhysicalParams &params);
SqlResult sql_free_optimal_init(const PhysicalParams &params);
SqlResult sql_free_projective_end(const PhysicalParams &params);

enum class OscillatorRegime { ResonantFlatSpectrum, ConstantForce };

/**
 * @brief Oscillator limits with validity flags.
 *
 * Resonant: sigma = 4 omega tau / (|F(b)|^2 chi(x)) at k = (omega tau)^1.5, the
 * geometric middle of omega tau << k << (omega tau)^2. Constant: 2k = (omega tau)^2.
 */
SqlResult sql_oscillator(const PhysicalParams &params, OscillatorRegime regime,
                         double spectrum_abs2 = 1.0);

/// Physical value of a rescaled variance.
double to_physical_variance(const PhysicalParams &params, double sigma_dimensionless);

} // namespace qforce::sql
