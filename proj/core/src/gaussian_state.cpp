#include <qforce/error.hpp>
#include <qforce/gaussian_state.hpp>

#include <cmath>
#include <string>

namespace qforce::dynamics {

namespace {

constexpr Complex I{0.0, 1.0};

bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

void require_dt(double dt) {
    if (!std::isfinite(dt) || dt < 0.0)
        fail(ErrorKind::InvalidArgument, "time step must be finite and >= 0");
}

struct Deriv {
    Complex dx;
    Complex ds;
};

Deriv unmeasured_rate(const PhysicalParams &p, double theta, Complex x, Complex s) {
    const double m = p.mass, w = p.omega, hb = p.hbar;
    return {s * (theta + m * w * w * x) / (I * hb),
            (I * hb / m) * (1.0 - m * m * w * w * s * s / (hb * hb))};
}

} // namespace

void check_state(const GaussianState &state) {
    if (!finite(state.x_tilde) || !finite(state.sigma_tilde))
        fail(ErrorKind::InvalidState, "state has non-finite components");
    if (!(state.sigma_tilde.real() > 0.0))
        fail(ErrorKind::InvalidState, "Re(sigma) must be positive (normalizable state)");
}

Moments derived_moments(const GaussianState &state, const PhysicalParams &params) {
    check_state(state);
    const double sr = state.sigma_tilde.real();
    const double si = state.sigma_tilde.imag();
    const double xr = state.x_tilde.real();
    const double xi = state.x_tilde.imag();
    const double hb = params.hbar;
    return Moments{
        .x_bar = xr + (si / sr) * xi,
        .p_bar = hb * xi / sr,
        .var_x = std::norm(state.sigma_tilde) / (2.0 * sr),
        .var_p = hb * hb / (2.0 * sr),
        .cov = hb * si / (2.0 * sr),
    };
}

GaussianState from_moments(double x_bar, double p_bar, Complex sigma,
                           const PhysicalParams &params) {
    if (!(sigma.real() > 0.0) || !finite(sigma))
        fail(ErrorKind::InvalidState, "Re(sigma) must be positive (normalizable state)");
    if (!std::isfinite(x_bar) || !std::isfinite(p_bar))
        fail(ErrorKind::InvalidState, "means must be finite");
    const double xi = p_bar * sigma.real() / params.hbar;
    const double xr = x_bar - (sigma.imag() / sigma.real()) * xi;
    return GaussianState{Complex{xr, xi}, sigma};
}

GaussianState from_covariance(double x_bar, double p_bar, double var_x,
                              double var_p, double cov,
                              const PhysicalParams &params, double tol) {
    if (!(var_x > 0.0) || !(var_p > 0.0))
        fail(ErrorKind::InvalidState, "variances must be positive");
    Moments m{x_bar, p_bar, var_x, var_p, cov};
    if (std::abs(purity_defect(m, params.hbar)) > tol)
        fail(ErrorKind::InvalidState,
             "covariance block is not that of a pure Gaussian state");
    const double sr = params.hbar * params.hbar / (2.0 * var_p);
    const double si = 2.0 * cov * sr / params.hbar;
    return from_moments(x_bar, p_bar, Complex{sr, si}, params);
}

double purity_defect(const Moments &m, double hbar) {
    return (m.var_x * m.var_p - m.cov * m.cov) / (0.25 * hbar * hbar) - 1.0;
}

Complex sigma_rate(const PhysicalParams &params, double k, Complex sigma) {
    const double m = params.mass, w = params.omega, hb = params.hbar;
    return (I * hb / m) * (1.0 - m * m * w * w * sigma * sigma / (hb * hb)) -
           k * sigma * sigma;
}

GaussianState evolve_unmeasured(const GaussianState &state,
                                const PhysicalParams &params, double theta,
                                double dt) {
    check_state(state);
    require_dt(dt);
    const double m = params.mass, hb = params.hbar;
    if (params.omega == 0.0) {
        const Complex s0 = state.sigma_tilde;
        return GaussianState{
            state.x_tilde + theta * (s0 * dt / (I * hb) + dt * dt / (2.0 * m)),
            s0 + I * hb * dt / m};
    }
    const double h_max = 1e-4 * params.tau;
    const auto n = static_cast<long>(std::ceil(dt / h_max));
    if (n == 0)
        return state;
    const double h = dt / static_cast<double>(n);
    Complex x = state.x_tilde, s = state.sigma_tilde;
    for (long i = 0; i < n; ++i) {
        Deriv k1 = unmeasured_rate(params, theta, x, s);
        Deriv k2 = unmeasured_rate(params, theta, x + 0.5 * h * k1.dx, s + 0.5 * h * k1.ds);
        Deriv k3 = unmeasured_rate(params, theta, x + 0.5 * h * k2.dx, s + 0.5 * h * k2.ds);
        Deriv k4 = unmeasured_rate(params, theta, x + h * k3.dx, s + h * k3.ds);
        x += h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
        s += h / 6.0 * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds);
    }
    GaussianState out{x, s};
    if (!finite(x) || !finite(s) || !(s.real() > 0.0))
        fail(ErrorKind::NumericalInstability, "unmeasured evolution lost normalizability");
    return out;
}

GaussianState weak_measurement_update(const GaussianState &state, double xi,
                                      double D) {
    check_state(state);
    if (!std::isfinite(xi))
        fail(ErrorKind::InvalidMeasurement, "measurement outcome must be finite");
    if (!(D > 0.0) || !std::isfinite(D))
        fail(ErrorKind::InvalidMeasurement, "measurement width D must be positive");
    const Complex s = state.sigma_tilde;
    return GaussianState{(s * xi + D * state.x_tilde) / (s + D),
                         1.0 / (1.0 / s + 1.0 / D)};
}

SdeStep sde_step(const GaussianState &state, const PhysicalParams &params,
                 double k, double theta, double dt, double dW) {
    if (!(k > 0.0) || !std::isfinite(k))
        fail(ErrorKind::InvalidSensitivity, "sde_step needs k > 0");
    require_dt(dt);
    const Moments mo = derived_moments(state, params);
    const Complex s = state.sigma_tilde;
    const double sr = s.real();
    const double c = std::sqrt(0.5 * k);
    const double vx = c * std::norm(s) / sr;
    const double vp = c * params.hbar * s.imag() / sr;
    const double m = params.mass, w = params.omega;

    const double dxi = mo.x_bar * dt + dW / std::sqrt(2.0 * k);
    const double x_new = mo.x_bar + mo.p_bar / m * dt + vx * dW;
    const double p_new = mo.p_bar - m * w * w * mo.x_bar * dt - theta * dt + vp * dW;
    const Complex s_new = sigma_solution(params, k, s, dt);
    return SdeStep{from_moments(x_new, p_new, s_new, params), dxi};
}

Complex steady_state_sigma(const PhysicalParams &params, double k) {
    if (!(k > 0.0) || !std::isfinite(k))
        fail(ErrorKind::InvalidSensitivity, "steady state needs k > 0");
    const double m = params.mass, w = params.omega, hb = params.hbar;
    const Complex omega_c = std::sqrt(Complex{w * w, -hb * k / m});
    Complex s = (hb / m) / omega_c;
    if (s.real() < 0.0)
        s = -s;
    return s;
}

Complex sigma_solution(const PhysicalParams &params, double k, Complex sigma0,
                       double t) {
    if (!(sigma0.real() > 0.0) || !finite(sigma0))
        fail(ErrorKind::InvalidState, "Re(sigma0) must be positive");
    require_dt(t);
    const Complex s_inf = steady_state_sigma(params, k);
    const Complex omega_c = (params.hbar / params.mass) / s_inf;
    // tanh form written with the decaying exponential so that sigma0 = s_inf
    // and long times are both regular.
    const Complex e = std::exp(-2.0 * I * omega_c * t);
    const Complex num = (s_inf + sigma0) - (s_inf - sigma0) * e;
    const Complex den = (s_inf + sigma0) + (s_inf - sigma0) * e;
    const Complex s = s_inf * num / den;
    if (!finite(s) || !(s.real() > 0.0))
        fail(ErrorKind::NumericalInstability, "sigma solution is not normalizable");
    return s;
}

} // namespace qforce::dynamics
