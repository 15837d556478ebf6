#include <qforce/analytics.hpp>
#include <qforce/error.hpp>
#include <qforce/scalar_min.hpp>
#include <qforce/state_space.hpp>

#include <cmath>
#include <limits>

namespace qforce::sql {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_k(double k) {
    if (!(k >= 0.0) || !std::isfinite(k))
        fail(ErrorKind::InvalidSensitivity, "sensitivity must be finite and >= 0");
}

// exp(-2q) based hyperbolic ratios, safe for large q.
struct Hyp {
    double tanh2q;
    double sech2q;
    double coth2q;  // cosh/sinh
    double csch2q;  // 1/sinh
};

Hyp hyp(double q) {
    const double e = std::exp(-2.0 * q);
    const double e2 = e * e;
    return Hyp{(1.0 - e2) / (1.0 + e2), 2.0 * e / (1.0 + e2), (1.0 + e2) / (1.0 - e2),
               2.0 * e / (1.0 - e2)};
}

double positive_or_inf(double num, double den) {
    if (!(den > 0.0) || !std::isfinite(den))
        return kInf;
    const double v = num / den;
    return (v > 0.0 && std::isfinite(v)) ? v : kInf;
}

SqlResult free_result(Regime regime, const PhysicalParams &params, double (*fn)(double)) {
    if (!params.is_free())
        fail(ErrorKind::Domain, "free-particle limit requested for omega > 0");
    const auto m = minimize_scalar(fn, 0.05, 100.0);
    return SqlResult{regime, m.value, to_physical_variance(params, m.value), m.argmin,
                     {0.0, 0.0}, {}};
}

} // namespace

double to_physical_variance(const PhysicalParams &params, double sigma) {
    return sigma * filter::nondimensionalize(params).theta_variance_unit();
}

DampedResponse response_coefficients(double omega_tau, double k) {
    require_k(k);
    if (!(omega_tau >= 0.0) || !std::isfinite(omega_tau))
        fail(ErrorKind::InvalidArgument, "omega tau must be finite and >= 0");
    const double w2 = omega_tau * omega_tau;
    const double r = std::hypot(w2, 2.0 * k);
    // a^2 = (r - w2)/2 written without cancellation
    const double a = (r + w2) > 0.0 ? std::sqrt(2.0 * k * k / (r + w2)) : 0.0;
    const double b = std::sqrt(0.5 * (r + w2));
    return DampedResponse{a, b};
}

double autocorrelation_g(double omega_tau, double k, double s) {
    if (s < 0.0)
        fail(ErrorKind::InvalidArgument, "time lag must be >= 0");
    const auto [a, b] = response_coefficients(omega_tau, k);
    if (b == 0.0)
        return s;
    return std::exp(-a * s) * std::sin(b * s) / b;
}

namespace {

double inverse_variance_trapezoid(double k, const ForceBasis &f, double a, double b,
                                  std::size_t n) {
    const double h = 1.0 / static_cast<double>(n);
    const std::complex<double> lambda{-a, b};
    const std::complex<double> step = std::exp(lambda * h);
    const double f0 = f(0.0);
    std::complex<double> v = f0;   // sum_j e^{lambda (i-j) h} f_j
    std::complex<double> e0 = 1.0; // e^{lambda i h}
    double acc = 0.0;              // h_0 = 0
    for (std::size_t i = 1; i <= n; ++i) {
        const double fi = f(static_cast<double>(i) * h);
        v = step * v + fi;
        e0 *= step;
        const double hi = (h * (v - 0.5 * fi - 0.5 * e0 * f0)).imag() / b;
        acc += (i == n ? 0.5 : 1.0) * hi * hi;
    }
    return 2.0 * k * h * acc;
}

// Rectangular pulse: the convolution over each cell is integrated exactly, so
// the pulse edges need not sit on grid points.
double inverse_variance_kick(double k, const ForceBasis &f, double a, double b, std::size_t n) {
    const double h = 1.0 / static_cast<double>(n);
    const std::complex<double> lambda{-a, b};
    const std::complex<double> step = std::exp(lambda * h);
    const double lo = f.center() - 0.5 * f.width();
    const double hi = f.center() + 0.5 * f.width();
    const double height = 1.0 / f.width();
    std::complex<double> v = 0.0; // int_0^t e^{lambda (t - s)} f(s) ds
    double acc = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double t0 = static_cast<double>(i - 1) * h;
        const double t1 = static_cast<double>(i) * h;
        v *= step;
        const double s0 = std::max(lo, t0);
        const double s1 = std::min(hi, t1);
        if (s1 > s0)
            v += height * (std::exp(lambda * (t1 - s0)) - std::exp(lambda * (t1 - s1))) / lambda;
        const double hv = v.imag() / b;
        acc += (i == n ? 0.5 : 1.0) * hv * hv;
    }
    return 2.0 * k * h * acc;
}

} // namespace

QuadratureResult variance_integral(double k, const ForceBasis &f, double omega_tau,
                                   std::size_t n) {
    require_k(k);
    const auto [a, b] = response_coefficients(omega_tau, k);
    if (b == 0.0)
        return QuadratureResult{kInf, 0.0, n};
    std::size_t N = std::max<std::size_t>(n, 16);
    N = std::max<std::size_t>(N, static_cast<std::size_t>(40.0 * std::hypot(a, b)));
    if (f.kind() == ForceBasis::Kind::Kick)
        N = std::max<std::size_t>(N, static_cast<std::size_t>(40.0 / f.width()));
    N += N % 2;
    const auto integrate = f.kind() == ForceBasis::Kind::Kick ? &inverse_variance_kick
                                                              : &inverse_variance_trapezoid;
    const double fine = integrate(k, f, a, b, N);
    const double coarse = integrate(k, f, a, b, N / 2);
    if (!(fine > 0.0))
        return QuadratureResult{kInf, 0.0, N};
    const double s_fine = 1.0 / fine;
    const double s_coarse = coarse > 0.0 ? 1.0 / coarse : kInf;
    return QuadratureResult{s_fine, std::abs(s_fine - s_coarse) / 3.0, N};
}

double chi(double x) {
    if (!(x >= 0.0) || !(x < 1.0))
        fail(ErrorKind::Domain, "chi is defined on 0 <= x < 1");
    const double x2 = x * x;
    return std::pow(1.0 - x2, 0.25) * std::sqrt((1.0 + std::sqrt(1.0 + x2)) / (2.0 * (1.0 + x2)));
}

double sigma_free_constant_steady(double k) {
    require_k(k);
    if (k == 0.0)
        return kInf;
    const double q = std::sqrt(k);
    double den;
    if (q < 0.3) {
        // the closed form cancels to O(q^5); use its Taylor series
        static constexpr double c[] = {4.0 / 5.0,    -8.0 / 9.0,   4.0 / 9.0,    -1.0 / 9.0,
                                       1.0 / 405.0,  8.0 / 945.0,  -1.0 / 315.0, 1.0 / 1890.0,
                                       1.0 / 368550.0};
        double acc = 0.0;
        for (int i = 8; i >= 0; --i)
            acc = acc * q + c[i];
        den = acc * std::pow(q, 5);
    } else {
        den = 4.0 * q - 5.0 + 8.0 * std::exp(-q) * std::cos(q) -
              std::exp(-2.0 * q) * (2.0 + std::cos(2.0 * q) + std::sin(2.0 * q));
    }
    return positive_or_inf(8.0 * k * q, den);
}

double sigma_free_constant_optimal_init(double k) {
    require_k(k);
    if (k == 0.0)
        return kInf;
    const double q = std::sqrt(k);
    const Hyp h = hyp(q);
    // numerator and denominator divided by sinh(2q)
    const double S = 1.0 + std::sin(2.0 * q) * h.csch2q;
    const double D = h.coth2q - std::cos(2.0 * q) * h.csch2q;
    return positive_or_inf(2.0 * k * q * S, q * S - D);
}

double sigma_free_constant_projective_end(double k) {
    require_k(k);
    if (k == 0.0)
        return kInf;
    const double q = std::sqrt(k);
    const Hyp h = hyp(q);
    // numerator and denominator divided by cosh(2q)
    const double C = 1.0 + std::cos(2.0 * q) * h.sech2q;
    const double S = h.tanh2q + std::sin(2.0 * q) * h.sech2q;
    return positive_or_inf(4.0 * k * q * C, 2.0 * q * C - S);
}

double oscillator_constant_inverse_variance(double omega_tau, double k) {
    require_k(k);
    if (!(omega_tau > 0.0))
        fail(ErrorKind::Domain, "oscillator limit needs omega tau > 0");
    const double w2 = omega_tau * omega_tau;
    const double x = 2.0 * k / w2;
    return x / (1.0 + x * x) / w2;
}

double window_spectrum_abs2(const ForceBasis &f, double beta, std::size_t n) {
    if (f.kind() == ForceBasis::Kind::Kick) {
        const double lo = std::max(0.0, f.center() - 0.5 * f.width());
        const double hi = std::min(1.0, f.center() + 0.5 * f.width());
        if (!(hi > lo))
            return 0.0;
        const double x = 0.5 * beta * (hi - lo);
        const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
        const double frac = (hi - lo) / f.width();
        return frac * frac * sinc * sinc;
    }
    n = std::max<std::size_t>(n, static_cast<std::size_t>(40.0 * std::abs(beta)));
    const double h = 1.0 / static_cast<double>(n);
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double s = static_cast<double>(i) * h;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * f(s) * std::exp(std::complex<double>{0.0, -beta * s});
    }
    return std::norm(acc * h);
}

const char *to_string(Regime r) {
    switch (r) {
    case Regime::VonNeumann:
        return "von-neumann";
    case Regime::SteadyState:
        return "steady-state";
    case Regime::OptimalInit:
        return "optimal-init";
    case Regime::ProjectiveEnd:
        return "projective-end";
    case Regime::Scheduled:
        return "scheduled";
    case Regime::OscillatorResonant:
        return "oscillator-resonant";
    case Regime::OscillatorConstant:
        return "oscillator-constant";
    }
    return "unknown";
}

double von_neumann_sigma(const PhysicalParams &params, std::complex<double> sigma0,
                         double t) {
    if (!(sigma0.real() > 0.0))
        fail(ErrorKind::InvalidState, "Re(sigma0) must be positive");
    if (!(t > 0.0))
        fail(ErrorKind::InvalidArgument, "readout time must be positive");
    const double m = params.mass;
    const double si = sigma0.imag() + params.hbar * t / m;
    return 2.0 * m * m * (sigma0.real() * sigma0.real() + si * si) /
           (sigma0.real() * t * t * t * t);
}

SqlResult sql_von_neumann(const PhysicalParams &params) {
    params.validate();
    if (!params.is_free())
        fail(ErrorKind::Domain, "von Neumann limit is stated for the free particle");
    const double t = params.tau;
    const std::complex<double> s0{params.hbar * t / params.mass, 0.0};
    const double phys = 4.0 * params.hbar * params.mass / (t * t * t);
    const double unit = filter::nondimensionalize(params).theta_variance_unit();
    return SqlResult{Regime::VonNeumann, phys / unit, phys, kNaN, s0, {}};
}

SqlResult sql_free_steady(const PhysicalParams &params) {
    return free_result(Regime::SteadyState, params, &sigma_free_constant_steady);
}

SqlResult sql_free_optimal_init(const PhysicalParams &params) {
    return free_result(Regime::OptimalInit, params, &sigma_free_constant_optimal_init);
}

SqlResult sql_free_projective_end(const PhysicalParams &params) {
    return free_result(Regime::ProjectiveEnd, params, &sigma_free_constant_projective_end);
}

SqlResult sql_oscillator(const PhysicalParams &params, OscillatorRegime regime,
                         double spectrum_abs2) {
    params.validate();
    const double wt = params.omega_tau();
    if (!(wt > 0.0))
        fail(ErrorKind::Domain, "oscillator limits need omega > 0");
    SqlResult r;
    if (wt <= 10.0)
        r.flags.push_back("omega_tau<=10");
    if (regime == OscillatorRegime::ConstantForce) {
        r.regime = Regime::OscillatorConstant;
        r.optimal_k = 0.5 * wt * wt;
        r.sigma_theta = 1.0 / oscillator_constant_inverse_variance(wt, r.optimal_k);
        if (r.optimal_k / wt <= 10.0)
            r.flags.push_back("k/omega_tau<=10");
    } else {
        if (!(spectrum_abs2 > 0.0))
            fail(ErrorKind::InvalidArgument, "signal spectrum |F(b)|^2 must be positive");
        r.regime = Regime::OscillatorResonant;
        r.optimal_k = std::pow(wt, 1.5);
        const double y = 2.0 * r.optimal_k / (wt * wt);
        const double x = y / std::sqrt(1.0 + y * y);
        r.sigma_theta = 4.0 * wt / (spectrum_abs2 * chi(x));
        if (r.optimal_k / wt <= 10.0)
            r.flags.push_back("k/omega_tau<=10");
        if (r.optimal_k / (wt * wt) >= 0.1)
            r.flags.push_back("k/omega_tau^2>=0.1");
    }
    r.sigma_physical = to_physical_variance(params, r.sigma_theta);
    return r;
}

} // namespace qforce::sql
