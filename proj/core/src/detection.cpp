#include <qforce/detection.hpp>
#include <qforce/error.hpp>
#include <qforce/scalar_min.hpp>
#include <qforce/state_space.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <boost/math/distributions/normal.hpp>

namespace qforce::detect {

namespace {

void require_kappa(double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        fail(ErrorKind::Domain, "kappa must be positive and finite");
}

double positive_or_inf(double num, double den) {
    if (!(den > 0.0))
        return std::numeric_limits<double>::infinity();
    return num / den;
}

} // namespace

double kick_threshold(double kappa) {
    require_kappa(kappa);
    const double den = 1.0 - std::exp(-kappa) * (std::cos(kappa) + std::sin(kappa));
    return positive_or_inf(kappa, den);
}

double constant_threshold(double kappa) {
    require_kappa(kappa);
    const double den = std::exp(-kappa) * std::cos(kappa) + kappa - 1.0;
    return positive_or_inf(kappa * kappa, den);
}

ThresholdMinimum kick_min() {
    const auto m = minimize_scalar(kick_threshold, 0.1, 10.0, 1e-10);
    return {m.argmin, m.value};
}

ThresholdMinimum constant_min() {
    const auto m = minimize_scalar(constant_threshold, 0.1, 10.0, 1e-10);
    return {m.argmin, m.value};
}

double optimal_k_for_window(const PhysicalParams &params, double kappa, double window) {
    require_kappa(kappa);
    if (!(window > 0.0))
        fail(ErrorKind::InvalidArgument, "window must be positive");
    return 2.0 * params.mass * kappa * kappa / (params.hbar * window * window);
}

double kick_detection_horizon(const PhysicalParams &params, double theta0, double tau_kick) {
    if (!(theta0 > 0.0) || !(tau_kick > 0.0))
        fail(ErrorKind::InvalidArgument, "kick amplitude and duration must be positive");
    const double f = kick_min().factor;
    return f * f * params.hbar * params.mass / (tau_kick * tau_kick * theta0 * theta0);
}

double constant_detection_horizon(const PhysicalParams &params, double theta0) {
    if (!(theta0 > 0.0))
        fail(ErrorKind::InvalidArgument, "force amplitude must be positive");
    const double f = constant_min().factor;
    return std::cbrt(f * f * params.hbar * params.mass / (theta0 * theta0));
}

void DetectionProblem::validate() const {
    params.validate();
    if (!(theta0 > 0.0) || !std::isfinite(theta0))
        fail(ErrorKind::InvalidArgument, "theta0 must be positive");
    if (!(t1 >= 0.0) || !(t1 < params.tau))
        fail(ErrorKind::InvalidArgument, "arrival time must lie in [0, tau)");
    if (!(k > 0.0) || !std::isfinite(k))
        fail(ErrorKind::InvalidSensitivity, "detection needs k > 0");
    if (shape == Shape::Kick && !(tau_kick > 0.0))
        fail(ErrorKind::InvalidArgument, "kick duration must be positive");
}

double response_rate(const PhysicalParams &params, double k) {
    return std::sqrt(params.hbar * k / (2.0 * params.mass));
}

double noise_level(double k, double window) {
    if (!(k > 0.0))
        fail(ErrorKind::InvalidSensitivity, "noise level needs k > 0");
    return std::sqrt(std::max(window, 0.0) / (2.0 * k));
}

double bias_integral(const DetectionProblem &p, double t) {
    p.validate();
    if (t <= p.t1)
        return 0.0;
    const double a = response_rate(p.params, p.k);
    const double kappa = a * (t - p.t1);
    const double m = p.params.mass;
    if (p.shape == Shape::Kick)
        return p.theta0 * p.tau_kick *
               (1.0 - std::exp(-kappa) * (std::cos(kappa) + std::sin(kappa))) / (2.0 * m * a * a);
    return p.theta0 * (kappa - 1.0 + std::exp(-kappa) * std::cos(kappa)) / (2.0 * m * a * a * a);
}

double bias_integral_quadrature(const DetectionProblem &p, double t, std::size_t n) {
    p.validate();
    if (t <= p.t1)
        return 0.0;
    const double a = response_rate(p.params, p.k);
    const double m = p.params.mass;
    const double span = t - p.t1;
    if (p.shape == Shape::Kick)
        n = std::max<std::size_t>(n, static_cast<std::size_t>(40.0 * span / p.tau_kick));
    const double h = span / static_cast<double>(n);
    // Both shapes are unit pulses on [0, end); the convolution with exp(lambda s)
    // is integrated exactly per cell.
    const double end = p.shape == Shape::ConstantStep ? span : p.tau_kick;
    const std::complex<double> lambda{-a, a};
    const std::complex<double> step = std::exp(lambda * h);
    std::complex<double> v = 0.0;
    double outer = 0.0, prev = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double s1 = static_cast<double>(i) * h;
        const double lo = static_cast<double>(i - 1) * h;
        const double hi = std::min(end, s1);
        v *= step;
        if (hi > lo)
            v += (std::exp(lambda * (s1 - lo)) - std::exp(lambda * (s1 - hi))) / lambda;
        const double inner = v.imag() / (m * a);
        outer += 0.5 * h * (prev + inner);
        prev = inner;
    }
    return p.theta0 * outer;
}

double familywise_z(double alpha, std::size_t n_tests, bool two_sided) {
    if (!(alpha > 0.0 && alpha < 1.0))
        fail(ErrorKind::InvalidArgument, "false-alarm rate must lie in (0, 1)");
    const double tail = alpha / static_cast<double>(std::max<std::size_t>(n_tests, 1)) /
                        (two_sided ? 2.0 : 1.0);
    return -boost::math::quantile(boost::math::normal(), tail);
}

namespace {

struct Innovations {
    std::vector<double> nu;       // dxi - x_hat dt
    std::vector<double> variance; // dt / 2k
};

Innovations raw_innovations(const MeasurementRecord &record) {
    const PhysicalParams &params = record.params;
    record.validate_grid(params.tau);
    check_schedule_grid(record.schedule, record.dt);
    const auto model = filter::build_model(params, ForceBasis::zero());
    filter::Mat3 P0 = filter::initial_covariance(params, filter::InitialPolicy::SteadyState,
                                                 record.schedule.k.front());
    P0(2, 2) = 0.0;
    const auto path = filter::covariance_path(P0, record.schedule, model, record.dt);
    const filter::MeanPropagator drift(params, record.dt);
    Innovations out;
    out.nu.resize(record.size());
    out.variance.resize(record.size());
    filter::Vec3 mean = filter::Vec3::Zero();
    for (std::size_t j = 0; j < record.size(); ++j) {
        const double tm = (static_cast<double>(j) + 0.5) * record.dt;
        const double k = record.schedule.k_at(tm);
        if (!(k > 0.0))
            fail(ErrorKind::InvalidSensitivity, "detection needs k > 0 throughout the record");
        out.nu[j] = record.dxi[j] - mean(0) * record.dt;
        out.variance[j] = record.dt / (2.0 * k);
        mean = filter::kalman_mean_step(mean, path[j], k, 0.0, record.dxi[j], drift);
    }
    return out;
}

} // namespace

std::vector<double> theta_zero_innovations(const MeasurementRecord &record) {
    const auto in = raw_innovations(record);
    std::vector<double> z(in.nu.size());
    for (std::size_t j = 0; j < z.size(); ++j)
        z[j] = in.nu[j] / std::sqrt(in.variance[j]);
    return z;
}

namespace {

std::vector<std::size_t> window_lengths(const MeasurementRecord &record,
                                        const ThresholdPolicy &policy) {
    if (!(policy.growth > 1.0))
        fail(ErrorKind::InvalidArgument, "window growth factor must exceed 1");
    const std::size_t n = record.size();
    std::size_t lo = policy.min_window > 0.0
                         ? static_cast<std::size_t>(std::llround(policy.min_window / record.dt))
                         : 10;
    lo = std::clamp<std::size_t>(lo, 1, n);
    std::size_t hi = policy.max_window > 0.0
                         ? static_cast<std::size_t>(std::llround(policy.max_window / record.dt))
                         : n;
    hi = std::clamp<std::size_t>(hi, lo, n);
    std::vector<std::size_t> out;
    for (double L = static_cast<double>(lo); L <= static_cast<double>(hi) + 0.5;
         L *= policy.growth) {
        const auto l = static_cast<std::size_t>(std::llround(L));
        if (out.empty() || l > out.back())
            out.push_back(l);
    }
    return out;
}

std::size_t first_start(const MeasurementRecord &record, const ThresholdPolicy &policy) {
    if (policy.search_from <= 0.0)
        return 0;
    return static_cast<std::size_t>(std::ceil(policy.search_from / record.dt - 1e-9));
}

} // namespace

std::size_t count_windows(const MeasurementRecord &record, const ThresholdPolicy &policy) {
    const std::size_t n = record.size();
    const std::size_t s0 = first_start(record, policy);
    std::size_t count = 0;
    for (std::size_t L : window_lengths(record, policy))
        if (s0 + L <= n)
            count += n - s0 - L + 1;
    return count;
}

DetectionResult online_detect(const MeasurementRecord &record, const ThresholdPolicy &policy) {
    if (!(policy.z > 0.0) || !std::isfinite(policy.z))
        fail(ErrorKind::InvalidArgument, "threshold multiplier must be positive");
    const auto in = raw_innovations(record);
    const std::size_t n = in.nu.size();
    std::vector<double> S(n + 1, 0.0), V(n + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        S[j + 1] = S[j] + in.nu[j];
        V[j + 1] = V[j] + in.variance[j];
    }
    const auto lengths = window_lengths(record, policy);
    const std::size_t s0 = first_start(record, policy);

    DetectionResult r;
    r.threshold = policy.z;
    r.n_tests = count_windows(record, policy);
    r.t.reserve(n);
    r.z_max.reserve(n);
    for (std::size_t e = 1; e <= n; ++e) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_start = 0;
        for (std::size_t L : lengths) {
            if (L > e || e - L < s0)
                break;
            double stat = (S[e] - S[e - L]) / std::sqrt(V[e] - V[e - L]);
            if (policy.two_sided)
                stat = std::abs(stat);
            if (stat > best) {
                best = stat;
                best_start = e - L;
            }
        }
        r.t.push_back(static_cast<double>(e) * record.dt);
        r.z_max.push_back(std::isfinite(best) ? best : 0.0);
        if (!r.detected && std::isfinite(best) && best >= policy.z) {
            r.detected = true;
            r.t_detect = static_cast<double>(e) * record.dt;
            r.window_start = static_cast<double>(best_start) * record.dt;
            r.statistic = best;
        }
    }
    return r;
}

double window_statistic(const MeasurementRecord &record, double start, double length) {
    const auto in = raw_innovations(record);
    const auto s = static_cast<std::size_t>(std::llround(start / record.dt));
    const auto L = static_cast<std::size_t>(std::llround(length / record.dt));
    if (L == 0 || s + L > in.nu.size())
        fail(ErrorKind::Grid, "window does not fit inside the record");
    double sum = 0.0, var = 0.0;
    for (std::size_t j = s; j < s + L; ++j) {
        sum += in.nu[j];
        var += in.variance[j];
    }
    return sum / std::sqrt(var);
}

} // namespace qforce::detect
