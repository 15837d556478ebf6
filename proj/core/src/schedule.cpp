#include <qforce/error.hpp>
#include <qforce/schedule.hpp>

#include <algorithm>
#include <cmath>

namespace qforce {

SensitivitySchedule SensitivitySchedule::constant(double k, double tau,
                                                  std::size_t intervals,
                                                  bool terminal_projective) {
    if (intervals == 0)
        fail(ErrorKind::InvalidSensitivity, "schedule needs at least one interval");
    return uniform(std::vector<double>(intervals, k), tau, terminal_projective);
}

SensitivitySchedule SensitivitySchedule::uniform(std::vector<double> k, double tau,
                                                 bool terminal_projective) {
    if (k.empty())
        fail(ErrorKind::InvalidSensitivity, "schedule needs at least one interval");
    SensitivitySchedule s;
    const std::size_t n = k.size();
    s.breakpoints.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        s.breakpoints[i] = tau * static_cast<double>(i) / static_cast<double>(n);
    s.breakpoints[n] = tau;
    s.k = std::move(k);
    s.terminal_projective = terminal_projective;
    s.validate(tau);
    return s;
}

std::size_t SensitivitySchedule::interval_at(double t) const {
    auto it = std::upper_bound(breakpoints.begin() + 1, breakpoints.end() - 1, t);
    return static_cast<std::size_t>(it - (breakpoints.begin() + 1));
}

void SensitivitySchedule::validate(double tau) const {
    if (k.empty())
        fail(ErrorKind::InvalidSensitivity, "schedule needs at least one interval");
    if (breakpoints.size() != k.size() + 1)
        fail(ErrorKind::InvalidSensitivity, "schedule needs n + 1 breakpoints");
    if (breakpoints.front() != 0.0)
        fail(ErrorKind::InvalidSensitivity, "schedule must start at t = 0");
    if (std::abs(breakpoints.back() - tau) > 1e-12 * tau)
        fail(ErrorKind::InvalidSensitivity, "schedule must end at t = tau");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
        if (!(breakpoints[i] > breakpoints[i - 1]))
            fail(ErrorKind::InvalidSensitivity,
                 "schedule breakpoints must be strictly increasing");
    for (double v : k)
        if (!std::isfinite(v) || v < 0.0)
            fail(ErrorKind::InvalidSensitivity,
                 "sensitivity must be finite and non-negative");
}

} // namespace qforce
