// Piecewise-constant measurement sensitivity k(t)
#pragma once

#include <cstddef>
#include <vector>

namespace qforce {

/**
 * @brief k(t) on [0, tau] as n intervals with breakpoints t_0 = 0 < ... < t_n.
 *
 * If terminal_projective is set, an exact position measurement is applied at
 * t = tau after the continuous record.
 */
struct SensitivitySchedule {
    std::vector<double> breakpoints;
    std::vector<double> k;
    bool terminal_projective = false;

    static SensitivitySchedule constant(double k, double tau,
                                        std::size_t intervals = 1,
                                        bool terminal_projective = false);
    /// Equal-width intervals with the given values.
    static SensitivitySchedule uniform(std::vector<double> k, double tau,
                                       bool terminal_projective = false);

    std::size_t size() const { return k.size(); }
    double horizon() const { return breakpoints.empty() ? 0.0 : breakpoints.back(); }
    /// Index of the interval containing t (right-open, t = tau maps to the last).
    std::size_t interval_at(double t) const;
    double k_at(double t) const { return k[interval_at(t)]; }

    /// Throws Error(InvalidSensitivity) on negative/non-finite k or bad breakpoints.
    void validate(double tau) const;
};

} // namespace qforce
