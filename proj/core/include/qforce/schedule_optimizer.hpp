// Descent over piecewise-constant sensitivity schedules
#pragma once

#include <cstddef>
#include <vector>

#include <qforce/force_basis.hpp>
#include <qforce/params.hpp>
#include <qforce/schedule.hpp>
#include <qforce/state_space.hpp>

namespace qforce::schedopt {

struct ScheduleOptProblem {
    std::size_t n_intervals = 50;
    PhysicalParams params = PhysicalParams::dimensionless();
    ForceBasis basis = ForceBasis::constant();
    filter::InitialPolicy initial = filter::InitialPolicy::OptimalInit;
    double epsilon = 1e-6;
    double prior_variance = 0.0; ///< <= 0: flat
    double log_k_min = -6.0;     ///< bounds on log of the rescaled k
    double log_k_max = 12.0;
    std::size_t max_iters = 2000;
    double rel_tol = 1e-6;
    std::size_t patience = 5;
    /// > 0: stop only once ||grad||_inf <= grad_tol * K (replaces the rel_tol rule)
    double grad_tol = 0.0;
    double fd_step = 1e-4;
    double dt = 0.0; ///< integration step for time-varying bases (0: tau/20000)
    unsigned threads = 1;

    void validate() const;
};

/// K = P33 - P13^2/P11 at tau (the variance left after an exact final position readout).
double cost(const SensitivitySchedule &schedule, const ScheduleOptProblem &problem);

/// Cost as a function of log rescaled k per interval (uniform intervals).
double cost_log(const std::vector<double> &log_k, const ScheduleOptProblem &problem);

/// Central differences of cost_log.
std::vector<double> gradient_fd(const std::vector<double> &log_k,
                                const ScheduleOptProblem &problem, double step);

struct OptimizeResult {
    SensitivitySchedule schedule; ///< physical k of problem.params
    double K;
    std::vector<double> history; ///< K after every accepted iteration
    std::size_t iterations;
    bool converged;
    double gradient_norm; ///< infinity norm at the returned point
};

/**
 * @brief Projected gradient descent in log k with backtracking line search.
 *
 * Trial steps use the Barzilai-Borwein length; a step is accepted only on
 * sufficient decrease, so the history is non-increasing.
 */
OptimizeResult optimize(const ScheduleOptProblem &problem, const SensitivitySchedule &init);

/// Constant schedule at the best single-interval k for the problem.
SensitivitySchedule default_initial_schedule(const ScheduleOptProblem &problem);

} // namespace qforce::schedopt
