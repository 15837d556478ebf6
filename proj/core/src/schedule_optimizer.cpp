#include <qforce/error.hpp>
#include <qforce/parallel.hpp>
#include <qforce/scalar_min.hpp>
#include <qforce/schedule_optimizer.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace qforce::schedopt {

namespace {

double vec_inf_norm(const std::vector<double> &v) {
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

filter::Mat3 initial_P(const ScheduleOptProblem &p, double k0) {
    return filter::initial_covariance(p.params, p.initial, k0, p.epsilon, p.prior_variance);
}

SensitivitySchedule schedule_from_log(const std::vector<double> &log_k,
                                      const ScheduleOptProblem &p) {
    const double unit = filter::nondimensionalize(p.params).k_unit;
    std::vector<double> k(log_k.size());
    for (std::size_t i = 0; i < k.size(); ++i)
        k[i] = unit * std::exp(log_k[i]);
    return SensitivitySchedule::uniform(std::move(k), p.params.tau, true);
}

std::vector<double> project(std::vector<double> u, const ScheduleOptProblem &p) {
    for (double &x : u)
        x = std::clamp(x, p.log_k_min, p.log_k_max);
    return u;
}

} // namespace

void ScheduleOptProblem::validate() const {
    params.validate();
    if (n_intervals < 1)
        fail(ErrorKind::InvalidArgument, "n_intervals must be >= 1");
    if (!std::isfinite(log_k_min) || !std::isfinite(log_k_max) || !(log_k_max > log_k_min))
        fail(ErrorKind::InvalidArgument, "log k bounds must be finite with min < max");
    if (!(fd_step > 0.0))
        fail(ErrorKind::InvalidArgument, "finite-difference step must be positive");
    if (!(rel_tol > 0.0) || patience < 1)
        fail(ErrorKind::InvalidArgument, "convergence settings must be positive");
    if (!(grad_tol >= 0.0) || !std::isfinite(grad_tol))
        fail(ErrorKind::InvalidArgument, "grad_tol must be finite and >= 0");
}

double cost(const SensitivitySchedule &schedule, const ScheduleOptProblem &problem) {
    const auto model = filter::build_model(problem.params, problem.basis);
    filter::RunOptions opt;
    opt.dt = problem.dt;
    const filter::Mat3 P0 = initial_P(problem, schedule.k.front());
    const filter::Mat3 P =
        filter::run_schedule(P0, filter::Vec3::Zero(), schedule, model, nullptr, opt)
            .P_before_reduction;
    if (!(P(0, 0) > 0.0))
        fail(ErrorKind::Degenerate, "position variance vanished before the final readout");
    return P(2, 2) - P(2, 0) * P(2, 0) / P(0, 0);
}

double cost_log(const std::vector<double> &log_k, const ScheduleOptProblem &problem) {
    return cost(schedule_from_log(log_k, problem), problem);
}

std::vector<double> gradient_fd(const std::vector<double> &log_k,
                                const ScheduleOptProblem &problem, double step) {
    if (!(step > 0.0))
        fail(ErrorKind::InvalidArgument, "finite-difference step must be positive");
    const std::size_t n = log_k.size();
    std::vector<double> g(n);
    parallel_for(n, problem.threads, [&](std::size_t i) {
        std::vector<double> u = log_k;
        u[i] = log_k[i] + step;
        const double up = cost_log(u, problem);
        u[i] = log_k[i] - step;
        const double dn = cost_log(u, problem);
        g[i] = (up - dn) / (2.0 * step);
    });
    return g;
}

SensitivitySchedule default_initial_schedule(const ScheduleOptProblem &problem) {
    problem.validate();
    auto one = [&](double log_k) {
        std::vector<double> u(1, log_k);
        try {
            return cost_log(u, problem);
        } catch (const Error &) {
            return std::numeric_limits<double>::infinity();
        }
    };
    double best = 0.0;
    try {
        best = minimize_scalar(one, problem.log_k_min, problem.log_k_max, 1e-8).argmin;
    } catch (const Error &e) {
        if (e.kind() != ErrorKind::NoBracket)
            throw;
        best = std::clamp(0.0, problem.log_k_min, problem.log_k_max);
    }
    const double unit = filter::nondimensionalize(problem.params).k_unit;
    return SensitivitySchedule::constant(unit * std::exp(best), problem.params.tau,
                                         problem.n_intervals, true);
}

OptimizeResult optimize(const ScheduleOptProblem &problem, const SensitivitySchedule &init) {
    problem.validate();
    init.validate(problem.params.tau);
    const double unit = filter::nondimensionalize(problem.params).k_unit;

    std::vector<double> u(problem.n_intervals);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double t = problem.params.tau * (static_cast<double>(i) + 0.5) /
                         static_cast<double>(u.size());
        const double k = init.k_at(t) / unit;
        if (!(k > 0.0))
            fail(ErrorKind::InvalidSensitivity, "initial schedule needs k > 0");
        u[i] = std::log(k);
    }
    u = project(u, problem);

    auto safe_cost = [&](const std::vector<double> &x) {
        try {
            const double c = cost_log(x, problem);
            return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
        } catch (const Error &e) {
            if (!is_numerical(e.kind()))
                throw;
            return std::numeric_limits<double>::infinity();
        }
    };

    double K = safe_cost(u);
    if (!std::isfinite(K))
        fail(ErrorKind::NumericalInstability, "cost is not finite at the initial schedule");
    std::vector<double> history{K};
    std::vector<double> g = gradient_fd(u, problem, problem.fd_step);
    double alpha = 1.0 / std::max(vec_inf_norm(g), 1e-12);
    std::size_t quiet = 0, iter = 0;
    bool converged = false;

    for (iter = 0; iter < problem.max_iters; ++iter) {
        bool accepted = false;
        std::vector<double> u_new;
        double K_new = K;
        for (int shrink = 0; shrink < 60; ++shrink) {
            u_new.resize(u.size());
            for (std::size_t i = 0; i < u.size(); ++i)
                u_new[i] = u[i] - alpha * g[i];
            u_new = project(std::move(u_new), problem);
            double decrease = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i)
                decrease += g[i] * (u[i] - u_new[i]);
            K_new = safe_cost(u_new);
            if (std::isfinite(K_new) && K_new <= K - 1e-4 * decrease) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (iter == 0)
                fail(ErrorKind::NumericalInstability,
                     "line search failed to find a descent step");
            converged = true; // no further decrease possible at this resolution
            break;
        }
        const std::vector<double> g_new = gradient_fd(u_new, problem, problem.fd_step);
        double sy = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double s = u_new[i] - u[i];
            sy += s * (g_new[i] - g[i]);
            ss += s * s;
        }
        alpha = (sy > 0.0) ? ss / sy : 2.0 * alpha;

        const double change = std::abs(K - K_new) / std::max(std::abs(K_new), 1e-300);
        u = std::move(u_new);
        g = g_new;
        K = K_new;
        history.push_back(K);
        if (problem.grad_tol > 0.0)
            quiet = vec_inf_norm(g) <= problem.grad_tol * std::abs(K) ? problem.patience : 0;
        else
            quiet = change < problem.rel_tol ? quiet + 1 : 0;
        if (quiet >= problem.patience) {
            converged = true;
            ++iter;
            break;
        }
    }

    return OptimizeResult{schedule_from_log(u, problem), K, std::move(history), iter,
                          converged, vec_inf_norm(g)};
}

} // namespace qforce::schedopt
