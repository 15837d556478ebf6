#include <qforce/error.hpp>
#include <qforce/parallel.hpp>
#include <qforce/rng.hpp>
#include <qforce/trajectory.hpp>

#include <algorithm>
#include <cmath>

namespace qforce::sim {

namespace {

double min_k(const PhysicalParams &params) {
    return 1e-12 * filter::nondimensionalize(params).k_unit;
}

} // namespace

MeasurementRecord generate_record(const PhysicalParams &params, const Signal &truth,
                                  const SensitivitySchedule &schedule,
                                  const dynamics::GaussianState &initial, double dt,
                                  std::uint64_t seed, std::uint64_t trajectory) {
    params.validate();
    schedule.validate(params.tau);
    dynamics::check_state(initial);
    const std::size_t n = steps_for(params.tau, dt);
    check_schedule_grid(schedule, dt);

    MeasurementRecord rec;
    rec.dt = dt;
    rec.params = params;
    rec.schedule = schedule;
    rec.seed = seed;
    rec.trajectory = trajectory;
    rec.dxi.resize(n);

    SubstreamRng rng(seed, trajectory);
    const double sqdt = std::sqrt(dt);
    const double kmin = min_k(params);
    dynamics::GaussianState state = initial;
    for (std::size_t j = 0; j < n; ++j) {
        const double tm = (static_cast<double>(j) + 0.5) * dt;
        const double k = std::max(schedule.k_at(tm), kmin);
        // sde_step takes the Hamiltonian coupling, i.e. minus the force.
        const auto r = dynamics::sde_step(state, params, k, -truth.force(tm, params.tau),
                                          dt, sqdt * rng.normal());
        state = r.state;
        rec.dxi[j] = r.dxi;
    }
    if (schedule.terminal_projective) {
        const auto mo = dynamics::derived_moments(state, params);
        rec.terminal_position = mo.x_bar + std::sqrt(mo.var_x) * rng.normal();
    }
    return rec;
}

bool InnovationStats::white(double n_se, double var_band) const {
    if (samples == 0)
        return false;
    if (std::abs(mean) > n_se * mean_se)
        return false;
    if (std::abs(variance_ratio - 1.0) > var_band)
        return false;
    for (std::size_t l = 0; l < kMaxLag; ++l)
        if (std::abs(autocorr[l]) > n_se * autocorr_se[l])
            return false;
    return true;
}

void InnovationSums::add_sequence(const std::vector<double> &z) {
    for (std::size_t j = 0; j < z.size(); ++j) {
        s1 += z[j];
        s2 += z[j] * z[j];
        for (std::size_t l = 1; l <= kMaxLag && j + l < z.size(); ++l) {
            lag[l - 1] += z[j] * z[j + l];
            lag_n[l - 1] += 1.0;
        }
    }
    n += static_cast<double>(z.size());
}

InnovationStats InnovationSums::stats() const {
    InnovationStats s;
    if (n < 2.0)
        return s;
    s.samples = static_cast<std::size_t>(n);
    s.mean = s1 / n;
    const double var = s2 / n - s.mean * s.mean;
    s.mean_se = std::sqrt(var / n);
    s.variance_ratio = var;
    s.variance_se = std::sqrt(2.0 / (n - 1.0)) * var;
    for (std::size_t l = 0; l < kMaxLag; ++l) {
        if (lag_n[l] < 1.0)
            continue;
        s.autocorr[l] = (lag[l] / lag_n[l] - s.mean * s.mean) / var;
        s.autocorr_se[l] = 1.0 / std::sqrt(lag_n[l]);
    }
    return s;
}

std::vector<double> normalized_innovations(const MeasurementRecord &record,
                                           const std::vector<double> &predicted_x) {
    if (predicted_x.size() != record.size())
        fail(ErrorKind::InvalidArgument, "filter output does not match the record length");
    const double kmin = min_k(record.params);
    std::vector<double> z(record.size());
    for (std::size_t j = 0; j < record.size(); ++j) {
        const double tm = (static_cast<double>(j) + 0.5) * record.dt;
        const double k = std::max(record.schedule.k_at(tm), kmin);
        z[j] = (record.dxi[j] - predicted_x[j] * record.dt) /
               std::sqrt(record.dt / (2.0 * k));
    }
    return z;
}

InnovationStats innovation_whiteness(const MeasurementRecord &record,
                                     const filter::ScheduleTrajectory &filtered) {
    InnovationSums sums;
    sums.add_sequence(normalized_innovations(record, filtered.predicted_x));
    return sums.stats();
}

namespace {

struct TrajectoryResult {
    std::vector<double> errors; // at stored indices
    double final_error = 0.0;
    InnovationSums innovations;
};

InnovationSums reduce_sums(const std::vector<TrajectoryResult> &r) {
    InnovationSums out;
    std::vector<double> buf(r.size());
    auto reduce = [&](auto getter) {
        for (std::size_t i = 0; i < r.size(); ++i)
            buf[i] = getter(r[i].innovations);
        return pairwise_sum(buf);
    };
    out.n = reduce([](const InnovationSums &s) { return s.n; });
    out.s1 = reduce([](const InnovationSums &s) { return s.s1; });
    out.s2 = reduce([](const InnovationSums &s) { return s.s2; });
    for (std::size_t l = 0; l < kMaxLag; ++l) {
        out.lag[l] = reduce([l](const InnovationSums &s) { return s.lag[l]; });
        out.lag_n[l] = reduce([l](const InnovationSums &s) { return s.lag_n[l]; });
    }
    return out;
}

std::pair<double, double> mean_var(const std::vector<double> &v) {
    const double n = static_cast<double>(v.size());
    const double mean = pairwise_sum(v) / n;
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        d[i] = (v[i] - mean) * (v[i] - mean);
    return {mean, n > 1.0 ? pairwise_sum(d) / (n - 1.0) : 0.0};
}

} // namespace

EnsembleStats monte_carlo_estimator_variance(const MonteCarloConfig &cfg) {
    const PhysicalParams &params = cfg.params;
    params.validate();
    if (cfg.n_traj < 2)
        fail(ErrorKind::InvalidArgument, "Monte Carlo needs at least two trajectories");
    const double dt = cfg.dt > 0.0 ? cfg.dt : params.tau / 20000.0;
    const std::size_t n = steps_for(params.tau, dt);
    check_schedule_grid(cfg.schedule, dt);

    const auto model = filter::build_model(params, cfg.truth.basis);
    const filter::Mat3 P0 = filter::initial_covariance(
        params, cfg.initial, cfg.schedule.k.front(), cfg.epsilon, cfg.prior_variance);
    const auto initial = dynamics::from_covariance(0.0, 0.0, P0(0, 0), P0(1, 1), P0(0, 1),
                                                   params);
    const auto path = filter::covariance_path(P0, cfg.schedule, model, dt);
    filter::Mat3 P0_known = P0;
    P0_known.row(2).setZero();
    P0_known.col(2).setZero();
    std::vector<filter::Mat3> path_known;
    if (cfg.whiteness)
        path_known = filter::covariance_path(P0_known, cfg.schedule, model, dt);

    const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, cfg.store_points));
    std::vector<std::size_t> stored;
    for (std::size_t j = 0; j <= n; j += stride)
        stored.push_back(j);
    if (stored.back() != n)
        stored.push_back(n);

    std::vector<double> k_mid(n), f_mid(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double tm = (static_cast<double>(j) + 0.5) * dt;
        k_mid[j] = cfg.schedule.k_at(tm);
        f_mid[j] = model.force_shape(tm);
    }
    const filter::MeanPropagator drift(params, dt);
    const double theta = cfg.truth.theta;
    const filter::Mat3 P_end = path.back();

    std::vector<TrajectoryResult> results(cfg.n_traj);
    parallel_for(cfg.n_traj, cfg.threads, [&](std::size_t i) {
        const auto rec = generate_record(params, cfg.truth, cfg.schedule, initial, dt,
                                         cfg.seed, i);
        TrajectoryResult &out = results[i];
        out.errors.reserve(stored.size());
        filter::Vec3 mean = filter::Vec3::Zero();
        filter::Vec3 known(0.0, 0.0, theta);
        std::vector<double> z;
        if (cfg.whiteness)
            z.resize(n);
        std::size_t next = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (next < stored.size() && stored[next] == j) {
                out.errors.push_back(mean(2) - theta);
                ++next;
            }
            if (cfg.whiteness) {
                z[j] = (rec.dxi[j] - known(0) * dt) / std::sqrt(dt / (2.0 * k_mid[j]));
                known = filter::kalman_mean_step(known, path_known[j], k_mid[j], f_mid[j],
                                                 rec.dxi[j], drift);
            }
            mean = filter::kalman_mean_step(mean, path[j], k_mid[j], f_mid[j], rec.dxi[j],
                                            drift);
        }
        out.errors.push_back(mean(2) - theta);
        if (cfg.schedule.terminal_projective && rec.terminal_position)
            mean = filter::projective_mean_update(mean, P_end, *rec.terminal_position);
        out.final_error = mean(2) - theta;
        if (cfg.whiteness)
            out.innovations.add_sequence(z);
    });

    EnsembleStats s;
    s.n_traj = cfg.n_traj;
    std::vector<double> col(cfg.n_traj);
    for (std::size_t q = 0; q < stored.size(); ++q) {
        for (std::size_t i = 0; i < cfg.n_traj; ++i)
            col[i] = results[i].errors[q];
        const auto [m, v] = mean_var(col);
        s.times.push_back(static_cast<double>(stored[q]) * dt);
        s.error_mean.push_back(m);
        s.error_var.push_back(v);
        s.riccati_var.push_back(path[stored[q]](2, 2));
    }
    s.final_errors.resize(cfg.n_traj);
    for (std::size_t i = 0; i < cfg.n_traj; ++i)
        s.final_errors[i] = results[i].final_error;
    const auto [fm, fv] = mean_var(s.final_errors);
    s.final_error_mean = fm;
    s.final_error_var = fv;
    s.final_riccati_var = cfg.schedule.terminal_projective
                              ? filter::projective_reduction(P_end)(2, 2)
                              : P_end(2, 2);
    s.variance_ratio = s.final_error_var / s.final_riccati_var;
    s.mean_se = std::sqrt(s.final_riccati_var / static_cast<double>(cfg.n_traj));
    if (cfg.whiteness)
        s.innovations = reduce_sums(results).stats();
    return s;
}

} // namespace qforce::sim
