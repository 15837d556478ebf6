#include <qforce_app/commands.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include <qforce/analytics.hpp>
#include <qforce/detection.hpp>
#include <qforce/error.hpp>
#include <qforce/grid_bayes.hpp>
#include <qforce/parallel.hpp>
#include <qforce/record.hpp>
#include <qforce/schedule_optimizer.hpp>
#include <qforce/state_space.hpp>
#include <qforce/trajectory.hpp>

namespace qforce::app {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double x) { return fmt::format("{:.12g}", x); }

/// JSON has no NaN or inf; those become null.
ordered_json jnum(double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(); }

void ensure_dir(const fs::path &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorKind::Io, "cannot write " + path.string());
    return out;
}

void write_text(const fs::path &path, const std::string &text) {
    auto out = open_out(path);
    out << text;
    if (!out)
        fail(ErrorKind::Io, "write failed: " + path.string());
}

void write_json(const fs::path &path, const ordered_json &j) { write_text(path, j.dump(2) + "\n"); }

std::string csv_row(const std::vector<std::string> &fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            line += ',';
        line += csv_field(fields[i]);
    }
    return line + "\n";
}

std::string join(const std::vector<std::string> &v, const char *sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? sep : "") + v[i];
    return s;
}

sim::Signal truth(const Config &config) { return {config.signal.build(), config.signal.theta}; }

ordered_json innovations_json(const sim::InnovationStats &s) {
    ordered_json lags = ordered_json::array();
    for (std::size_t l = 0; l < sim::kMaxLag; ++l)
        lags.push_back(jnum(s.autocorr[l]));
    return {{"samples", s.samples},
            {"mean", jnum(s.mean)},
            {"mean_se", jnum(s.mean_se)},
            {"variance_ratio", jnum(s.variance_ratio)},
            {"autocorr", lags},
            {"white", s.white()}};
}

std::string units(const Config &config) { return config.dimensionless ? "rescaled" : "physical"; }

/// Record from config.record or trajectory 0 of the configured simulation,
/// checked against the config's horizon, step and schedule.
MeasurementRecord load_or_simulate(const Config &config, std::size_t trajectory = 0) {
    const PhysicalParams params = config.model_params();
    const SensitivitySchedule sched = config.build_schedule();
    MeasurementRecord rec;
    if (!config.record.empty()) {
        const fs::path path = config.record_path();
        std::ifstream in(path, std::ios::binary);
        if (!in)
            fail(ErrorKind::Io, "cannot read record " + path.string());
        rec = read_record_csv(in);
        rec.validate_grid(params.tau, config.simulation.dt);
        rec.params = params;
        rec.schedule = sched;
        rec.seed = config.simulation.seed;
        rec.trajectory = trajectory;
    } else {
        rec = sim::generate_record(params, truth(config), sched, initial_state(config),
                                   config.simulation.dt, config.simulation.seed, trajectory);
    }
    check_schedule_grid(sched, rec.dt);
    return rec;
}

std::size_t stride_for(std::size_t steps, std::size_t points) {
    return points == 0 ? 0 : std::max<std::size_t>(1, steps / points);
}

} // namespace

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos)
        return std::string(s);
    std::string q = "\"";
    for (char c : s) {
        if (c == '"')
            q += '"';
        q += c;
    }
    return q + "\"";
}

ordered_json provenance(const Config &config, std::string_view command) {
    return {{"tool", "qforce"},
            {"version", QFORCE_VERSION},
            {"command", std::string(command)},
            {"config_hash", config_hash(config)},
            {"seed", config.simulation.seed}};
}

std::string provenance_line(const Config &config, std::string_view command) {
    return fmt::format("qforce {} command={} config={} seed={}", QFORCE_VERSION, command,
                       config_hash(config), config.simulation.seed);
}

// ---- simulate

ordered_json cmd_simulate(const Config &config, const RunOptions &options) {
    config.validate();
    ensure_dir(options.out);
    const PhysicalParams params = config.model_params();
    const SensitivitySchedule sched = config.build_schedule();
    const std::string comment = provenance_line(config, "simulate");
    const std::string prov = provenance(config, "simulate").dump();
    check_schedule_grid(sched, config.simulation.dt);

    ordered_json summary;
    summary["provenance"] = provenance(config, "simulate");
    summary["units"] = units(config);

    const auto initial = initial_state(config);
    const std::size_t n_records = config.simulation.records;
    std::vector<MeasurementRecord> records(n_records);
    parallel_for(n_records, options.threads, [&](std::size_t r) {
        records[r] = sim::generate_record(params, truth(config), sched, initial,
                                          config.simulation.dt, config.simulation.seed, r);
    });
    ordered_json files = ordered_json::array();
    for (std::size_t r = 0; r < n_records; ++r) {
        const std::string name = fmt::format("record_{:04d}.csv", r);
        auto out = open_out(options.out / name);
        write_record_csv(out, records[r], comment);
        write_text(options.out / fmt::format("record_{:04d}.json", r),
                   record_envelope_json(records[r], name, prov) + "\n");
        ordered_json f{{"csv", name}, {"steps", records[r].size()}};
        if (records[r].terminal_position)
            f["terminal_position"] = *records[r].terminal_position;
        files.push_back(f);
    }
    summary["records"] = files;

    if (config.simulation.n_traj >= 2) {
        sim::MonteCarloConfig mc;
        mc.params = params;
        mc.truth = truth(config);
        mc.schedule = sched;
        mc.initial = config.initial.policy;
        mc.epsilon = config.initial.epsilon;
        mc.prior_variance = config.initial.prior_variance;
        mc.n_traj = config.simulation.n_traj;
        mc.dt = config.simulation.dt;
        mc.seed = config.simulation.seed;
        mc.threads = options.threads;
        mc.store_points = config.simulation.store_points;
        const auto stats = sim::monte_carlo_estimator_variance(mc);

        std::string csv = "# " + comment + "\n" +
                          csv_row({"t", "error_mean", "error_var", "riccati_var"});
        for (std::size_t i = 0; i < stats.times.size(); ++i)
            csv += csv_row({num(stats.times[i]), num(stats.error_mean[i]),
                            num(stats.error_var[i]), num(stats.riccati_var[i])});
        write_text(options.out / "ensemble.csv", csv);

        summary["ensemble"] = {{"n_traj", stats.n_traj},
                               {"final_error_mean", jnum(stats.final_error_mean)},
                               {"mean_se", jnum(stats.mean_se)},
                               {"final_error_var", jnum(stats.final_error_var)},
                               {"final_riccati_var", jnum(stats.final_riccati_var)},
                               {"variance_ratio", jnum(stats.variance_ratio)},
                               {"within_band", stats.variance_ratio >= 0.85 && stats.variance_ratio <= 1.15},
                               {"innovations", innovations_json(stats.innovations)}};
    }
    write_json(options.out / "simulate.json", summary);
    return summary;
}

// ---- filter

ordered_json cmd_filter(const Config &config, const RunOptions &options) {
    config.validate();
    ensure_dir(options.out);
    const PhysicalParams params = config.model_params();
    const SensitivitySchedule sched = config.build_schedule();
    const MeasurementRecord rec = load_or_simulate(config);
    const auto model = filter::build_model(params, config.signal.build());

    filter::Vec3 mean0 = filter::Vec3::Zero();
    filter::RunOptions ro;
    ro.dt = rec.dt;
    ro.store_stride = stride_for(rec.size(), config.simulation.store_points);
    const auto traj = filter::run_schedule(initial_P(config), mean0, sched, model, &rec, ro);

    std::string csv = "# " + provenance_line(config, "filter") + "\n" +
                      csv_row({"t", "x_hat", "p_hat", "theta_hat", "P11", "P22", "P33", "P13"});
    for (std::size_t i = 0; i < traj.t.size(); ++i) {
        const auto &m = traj.mean[i];
        const auto &P = traj.P[i];
        csv += csv_row({num(traj.t[i]), num(m(0)), num(m(1)), num(m(2)), num(P(0, 0)),
                        num(P(1, 1)), num(P(2, 2)), num(P(0, 2))});
    }
    write_text(options.out / "filter.csv", csv);

    const auto &end = traj.terminal;
    ordered_json summary;
    summary["provenance"] = provenance(config, "filter");
    summary["units"] = units(config);
    summary["record"] = config.record.empty() ? ordered_json("simulated") : ordered_json(config.record);
    summary["steps"] = rec.size();
    summary["theta_hat"] = jnum(end.mean(2));
    summary["theta_variance"] = jnum(end.P(2, 2));
    summary["theta_sd"] = jnum(std::sqrt(end.P(2, 2)));
    if (config.record.empty()) {
        summary["theta_true"] = config.signal.theta;
        summary["z_error"] = jnum((end.mean(2) - config.signal.theta) / std::sqrt(end.P(2, 2)));
    }
    summary["terminal_projective"] = sched.terminal_projective;
    summary["innovations"] = innovations_json(sim::innovation_whiteness(rec, traj));
    write_json(options.out / "filter.json", summary);
    return summary;
}

// ---- grid-bayes

ordered_json cmd_grid_bayes(const Config &config, const RunOptions &options) {
    config.validate();
    ensure_dir(options.out);
    const PhysicalParams params = config.model_params();
    SensitivitySchedule sched = config.build_schedule();
    sched.terminal_projective = false;
    MeasurementRecord rec = load_or_simulate(config);
    rec.schedule = sched;

    const auto &g = config.grid_bayes;
    const bool gaussian = g.prior == "gaussian";
    const double half = g.prior_sigmas * std::sqrt(g.prior_variance);
    const double lo = g.theta_min.value_or(g.prior_mean - half);
    const double hi = g.theta_max.value_or(g.prior_mean + half);
    gridbayes::Prior prior;
    prior.kind = gaussian ? gridbayes::Prior::Kind::Gaussian : gridbayes::Prior::Kind::Flat;
    prior.mean = g.prior_mean;
    prior.variance = g.prior_variance;

    const ForceBasis basis = config.signal.build();
    auto post = gridbayes::init_grid(lo, hi, g.n, prior, initial_state(config), params);
    post = gridbayes::run_grid(std::move(post), rec, basis, g.linear);
    const auto mom = gridbayes::posterior_moments(post);

    auto out = open_out(options.out / "posterior.csv");
    gridbayes::write_posterior_csv(out, post, provenance_line(config, "grid-bayes"));

    // Kalman filter with the same prior for comparison.
    const auto model = filter::build_model(params, basis);
    const auto P0 = filter::initial_covariance(params, config.initial.policy, sched.k.front(),
                                               config.initial.epsilon,
                                               gaussian ? g.prior_variance : 0.0);
    filter::Vec3 mean0(0.0, 0.0, gaussian ? g.prior_mean : 0.0);
    filter::RunOptions ro;
    ro.dt = rec.dt;
    const auto kf = filter::run_schedule(P0, mean0, sched, model, &rec, ro);
    const double kf_var = kf.terminal.P(2, 2);

    const auto w = gridbayes::normalized_weights(post);
    const double edge = std::max(w.front(), w.back()) * post.spacing();

    ordered_json summary;
    summary["provenance"] = provenance(config, "grid-bayes");
    summary["units"] = units(config);
    summary["grid"] = {{"n", g.n}, {"theta_min", lo}, {"theta_max", hi}, {"prior", g.prior},
                       {"linear", g.linear}};
    summary["posterior_mean"] = jnum(mom.mean);
    summary["posterior_variance"] = jnum(mom.variance);
    summary["edge_mass"] = jnum(edge);
    summary["kalman_mean"] = jnum(kf.terminal.mean(2));
    summary["kalman_variance"] = jnum(kf_var);
    summary["mean_difference_sd"] = jnum((mom.mean - kf.terminal.mean(2)) / std::sqrt(kf_var));
    summary["variance_ratio"] = jnum(mom.variance / kf_var);
    if (config.record.empty())
        summary["theta_true"] = config.signal.theta;
    write_json(options.out / "grid-bayes.json", summary);
    return summary;
}

// ---- sql-table

namespace {

schedopt::ScheduleOptProblem optimizer_problem(const Config &config, const PhysicalParams &params,
                                               unsigned threads) {
    const auto &o = config.optimizer;
    schedopt::ScheduleOptProblem p;
    p.n_intervals = o.n_intervals;
    p.params = params;
    p.basis = config.signal.build();
    p.initial = o.initial;
    p.epsilon = config.initial.epsilon;
    p.prior_variance = config.initial.prior_variance;
    p.log_k_min = o.log_k_min;
    p.log_k_max = o.log_k_max;
    p.max_iters = o.max_iters;
    p.rel_tol = o.rel_tol;
    p.patience = o.patience;
    p.grad_tol = o.grad_tol;
    p.fd_step = o.fd_step;
    p.dt = config.simulation.dt;
    p.threads = threads;
    p.validate();
    return p;
}

std::size_t count_decreases(const std::vector<double> &k) {
    std::size_t d = 0;
    for (std::size_t i = 1; i < k.size(); ++i)
        d += k[i] < k[i - 1];
    return d;
}

} // namespace

std::vector<SqlRow> sql_rows(const Config &config, unsigned threads) {
    PhysicalParams free = config.model_params();
    free.omega = 0.0;
    const auto scale = filter::nondimensionalize(free);
    const double single = sql::sql_von_neumann(free).sigma_physical;

    std::vector<SqlRow> rows;
    auto add = [&](const sql::SqlResult &r, double omega_tau) {
        rows.push_back({sql::to_string(r.regime), omega_tau, r.sigma_theta, r.sigma_physical,
                        r.sigma_physical / single, r.optimal_k, r.flags});
    };
    add(sql::sql_von_neumann(free), 0.0);
    add(sql::sql_free_steady(free), 0.0);
    add(sql::sql_free_optimal_init(free), 0.0);
    add(sql::sql_free_projective_end(free), 0.0);

    if (config.sql_table.scheduled) {
        Config c = config;
        c.signal = SignalSpec{};
        auto problem = optimizer_problem(c, free, threads);
        const auto res = schedopt::optimize(problem, schedopt::default_initial_schedule(problem));
        SqlRow row{sql::to_string(sql::Regime::Scheduled), 0.0,
                   res.K / scale.theta_variance_unit(), res.K, res.K / single, kNaN, {}};
        if (!res.converged)
            row.flags.push_back("not converged");
        if (count_decreases(res.schedule.k) > 0)
            row.flags.push_back("k(t) not monotone");
        rows.push_back(row);
    }

    for (double wt : config.sql_table.omega_tau) {
        PhysicalParams osc = free;
        osc.omega = wt / free.tau;
        add(sql::sql_oscillator(osc, sql::OscillatorRegime::ResonantFlatSpectrum,
                                config.sql_table.spectrum_abs2),
            wt);
        add(sql::sql_oscillator(osc, sql::OscillatorRegime::ConstantForce), wt);
    }
    return rows;
}

ordered_json cmd_sql_table(const Config &config, const RunOptions &options) {
    config.validate();
    ensure_dir(options.out);
    const auto rows = sql_rows(config, options.threads);

    std::string csv = "# " + provenance_line(config, "sql-table") + "\n" +
                      csv_row({"regime", "omega_tau", "sigma_rescaled", "sigma_physical",
                               "ratio_to_single_shot", "optimal_k_rescaled", "flags"});
    ordered_json table = ordered_json::array();
    for (const auto &r : rows) {
        csv += csv_row({r.regime, num(r.omega_tau), num(r.sigma_rescaled), num(r.sigma_physical),
                        num(r.ratio_to_single_shot), std::isfinite(r.optimal_k) ? num(r.optimal_k) : "",
                        join(r.flags, "; ")});
        table.push_back({{"regime", r.regime},
                         {"omega_tau", r.omega_tau},
                         {"sigma_rescaled", jnum(r.sigma_rescaled)},
                         {"sigma_physical", jnum(r.sigma_physical)},
                         {"ratio_to_single_shot", jnum(r.ratio_to_single_shot)},
                         {"optimal_k_rescaled", jnum(r.optimal_k)},
                         {"flags", r.flags}});
    }
    write_text(options.out / "sql_table.csv", csv);

    ordered_json summary;
    summary["provenance"] = provenance(config, "sql-table");
    summary["rows"] = table;
    write_json(options.out / "sql-table.json", summary);
    return summary;
}

// ---- optimize-schedule

ordered_json cmd_optimize_schedule(const Config &config, const RunOptions &options) {
    config.validate();
    ensure_dir(options.out);
    const PhysicalParams params = config.model_params();
    const auto scale = filter::nondimensionalize(params);
    const auto problem = optimizer_problem(config, params, options.threads);
    const auto res = schedopt::optimize(problem, schedopt::default_initial_schedule(problem));
    const std::string comment = "# " + provenance_line(config, "optimize-schedule") + "\n";

    std::string csv = comment + csv_row({"t_start", "t_end", "k", "k_rescaled"});
    const auto &s = res.schedule;
    for (std::size_t i = 0; i < s.size(); ++i)
        csv += csv_row({num(s.breakpoints[i]), num(s.breakpoints[i + 1]), num(s.k[i]),
                        num(scale.k_to_dimensionless(s.k[i]))});
    write_text(options.out / "schedule.csv", csv);

    std::string hist = comment + csv_row({"iteration", "K"});
    for (std::size_t i = 0; i < res.history.size(); ++i)
        hist += csv_row({std::to_string(i), num(res.history[i])});
    write_text(options.out / "history.csv", hist);

    ordered_json summary;
    summary["provenance"] = provenance(config, "optimize-schedule");
    summary["units"] = units(config);
    summary["K"] = jnum(res.K);
    summary["K_rescaled"] = jnum(res.K / scale.theta_variance_unit());
    summary["ratio_to_single_shot"] = jnum(res.K / sql::sql_von_neumann(params).sigma_physical);
    summary["iterations"] = res.iterations;
    summary["converged"] = res.converged;
    summary["gradient_norm"] = jnum(res.gradient_norm);
    summary["k_decreases"] = count_decreases(s.k);
    write_json(options.out / "optimize-schedule.json", summary);
    return summary;
}

// ---- detect

ordered_json cmd_detect(const Config &config, const RunOptions &options) {
    config.validate();
    ensure_dir(options.out);
    const PhysicalParams params = config.model_params();
    const auto &d = config.detection;
    detect::ThresholdPolicy policy;
    policy.min_window = d.min_window;
    policy.max_window = d.max_window;
    policy.growth = d.growth;
    policy.search_from = d.search_from;
    policy.two_sided = d.two_sided;

    const std::size_t runs = config.record.empty() ? d.runs : 1;
    std::vector<detect::DetectionResult> results(runs);
    std::vector<std::size_t> windows(runs);
    parallel_for(runs, options.threads, [&](std::size_t r) {
        const MeasurementRecord rec = load_or_simulate(config, r);
        detect::ThresholdPolicy p = policy;
        windows[r] = detect::count_windows(rec, p);
        p.z = d.z > 0.0 ? d.z : detect::familywise_z(d.alpha, windows[r], d.two_sided);
        results[r] = detect::online_detect(rec, p);
    });

    const std::string comment = "# " + provenance_line(config, "detect") + "\n";
    const auto &first = results.front();
    std::string csv = comment + csv_row({"t", "z_max", "threshold"});
    for (std::size_t i = 0; i < first.t.size(); ++i)
        csv += csv_row({num(first.t[i]), num(first.z_max[i]), num(first.threshold)});
    write_text(options.out / "detection.csv", csv);

    std::string per_run = comment + csv_row({"run", "detected", "t_detect", "window_start",
                                             "statistic", "threshold"});
    std::size_t hits = 0;
    for (std::size_t r = 0; r < runs; ++r) {
        const auto &x = results[r];
        hits += x.detected;
        per_run += csv_row({std::to_string(r), x.detected ? "1" : "0",
                            x.detected ? num(x.t_detect) : "", x.detected ? num(x.window_start) : "",
                            num(x.statistic), num(x.threshold)});
    }
    write_text(options.out / "detections.csv", per_run);

    ordered_json summary;
    summary["provenance"] = provenance(config, "detect");
    summary["units"] = units(config);
    summary["runs"] = runs;
    summary["windows"] = windows.front();
    summary["threshold_z"] = jnum(first.threshold);
    summary["detected"] = hits;
    summary["fraction_detected"] = static_cast<double>(hits) / static_cast<double>(runs);
    if (first.detected)
        summary["first_run_t_detect"] = first.t_detect;

    const auto kick = detect::kick_min();
    const auto step = detect::constant_min();
    ordered_json bounds{{"kick_kappa", kick.kappa},
                        {"kick_factor", kick.factor},
                        {"constant_kappa", step.kappa},
                        {"constant_factor", step.factor}};
    const auto &sig = config.signal;
    const double theta = std::abs(sig.theta);
    if (theta > 0.0 && (sig.basis == "constant" || sig.basis == "step"))
        bounds["constant_horizon"] = jnum(detect::constant_detection_horizon(params, theta));
    if (theta > 0.0 && sig.basis == "kick")
        bounds["kick_horizon"] = jnum(detect::kick_detection_horizon(
            params, theta / sig.width, sig.width * params.tau));
    summary["analytic"] = bounds;
    write_json(options.out / "detect.json", summary);
    return summary;
}

// ---- dispatch and errors

const std::vector<std::string> &command_names() {
    static const std::vector<std::string> names{"simulate",  "filter",            "grid-bayes",
                                                "sql-table", "optimize-schedule", "detect"};
    return names;
}

ordered_json run_command(std::string_view command, const Config &config,
                         const RunOptions &options) {
    if (command == "simulate")
        return cmd_simulate(config, options);
    if (command == "filter")
        return cmd_filter(config, options);
    if (command == "grid-bayes")
        return cmd_grid_bayes(config, options);
    if (command == "sql-table")
        return cmd_sql_table(config, options);
    if (command == "optimize-schedule")
        return cmd_optimize_schedule(config, options);
    if (command == "detect")
        return cmd_detect(config, options);
    fail(ErrorKind::InvalidArgument, "unknown command '" + std::string(command) + "'");
}

int exit_code_for(const std::exception &e) {
    if (const auto *err = dynamic_cast<const Error *>(&e))
        return is_numerical(err->kind()) ? 3 : 2;
    return 1;
}

ordered_json error_json(const std::exception &e) {
    const auto *err = dynamic_cast<const Error *>(&e);
    return {{"error",
             {{"kind", err ? to_string(err->kind()) : "internal"},
              {"message", e.what()},
              {"exit_code", exit_code_for(e)}}}};
}

} // namespace qforce::app
