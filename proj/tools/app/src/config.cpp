#include <qforce_app/config.hpp>

#include <qforce/error.hpp>
#include <qforce/record.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace qforce::app {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string &msg) { fail(ErrorKind::InvalidArgument, msg); }

// JSON object view; allow() rejects keys outside a fixed list.
class Section {
  public:
    Section(const json &j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object())
            invalid("'" + name_ + "' must be a JSON object");
    }

    void allow(std::initializer_list<const char *> keys) const {
        for (const auto &[key, value] : j_.items()) {
            bool ok = false;
            for (const char *k : keys)
                ok = ok || key == k;
            if (!ok)
                invalid("unknown field '" + key + "' in '" + name_ + "'");
        }
    }

    bool has(const char *key) const { return j_.contains(key); }
    Section sub(const char *key) const { return Section(j_.at(key), name_ + "." + key); }

    template <typename T> void get(const char *key, T &out) const {
        if (!j_.contains(key))
            return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception &) {
            invalid("field '" + name_ + "." + key + "' has the wrong type");
        }
    }

    void number(const char *key, double &out) const {
        if (!j_.contains(key))
            return;
        if (!j_.at(key).is_number())
            invalid("field '" + name_ + "." + key + "' must be a number");
        out = j_.at(key).get<double>();
        if (!std::isfinite(out))
            invalid("field '" + name_ + "." + key + "' must be finite");
    }

    void count(const char *key, std::size_t &out) const {
        if (!j_.contains(key))
            return;
        const auto &v = j_.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            invalid("field '" + name_ + "." + key + "' must be a non-negative integer");
        out = v.get<std::size_t>();
    }

    void numbers(const char *key, std::vector<double> &out) const {
        if (!j_.contains(key))
            return;
        const auto &v = j_.at(key);
        if (v.is_number()) {
            out = {v.get<double>()};
            return;
        }
        if (!v.is_array())
            invalid("field '" + name_ + "." + key + "' must be a number or an array of numbers");
        out.clear();
        for (const auto &x : v) {
            if (!x.is_number())
                invalid("field '" + name_ + "." + key + "' must contain numbers only");
            out.push_back(x.get<double>());
        }
    }

  private:
    const json &j_;
    std::string name_;
};

filter::InitialPolicy parse_policy(const std::string &s, const std::string &where) {
    if (s == "steady-state")
        return filter::InitialPolicy::SteadyState;
    if (s == "optimal-init")
        return filter::InitialPolicy::OptimalInit;
    invalid("'" + where + "' must be \"steady-state\" or \"optimal-init\"");
}

const char *policy_name(filter::InitialPolicy p) {
    return p == filter::InitialPolicy::SteadyState ? "steady-state" : "optimal-init";
}

} // namespace

ForceBasis SignalSpec::build() const {
    if (basis == "zero")
        return ForceBasis::zero();
    if (basis == "constant")
        return ForceBasis::constant();
    if (basis == "kick")
        return ForceBasis::kick(center, width);
    if (basis == "step")
        return ForceBasis::step(onset);
    if (basis == "sinusoid")
        return ForceBasis::sinusoid(frequency, phase);
    if (basis == "table")
        return ForceBasis::table(s, values);
    invalid("unknown signal basis '" + basis + "'");
}

PhysicalParams Config::model_params() const {
    return dimensionless ? PhysicalParams::dimensionless(params.omega_tau()) : params;
}

SensitivitySchedule Config::build_schedule() const {
    const double tau = model_params().tau;
    SensitivitySchedule s;
    if (schedule.breakpoints.empty()) {
        s = SensitivitySchedule::uniform(schedule.k, tau, schedule.terminal_projective);
    } else {
        s.breakpoints = schedule.breakpoints;
        s.k = schedule.k;
        s.terminal_projective = schedule.terminal_projective;
    }
    s.validate(tau);
    return s;
}

std::filesystem::path Config::record_path() const {
    if (record.empty())
        return {};
    const std::filesystem::path p(record);
    return p.is_absolute() ? p : base_dir / p;
}

void Config::validate() const {
    params.validate();
    const PhysicalParams p = model_params();
    if (schedule.k.empty())
        invalid("schedule.k must not be empty");
    const SensitivitySchedule sched = build_schedule();
    (void)signal.build();
    if (!(simulation.dt > 0.0))
        invalid("simulation.dt must be positive");
    (void)steps_for(p.tau, simulation.dt);
    check_schedule_grid(sched, simulation.dt);
    if (simulation.n_traj < 1)
        invalid("simulation.n_traj must be >= 1");
    if (!(initial.epsilon > 0.0))
        invalid("initial.epsilon must be positive");
    if (grid_bayes.n < 1)
        invalid("grid_bayes.n must be >= 1");
    if (grid_bayes.prior != "gaussian" && grid_bayes.prior != "flat")
        invalid("grid_bayes.prior must be \"gaussian\" or \"flat\"");
    if (grid_bayes.prior == "gaussian" && !(grid_bayes.prior_variance > 0.0))
        invalid("grid_bayes.prior_variance must be positive");
    if (grid_bayes.prior == "flat" && !(grid_bayes.theta_min && grid_bayes.theta_max))
        invalid("a flat grid prior needs grid_bayes.theta_min and theta_max");
    if (grid_bayes.theta_min.has_value() != grid_bayes.theta_max.has_value())
        invalid("grid_bayes.theta_min and theta_max go together");
    if (grid_bayes.theta_min && !(*grid_bayes.theta_max > *grid_bayes.theta_min))
        invalid("grid_bayes.theta_max must exceed theta_min");
    if (!(grid_bayes.prior_sigmas > 0.0))
        invalid("grid_bayes.prior_sigmas must be positive");
    if (optimizer.n_intervals < 1)
        invalid("optimizer.n_intervals must be >= 1");
    if (!(optimizer.log_k_max > optimizer.log_k_min))
        invalid("optimizer.log_k_max must exceed log_k_min");
    if (!(optimizer.rel_tol > 0.0) || optimizer.patience < 1 || !(optimizer.fd_step > 0.0) ||
        !(optimizer.grad_tol >= 0.0))
        invalid("optimizer tolerances must be positive");
    if (!(detection.alpha > 0.0 && detection.alpha < 1.0))
        invalid("detection.alpha must lie in (0, 1)");
    if (!(detection.growth > 1.0))
        invalid("detection.growth must exceed 1");
    if (detection.min_window < 0.0 || detection.max_window < 0.0 || detection.search_from < 0.0)
        invalid("detection windows must be >= 0");
    if (detection.runs < 1)
        invalid("detection.runs must be >= 1");
    for (double w : sql_table.omega_tau)
        if (!(w > 0.0))
            invalid("sql_table.omega_tau entries must be positive");
    if (!(sql_table.spectrum_abs2 > 0.0))
        invalid("sql_table.spectrum_abs2 must be positive");
}

nlohmann::ordered_json Config::to_json() const {
    nlohmann::ordered_json j;
    j["params"] = {{"mass", params.mass}, {"omega", params.omega}, {"hbar", params.hbar},
                   {"tau", params.tau}};
    j["dimensionless"] = dimensionless;
    j["schedule"] = {{"k", schedule.k},
                     {"breakpoints", schedule.breakpoints},
                     {"terminal_projective", schedule.terminal_projective}};
    j["signal"] = {{"basis", signal.basis},   {"theta", signal.theta},
                   {"center", signal.center}, {"width", signal.width},
                   {"onset", signal.onset},   {"frequency", signal.frequency},
                   {"phase", signal.phase},   {"s", signal.s},
                   {"values", signal.values}};
    j["initial"] = {{"policy", policy_name(initial.policy)},
                    {"epsilon", initial.epsilon},
                    {"prior_variance", initial.prior_variance}};
    j["simulation"] = {{"dt", simulation.dt},
                       {"n_traj", simulation.n_traj},
                       {"seed", simulation.seed},
                       {"records", simulation.records},
                       {"store_points", simulation.store_points}};
    nlohmann::ordered_json g = {{"n", grid_bayes.n},
                                {"prior", grid_bayes.prior},
                                {"prior_mean", grid_bayes.prior_mean},
                                {"prior_variance", grid_bayes.prior_variance},
                                {"prior_sigmas", grid_bayes.prior_sigmas},
                                {"linear", grid_bayes.linear}};
    if (grid_bayes.theta_min) {
        g["theta_min"] = *grid_bayes.theta_min;
        g["theta_max"] = *grid_bayes.theta_max;
    }
    j["grid_bayes"] = g;
    j["optimizer"] = {{"n_intervals", optimizer.n_intervals},
                      {"initial", policy_name(optimizer.initial)},
                      {"max_iters", optimizer.max_iters},
                      {"rel_tol", optimizer.rel_tol},
                      {"patience", optimizer.patience},
                      {"fd_step", optimizer.fd_step},
                      {"grad_tol", optimizer.grad_tol},
                      {"log_k_min", optimizer.log_k_min},
                      {"log_k_max", optimizer.log_k_max}};
    j["detection"] = {{"z", detection.z},
                      {"alpha", detection.alpha},
                      {"min_window", detection.min_window},
                      {"max_window", detection.max_window},
                      {"growth", detection.growth},
                      {"search_from", detection.search_from},
                      {"two_sided", detection.two_sided},
                      {"runs", detection.runs}};
    j["sql_table"] = {{"omega_tau", sql_table.omega_tau},
                      {"spectrum_abs2", sql_table.spectrum_abs2},
                      {"scheduled", sql_table.scheduled}};
    j["record"] = record;
    return j;
}

Config parse_config(const nlohmann::json &doc, const std::filesystem::path &base_dir) {
    Config c;
    c.base_dir = base_dir;
    const Section root(doc, "config");
    root.allow({"params", "dimensionless", "schedule", "signal", "initial", "simulation",
                "grid_bayes", "optimizer", "detection", "sql_table", "record", "output"});
    root.get("dimensionless", c.dimensionless);
    root.get("record", c.record);
    root.get("output", c.output);

    if (root.has("params")) {
        const Section s = root.sub("params");
        s.allow({"mass", "omega", "hbar", "tau"});
        s.number("mass", c.params.mass);
        s.number("omega", c.params.omega);
        s.number("hbar", c.params.hbar);
        s.number("tau", c.params.tau);
    }
    if (root.has("schedule")) {
        const Section s = root.sub("schedule");
        s.allow({"k", "breakpoints", "terminal_projective"});
        s.numbers("k", c.schedule.k);
        s.numbers("breakpoints", c.schedule.breakpoints);
        s.get("terminal_projective", c.schedule.terminal_projective);
    }
    if (root.has("signal")) {
        const Section s = root.sub("signal");
        s.allow({"basis", "theta", "center", "width", "onset", "frequency", "phase", "s", "values"});
        s.get("basis", c.signal.basis);
        s.number("theta", c.signal.theta);
        s.number("center", c.signal.center);
        s.number("width", c.signal.width);
        s.number("onset", c.signal.onset);
        s.number("frequency", c.signal.frequency);
        s.number("phase", c.signal.phase);
        s.numbers("s", c.signal.s);
        s.numbers("values", c.signal.values);
    }
    if (root.has("initial")) {
        const Section s = root.sub("initial");
        s.allow({"policy", "epsilon", "prior_variance"});
        std::string policy = policy_name(c.initial.policy);
        s.get("policy", policy);
        c.initial.policy = parse_policy(policy, "initial.policy");
        s.number("epsilon", c.initial.epsilon);
        s.number("prior_variance", c.initial.prior_variance);
    }
    if (root.has("simulation")) {
        const Section s = root.sub("simulation");
        s.allow({"dt", "n_traj", "seed", "records", "store_points"});
        s.number("dt", c.simulation.dt);
        s.count("n_traj", c.simulation.n_traj);
        s.get("seed", c.simulation.seed);
        s.count("records", c.simulation.records);
        s.count("store_points", c.simulation.store_points);
    }
    if (root.has("grid_bayes")) {
        const Section s = root.sub("grid_bayes");
        s.allow({"n", "theta_min", "theta_max", "prior", "prior_mean", "prior_variance",
                 "prior_sigmas", "linear"});
        s.count("n", c.grid_bayes.n);
        if (s.has("theta_min")) {
            double v = 0.0;
            s.number("theta_min", v);
            c.grid_bayes.theta_min = v;
        }
        if (s.has("theta_max")) {
            double v = 0.0;
            s.number("theta_max", v);
            c.grid_bayes.theta_max = v;
        }
        s.get("prior", c.grid_bayes.prior);
        s.number("prior_mean", c.grid_bayes.prior_mean);
        s.number("prior_variance", c.grid_bayes.prior_variance);
        s.number("prior_sigmas", c.grid_bayes.prior_sigmas);
        s.get("linear", c.grid_bayes.linear);
    }
    if (root.has("optimizer")) {
        const Section s = root.sub("optimizer");
        s.allow({"n_intervals", "initial", "max_iters", "rel_tol", "patience", "fd_step",
                 "grad_tol", "log_k_min", "log_k_max"});
        s.count("n_intervals", c.optimizer.n_intervals);
        std::string policy = policy_name(c.optimizer.initial);
        s.get("initial", policy);
        c.optimizer.initial = parse_policy(policy, "optimizer.initial");
        s.count("max_iters", c.optimizer.max_iters);
        s.number("rel_tol", c.optimizer.rel_tol);
        s.count("patience", c.optimizer.patience);
        s.number("fd_step", c.optimizer.fd_step);
        s.number("grad_tol", c.optimizer.grad_tol);
        s.number("log_k_min", c.optimizer.log_k_min);
        s.number("log_k_max", c.optimizer.log_k_max);
    }
    if (root.has("detection")) {
        const Section s = root.sub("detection");
        s.allow({"z", "alpha", "min_window", "max_window", "growth", "search_from", "two_sided",
                 "runs"});
        s.number("z", c.detection.z);
        s.number("alpha", c.detection.alpha);
        s.number("min_window", c.detection.min_window);
        s.number("max_window", c.detection.max_window);
        s.number("growth", c.detection.growth);
        s.number("search_from", c.detection.search_from);
        s.get("two_sided", c.detection.two_sided);
        s.count("runs", c.detection.runs);
    }
    if (root.has("sql_table")) {
        const Section s = root.sub("sql_table");
        s.allow({"omega_tau", "spectrum_abs2", "scheduled"});
        s.numbers("omega_tau", c.sql_table.omega_tau);
        s.number("spectrum_abs2", c.sql_table.spectrum_abs2);
        s.get("scheduled", c.sql_table.scheduled);
    }
    return c;
}

Config load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::Io, "cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        invalid(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc, path.parent_path());
}

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string config_hash(const Config &config) { return fnv1a64_hex(config.to_json().dump()); }

filter::CovarianceMatrix initial_P(const Config &config) {
    return filter::initial_covariance(config.model_params(), config.initial.policy,
                                      config.build_schedule().k.front(), config.initial.epsilon,
                                      config.initial.prior_variance);
}

dynamics::GaussianState initial_state(const Config &config) {
    const auto P0 = initial_P(config);
    return dynamics::from_covariance(0.0, 0.0, P0(0, 0), P0(1, 1), P0(0, 1),
                                     config.model_params());
}

} // namespace qforce::app
