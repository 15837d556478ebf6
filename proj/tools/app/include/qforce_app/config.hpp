// Scenario configuration for the qforce command-line tool
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <qforce/force_basis.hpp>
#include <qforce/gaussian_state.hpp>
#include <qforce/params.hpp>
#include <qforce/schedule.hpp>
#include <qforce/state_space.hpp>

namespace qforce::app {

struct ScheduleSpec {
    std::vector<double> k{5.0};     ///< one value per interval
    std::vector<double> breakpoints; ///< empty: equal intervals on [0, tau]
    bool terminal_projective = false;
};

struct SignalSpec {
    std::string basis = "constant"; ///< zero | constant | kick | step | sinusoid | table
    double theta = 0.0;
    double center = 0.5;
    double width = 1e-3;
    double onset = 0.5;
    double frequency = 6.283185307179586;
    double phase = 0.0;
    std::vector<double> s;
    std::vector<double> values;

    ForceBasis build() const;
};

struct InitialSpec {
    filter::InitialPolicy policy = filter::InitialPolicy::SteadyState;
    double epsilon = 1e-6;
    double prior_variance = 0.0; ///< <= 0: flat
};

struct SimulationSpec {
    double dt = 1e-4;
    std::size_t n_traj = 1;
    std::uint64_t seed = 1;
    std::size_t records = 1; ///< record files written by simulate
    std::size_t store_points = 100;
};

struct GridSpec {
    std::size_t n = 201;
    std::optional<double> theta_min;
    std::optional<double> theta_max;
    std::string prior = "gaussian"; ///< gaussian | flat
    double prior_mean = 0.0;
    double prior_variance = 4.0;
    double prior_sigmas = 6.0;
    bool linear = false;
};

struct OptimizerSpec {
    std::size_t n_intervals = 50;
    filter::InitialPolicy initial = filter::InitialPolicy::OptimalInit;
    std::size_t max_iters = 2000;
    double rel_tol = 1e-6;
    std::size_t patience = 5;
    double fd_step = 1e-4;
    double grad_tol = 0.0;
    double log_k_min = -6.0;
    double log_k_max = 12.0;
};

struct DetectionSpec {
    double z = 0.0;      ///< > 0: fixed threshold; otherwise set from alpha
    double alpha = 0.05; ///< family-wise false-alarm rate
    double min_window = 0.0;
    double max_window = 0.0;
    double growth = 2.0;
    double search_from = 0.0;
    bool two_sided = false;
    std::size_t runs = 1;
};

struct SqlTableSpec {
    std::vector<double> omega_tau{5.0, 100.0};
    double spectrum_abs2 = 1.0;
    bool scheduled = true;
};

/**
 * @brief Validated scenario.
 *
 * k, theta and dt are in the units of `params`; with dimensionless set the
 * params are replaced by the rescaled model of the same omega tau.
 */
struct Config {
    PhysicalParams params;
    bool dimensionless = false;
    ScheduleSpec schedule;
    SignalSpec signal;
    InitialSpec initial;
    SimulationSpec simulation;
    GridSpec grid_bayes;
    OptimizerSpec optimizer;
    DetectionSpec detection;
    SqlTableSpec sql_table;
    std::string record;          ///< input record CSV for filter / grid-bayes / detect
    std::string output = "out";
    std::filesystem::path base_dir; ///< relative paths resolve against this

    /// Parameters the computation runs with.
    PhysicalParams model_params() const;
    SensitivitySchedule build_schedule() const;
    std::filesystem::path record_path() const;

    /// Checks every module precondition; throws Error(InvalidArgument, ...).
    void validate() const;
    /// Canonical JSON of the effective scenario (output location excluded).
    nlohmann::ordered_json to_json() const;
};

/// Parses a config document; unknown fields are rejected.
Config parse_config(const nlohmann::json &doc, const std::filesystem::path &base_dir = {});
Config load_config(const std::filesystem::path &path);

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a64_hex(std::string_view bytes);
std::string config_hash(const Config &config);

/// Pure state matching the (x, p) block of the initial covariance, centered at 0.
dynamics::GaussianState initial_state(const Config &config);
filter::CovarianceMatrix initial_P(const Config &config);

} // namespace qforce::app
