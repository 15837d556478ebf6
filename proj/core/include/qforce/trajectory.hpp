// Simulated measurement records and Monte Carlo checks of the filter
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <qforce/force_basis.hpp>
#include <qforce/gaussian_state.hpp>
#include <qforce/record.hpp>
#include <qforce/state_space.hpp>

namespace qforce::sim {

/// True force theta * f(t/tau) on the particle (augmented-model sign).
struct Signal {
    ForceBasis basis;
    double theta = 0.0;

    double force(double t, double tau) const { return theta * basis(t / tau); }
};

/**
 * @brief Draw one record from the conditioned dynamics.
 *
 * The state follows sde_step with the force evaluated at step midpoints; the
 * Wiener increments come from SubstreamRng(seed, trajectory). If the schedule
 * ends with a projective readout, its outcome is stored in the record.
 */
MeasurementRecord generate_record(const PhysicalParams &params, const Signal &truth,
                                  const SensitivitySchedule &schedule,
                                  const dynamics::GaussianState &initial, double dt,
                                  std::uint64_t seed, std::uint64_t trajectory = 0);

constexpr std::size_t kMaxLag = 10;

/// Moments of normalized innovations z_j = (dxi_j - x_hat_j dt) / sqrt(dt/2k_j).
struct InnovationStats {
    std::size_t samples = 0;
    double mean = 0.0;
    double mean_se = 0.0;
    double variance_ratio = 0.0; ///< var(z), 1 for a consistent filter
    double variance_se = 0.0;
    std::array<double, kMaxLag> autocorr{};
    std::array<double, kMaxLag> autocorr_se{};

    /// Mean and autocorrelations within n_se standard errors, variance within var_band.
    bool white(double n_se = 3.0, double var_band = 0.1) const;
};

/// Raw sums from which InnovationStats are formed; merge-able in fixed order.
struct InnovationSums {
    double n = 0.0, s1 = 0.0, s2 = 0.0;
    std::array<double, kMaxLag> lag{};
    std::array<double, kMaxLag> lag_n{};

    void add_sequence(const std::vector<double> &z);
    InnovationStats stats() const;
};

std::vector<double> normalized_innovations(const MeasurementRecord &record,
                                           const std::vector<double> &predicted_x);

InnovationStats innovation_whiteness(const MeasurementRecord &record,
                                     const filter::ScheduleTrajectory &filtered);

struct MonteCarloConfig {
    PhysicalParams params;
    Signal truth;
    SensitivitySchedule schedule;
    filter::InitialPolicy initial = filter::InitialPolicy::SteadyState;
    double epsilon = 1e-6;
    double prior_variance = 0.0; ///< <= 0: flat
    std::size_t n_traj = 400;
    double dt = 0.0;             ///< 0: tau/20000
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::size_t store_points = 100;
    bool whiteness = true;       ///< also run the theta-known filter
};

struct EnsembleStats {
    std::size_t n_traj = 0;
    std::vector<double> times;
    std::vector<double> error_mean;
    std::vector<double> error_var;
    std::vector<double> riccati_var;
    std::vector<double> final_errors;
    double final_error_mean = 0.0;
    double final_error_var = 0.0;
    double final_riccati_var = 0.0;
    double variance_ratio = 0.0;
    double mean_se = 0.0;
    InnovationStats innovations;
};

/**
 * @brief Ensemble of simulated records filtered by the augmented Kalman filter.
 *
 * The covariance path is computed once and shared; each trajectory uses its
 * own random substream, and all reductions run in trajectory order, so the
 * result does not depend on the thread count.
 */
EnsembleStats monte_carlo_estimator_variance(const MonteCarloConfig &config);

} // namespace qforce::sim
