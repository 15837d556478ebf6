// Augmented (x, p, theta) linear-Gaussian model, Riccati and Kalman propagation
#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include <qforce/force_basis.hpp>
#include <qforce/params.hpp>
#include <qforce/record.hpp>
#include <qforce/schedule.hpp>

namespace qforce::filter {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CovarianceMatrix = Eigen::Matrix3d;

/**
 * @brief d(x,p,theta) = A(t)(x,p,theta) dt + B dW,  dxi = C(x,p,theta) dt + dW'/sqrt(2k).
 *
 * A = [[0, 1/m, 0], [-m w^2, 0, f(t)], [0, 0, 0]], B = (0, hbar/2, 0), C = (1, 0, 0).
 * The force on the particle is +f(t) theta.
 */
class AugmentedModel {
  public:
    AugmentedModel(const PhysicalParams &params, ForceBasis basis);

    const PhysicalParams &params() const { return params_; }
    const ForceBasis &basis() const { return basis_; }

    /// f evaluated at physical time t.
    double force_shape(double t) const { return basis_(t / params_.tau); }
    Mat3 drift(double f_t) const;
    Vec3 process_noise() const;
    Eigen::RowVector3d observation() const;

  private:
    PhysicalParams params_;
    ForceBasis basis_;
};

AugmentedModel build_model(const PhysicalParams &params, const ForceBasis &basis);

/**
 * @brief Map between physical units and the rescaled model.
 *
 * T = diag(sqrt(hbar tau/2m), sqrt(hbar m/2tau), sqrt(hbar m/2tau^3)),
 * P_rescaled = T^-1 P T^-1, t_rescaled = t/tau, k = k_rescaled * k_unit with
 * k_unit = 2m/(hbar tau^2).
 */
struct Scaling {
    PhysicalParams physical;
    Mat3 T;
    double k_unit;

    Mat3 to_dimensionless(const Mat3 &P) const;
    Mat3 to_physical(const Mat3 &P) const;
    double k_to_dimensionless(double k) const { return k / k_unit; }
    double k_to_physical(double k) const { return k * k_unit; }
    /// Physical variance of theta per unit rescaled variance, hbar m/(2 tau^3).
    double theta_variance_unit() const { return T(2, 2) * T(2, 2); }
    PhysicalParams dimensionless_params() const;
    SensitivitySchedule schedule_to_dimensionless(const SensitivitySchedule &s) const;
    SensitivitySchedule schedule_to_physical(const SensitivitySchedule &s) const;
};

Scaling nondimensionalize(const PhysicalParams &params);

/// Throws Error(NumericalInstability) unless P is finite, symmetric and PSD.
void check_covariance(const Mat3 &P);

/**
 * @brief Advance P over dt under constant k and force value f_t.
 *
 * Uses the Hamiltonian form of the Riccati equation: [X; Y] = exp(H dt)[I; P]
 * and P' = Y X^-1, exact for frozen coefficients and stable for stiff P.
 */
CovarianceMatrix riccati_step(const CovarianceMatrix &P, const AugmentedModel &model,
                              double k, double f_t, double dt);

/// Exact position readout at the end: P -> P - P C^T C P / P11.
CovarianceMatrix projective_reduction(const CovarianceMatrix &P);

/// Mean after an exact position readout x_measured.
Vec3 projective_mean_update(const Vec3 &mean, const CovarianceMatrix &P,
                            double x_measured);

/// exp(A dt) for a fixed dt, applied for any force value.
class MeanPropagator {
  public:
    MeanPropagator(const PhysicalParams &params, double dt);
    Vec3 apply(const Vec3 &mean, double f_t) const;
    double dt() const { return dt_; }

  private:
    double dt_;
    Eigen::Matrix2d phi_;
    Eigen::Vector2d gamma_;
};

struct KalmanState {
    Vec3 mean;
    CovarianceMatrix P;
};

/// Measurement update with the prior P followed by drift over dt.
Vec3 kalman_mean_step(const Vec3 &mean, const CovarianceMatrix &P_prior, double k,
                      double f_t, double dxi, const MeanPropagator &drift);

KalmanState kalman_step(const KalmanState &state, const AugmentedModel &model,
                        double k, double f_t, double dxi, double dt);

struct RunOptions {
    double dt = 0.0;               ///< 0: tau/20000 (record runs use the record's dt)
    std::size_t store_stride = 0;  ///< 0: keep only the end points
    bool refine = false;           ///< halve dt until P33(tau) settles
    double refine_tol = 1e-6;
    std::size_t max_refinements = 8;
};

struct ScheduleTrajectory {
    std::vector<double> t;
    std::vector<Vec3> mean;
    std::vector<Mat3> P;
    /// Predicted positions x_hat(t_j) for every step of a record run.
    std::vector<double> predicted_x;
    KalmanState terminal; ///< after the projective readout if scheduled
    Mat3 P_before_reduction;
    std::size_t steps = 0;
};

/**
 * @brief Propagate (mean, P) over [0, tau] under the schedule.
 *
 * Without a record only P is meaningful; constant bases then take one exact
 * step per schedule interval unless intermediate points are requested.
 */
ScheduleTrajectory run_schedule(const CovarianceMatrix &P0, const Vec3 &mean0,
                                const SensitivitySchedule &schedule,
                                const AugmentedModel &model,
                                const MeasurementRecord *record = nullptr,
                                const RunOptions &options = {});

/// P(tau), projectively reduced if the schedule says so.
CovarianceMatrix terminal_covariance(const CovarianceMatrix &P0,
                                     const SensitivitySchedule &schedule,
                                     const AugmentedModel &model,
                                     const RunOptions &options = {});

/// Prior covariances P(t_j), j = 0..n, on the grid t_j = j dt.
std::vector<Mat3> covariance_path(const CovarianceMatrix &P0,
                                  const SensitivitySchedule &schedule,
                                  const AugmentedModel &model, double dt);

enum class InitialPolicy { SteadyState, OptimalInit };

/// 1e6 in rescaled units.
double flat_prior_variance(const PhysicalParams &params);

/**
 * @brief Initial covariance for the augmented model.
 *
 * SteadyState: (x, p) block of the monitored steady state at k_initial.
 * OptimalInit: var_x = hbar tau/(2m eps), var_p = eps hbar m/(2 tau).
 * prior_variance <= 0 selects flat_prior_variance().
 */
CovarianceMatrix initial_covariance(const PhysicalParams &params, InitialPolicy policy,
                                    double k_initial, double epsilon = 1e-6,
                                    double prior_variance = 0.0);

} // namespace qforce::filter
