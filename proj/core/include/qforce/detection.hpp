// Detectability thresholds and an online detector for forces of unknown arrival
#pragma once

#include <cstddef>
#include <vector>

#include <qforce/params.hpp>
#include <qforce/record.hpp>

namespace qforce::detect {

/// kappa / (1 - exp(-kappa)(cos kappa + sin kappa)), kappa = dt sqrt(hbar k/2m).
double kick_threshold(double kappa);
/// kappa^2 / (exp(-kappa) cos kappa + kappa - 1).
double constant_threshold(double kappa);

struct ThresholdMinimum {
    double kappa;
    double factor;
};

/// Kick bound: theta0 >= factor/tau_kick * sqrt(hbar m / dt).
ThresholdMinimum kick_min();
/// Constant force bound: theta0 >= factor * sqrt(hbar m / dt^3).
ThresholdMinimum constant_min();

/// Sensitivity that places the window dt at a given kappa: k = 2 m kappa^2 / (hbar dt^2).
double optimal_k_for_window(const PhysicalParams &params, double kappa, double window);

/// Window after which a kick of area theta0 tau_kick exceeds the noise at the best k.
double kick_detection_horizon(const PhysicalParams &params, double theta0, double tau_kick);
/// Same for a constant force switched on at t1.
double constant_detection_horizon(const PhysicalParams &params, double theta0);

enum class Shape { Kick, ConstantStep };

struct DetectionProblem {
    Shape shape = Shape::ConstantStep;
    double theta0 = 1.0;
    double t1 = 0.0;
    double tau_kick = 0.0; ///< kick duration (kick area theta0 * tau_kick)
    PhysicalParams params;
    double k = 1.0;

    void validate() const;
};

/// Response rate a = sqrt(hbar k / 2m) of the monitored free particle.
double response_rate(const PhysicalParams &params, double k);

/**
 * @brief Expected drift of the integrated innovation: int_t1^t dt'' int_t1^t'' g theta0 f dt'.
 *
 * g(s) = exp(-a s) sin(a s)/(m a). Closed form for both shapes.
 */
double bias_integral(const DetectionProblem &problem, double t);
/// Nested quadrature of the same integral (kick as a pulse of width tau_kick).
double bias_integral_quadrature(const DetectionProblem &problem, double t, std::size_t n = 20000);
/// Noise level sqrt(window / 2k) of the integrated innovation.
double noise_level(double k, double window);

struct ThresholdPolicy {
    double z = 1.0;           ///< threshold in units of the window noise level
    double min_window = 0.0;  ///< shortest window (time); 0: 10 record steps
    double max_window = 0.0;  ///< longest window; 0: the whole record
    double growth = 2.0;      ///< ratio between successive window lengths
    double search_from = 0.0; ///< earliest candidate arrival time
    bool two_sided = false;
};

/// z for a family-wise false-alarm rate alpha over n one-sided tests (Bonferroni).
double familywise_z(double alpha, std::size_t n_tests, bool two_sided = false);

struct DetectionResult {
    bool detected = false;
    double t_detect = 0.0;
    double window_start = 0.0;
    double statistic = 0.0;
    std::size_t n_tests = 0;
    /// Largest window statistic ending at each record time, and the threshold.
    std::vector<double> t;
    std::vector<double> z_max;
    double threshold = 0.0;
};

/// Normalized innovations z_j of the theta = 0 filter started in its steady state.
std::vector<double> theta_zero_innovations(const MeasurementRecord &record);

/// Number of (start, length) windows the detector examines for a record.
std::size_t count_windows(const MeasurementRecord &record, const ThresholdPolicy &policy);

/**
 * @brief First time any scanned window's integrated innovation exceeds z noise levels.
 *
 * Windows have lengths min_window * growth^j and end on every grid point, so
 * the scan is O(n log n) with cumulative sums.
 */
DetectionResult online_detect(const MeasurementRecord &record, const ThresholdPolicy &policy);

/// Statistic of the single window [start, start + length) of a record.
double window_statistic(const MeasurementRecord &record, double start, double length);

} // namespace qforce::detect
