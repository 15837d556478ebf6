// Grid posterior over theta with one conditioned Gaussian state per grid point
#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include <qforce/force_basis.hpp>
#include <qforce/gaussian_state.hpp>
#include <qforce/params.hpp>
#include <qforce/record.hpp>

namespace qforce::gridbayes {

/**
 * @brief Log-weights and theta-conditioned means on a uniform theta grid.
 *
 * All grid points share the width sigma (it does not depend on theta); each
 * carries its own (x_bar, p_bar). theta follows the augmented-model sign: the
 * force is +f(t) theta.
 */
struct ThetaGridPosterior {
    std::vector<double> theta;
    std::vector<double> log_w;
    std::vector<double> x_bar;
    std::vector<double> p_bar;
    std::complex<double> sigma{1.0, 0.0};
    bool normalized = true;

    std::size_t size() const { return theta.size(); }
    double spacing() const;
};

struct Prior {
    enum class Kind { Flat, Gaussian } kind = Kind::Flat;
    double mean = 0.0;
    double variance = 1.0;
};

ThetaGridPosterior init_grid(double theta_min, double theta_max, std::size_t n,
                             const Prior &prior, const dynamics::GaussianState &initial,
                             const PhysicalParams &params);

/// Weights normalized so that the trapezoid integral over theta is 1.
std::vector<double> normalized_weights(const ThetaGridPosterior &post);

/**
 * @brief One record increment.
 *
 * Weights: d log w = 2k (x_th - x_avg)(dxi - x_avg dt) - k (x_th - x_avg)^2 dt,
 * renormalized. Means: Kalman update with the shared width, then drift with
 * force f_t theta. sigma advances under the monitored width equation.
 */
ThetaGridPosterior grid_update(const ThetaGridPosterior &post, double dxi, double k,
                               double dt, double f_t, const PhysicalParams &params);

/// Same, with the unnormalized weight increment 2k x_th dxi - k x_th^2 dt.
ThetaGridPosterior grid_update_linear(const ThetaGridPosterior &post, double dxi,
                                      double k, double dt, double f_t,
                                      const PhysicalParams &params);

void grid_update_inplace(ThetaGridPosterior &post, double dxi, double k, double dt,
                         double f_t, const PhysicalParams &params, bool linear = false);

struct PosteriorMoments {
    double mean;
    double variance;
};

PosteriorMoments posterior_moments(const ThetaGridPosterior &post);

/// Runs grid_update over a whole record.
ThetaGridPosterior run_grid(ThetaGridPosterior post, const MeasurementRecord &record,
                            const ForceBasis &basis, bool linear = false);

/// Columns theta,weight.
void write_posterior_csv(std::ostream &out, const ThetaGridPosterior &post,
                         std::string_view comment = {});

} // namespace qforce::gridbayes
