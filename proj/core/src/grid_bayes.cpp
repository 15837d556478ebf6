#include <qforce/error.hpp>
#include <qforce/grid_bayes.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace qforce::gridbayes {

namespace {

double trapezoid_weight(std::size_t i, std::size_t n) {
    return (n > 1 && (i == 0 || i + 1 == n)) ? 0.5 : 1.0;
}

void renormalize(ThetaGridPosterior &post) {
    const std::size_t n = post.size();
    if (n == 1) {
        post.log_w[0] = 0.0;
        return;
    }
    const double top = *std::max_element(post.log_w.begin(), post.log_w.end());
    if (!std::isfinite(top))
        fail(ErrorKind::Degenerate, "grid posterior weights are not finite");
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        z += trapezoid_weight(i, n) * std::exp(post.log_w[i] - top);
    z *= post.spacing();
    if (!(z > 0.0) || !std::isfinite(z))
        fail(ErrorKind::Degenerate, "grid posterior mass vanished");
    const double shift = top + std::log(z);
    for (double &l : post.log_w)
        l -= shift;
}

} // namespace

double ThetaGridPosterior::spacing() const {
    return theta.size() > 1 ? theta[1] - theta[0] : 1.0;
}

ThetaGridPosterior init_grid(double theta_min, double theta_max, std::size_t n,
                             const Prior &prior, const dynamics::GaussianState &initial,
                             const PhysicalParams &params) {
    params.validate();
    if (n < 3)
        fail(ErrorKind::Grid, "theta grid needs at least 3 points");
    if (!(theta_max > theta_min) || !std::isfinite(theta_min) || !std::isfinite(theta_max))
        fail(ErrorKind::Grid, "theta grid range is empty or non-finite");
    if (prior.kind == Prior::Kind::Gaussian && !(prior.variance > 0.0))
        fail(ErrorKind::InvalidArgument, "Gaussian prior needs positive variance");
    const auto mo = dynamics::derived_moments(initial, params);
    ThetaGridPosterior post;
    post.theta.resize(n);
    post.log_w.resize(n);
    post.x_bar.assign(n, mo.x_bar);
    post.p_bar.assign(n, mo.p_bar);
    post.sigma = initial.sigma_tilde;
    for (std::size_t i = 0; i < n; ++i) {
        post.theta[i] = theta_min + (theta_max - theta_min) * static_cast<double>(i) /
                                        static_cast<double>(n - 1);
        const double d = post.theta[i] - prior.mean;
        post.log_w[i] = prior.kind == Prior::Kind::Gaussian ? -0.5 * d * d / prior.variance : 0.0;
    }
    renormalize(post);
    return post;
}

std::vector<double> normalized_weights(const ThetaGridPosterior &post) {
    ThetaGridPosterior copy = post;
    renormalize(copy);
    std::vector<double> w(copy.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::exp(copy.log_w[i]);
    return w;
}

void grid_update_inplace(ThetaGridPosterior &post, double dxi, double k, double dt,
                         double f_t, const PhysicalParams &params, bool linear) {
    if (!std::isfinite(dxi))
        fail(ErrorKind::InvalidMeasurement, "record increment must be finite");
    if (!(k >= 0.0) || !std::isfinite(k))
        fail(ErrorKind::InvalidSensitivity, "sensitivity must be finite and >= 0");
    const std::size_t n = post.size();
    if (n == 0)
        fail(ErrorKind::Grid, "theta grid is empty");

    if (linear) {
        for (std::size_t i = 0; i < n; ++i) {
            const double x = post.x_bar[i];
            post.log_w[i] += 2.0 * k * x * dxi - k * x * x * dt;
        }
        post.normalized = false;
    } else {
        const auto w = normalized_weights(post);
        const double h = post.spacing();
        double x_avg = 0.0;
        if (n == 1) {
            x_avg = post.x_bar[0];
        } else {
            for (std::size_t i = 0; i < n; ++i)
                x_avg += trapezoid_weight(i, n) * w[i] * post.x_bar[i];
            x_avg *= h;
        }
        const double innov = dxi - x_avg * dt;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = post.x_bar[i] - x_avg;
            post.log_w[i] += 2.0 * k * d * innov - k * d * d * dt;
        }
        renormalize(post);
        post.normalized = true;
    }

    // Conditioned means: same gain for every theta, drift with force f theta.
    const auto mo = dynamics::derived_moments(dynamics::GaussianState{{0.0, 0.0}, post.sigma},
                                              params);
    const double denom = 1.0 + 2.0 * k * dt * mo.var_x;
    const double gx = 2.0 * k * mo.var_x / denom;
    const double gp = 2.0 * k * mo.cov / denom;
    const double m = params.mass, w2 = params.omega * params.omega;
    for (std::size_t i = 0; i < n; ++i) {
        const double innov = dxi - post.x_bar[i] * dt;
        const double x = post.x_bar[i] + gx * innov;
        const double p = post.p_bar[i] + gp * innov;
        post.x_bar[i] = x + p / m * dt;
        post.p_bar[i] = p - m * w2 * x * dt + f_t * post.theta[i] * dt;
    }
    post.sigma = k > 0.0 ? dynamics::sigma_solution(params, k, post.sigma, dt)
                         : dynamics::evolve_unmeasured(
                               dynamics::GaussianState{{0.0, 0.0}, post.sigma}, params, 0.0, dt)
                               .sigma_tilde;
}

ThetaGridPosterior grid_update(const ThetaGridPosterior &post, double dxi, double k,
                               double dt, double f_t, const PhysicalParams &params) {
    ThetaGridPosterior out = post;
    grid_update_inplace(out, dxi, k, dt, f_t, params, false);
    return out;
}

ThetaGridPosterior grid_update_linear(const ThetaGridPosterior &post, double dxi,
                                      double k, double dt, double f_t,
                                      const PhysicalParams &params) {
    ThetaGridPosterior out = post;
    grid_update_inplace(out, dxi, k, dt, f_t, params, true);
    return out;
}

PosteriorMoments posterior_moments(const ThetaGridPosterior &post) {
    const std::size_t n = post.size();
    if (n == 0)
        fail(ErrorKind::Grid, "theta grid is empty");
    if (n == 1)
        return {post.theta[0], 0.0};
    const auto w = normalized_weights(post);
    const double h = post.spacing();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        mean += trapezoid_weight(i, n) * w[i] * post.theta[i];
    mean *= h;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = post.theta[i] - mean;
        var += trapezoid_weight(i, n) * w[i] * d * d;
    }
    return {mean, var * h};
}

ThetaGridPosterior run_grid(ThetaGridPosterior post, const MeasurementRecord &record,
                            const ForceBasis &basis, bool linear) {
    const PhysicalParams &params = record.params;
    record.validate_grid(params.tau);
    check_schedule_grid(record.schedule, record.dt);
    for (std::size_t j = 0; j < record.size(); ++j) {
        const double tm = (static_cast<double>(j) + 0.5) * record.dt;
        grid_update_inplace(post, record.dxi[j], record.schedule.k_at(tm), record.dt,
                            basis(tm / params.tau), params, linear);
    }
    if (linear)
        renormalize(post);
    post.normalized = true;
    return post;
}

void write_posterior_csv(std::ostream &out, const ThetaGridPosterior &post,
                         std::string_view comment) {
    if (!comment.empty())
        out << "# " << comment << '\n';
    out << "theta,weight\n" << std::setprecision(17);
    const auto w = normalized_weights(post);
    for (std::size_t i = 0; i < post.size(); ++i)
        out << post.theta[i] << ',' << w[i] << '\n';
}

} // namespace qforce::gridbayes
