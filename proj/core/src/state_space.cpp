#include <qforce/error.hpp>
#include <qforce/gaussian_state.hpp>
#include <qforce/state_space.hpp>

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

namespace qforce::filter {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;

constexpr double kGrowthLimit = 1e3;
constexpr int kMaxHalvings = 40;

void require_k(double k) {
    if (!std::isfinite(k) || k < 0.0)
        fail(ErrorKind::InvalidSensitivity, "sensitivity must be finite and >= 0");
}

Mat6 hamiltonian(const AugmentedModel &model, double k, double f_t) {
    const Mat3 A = model.drift(f_t);
    const Vec3 B = model.process_noise();
    const Eigen::RowVector3d C = model.observation();
    Mat6 H;
    H.topLeftCorner<3, 3>() = -A.transpose();
    H.topRightCorner<3, 3>() = 2.0 * k * C.transpose() * C;
    H.bottomLeftCorner<3, 3>() = 2.0 * k * B * B.transpose();
    H.bottomRightCorner<3, 3>() = A;
    return H;
}

Mat3 apply_propagator(const Mat6 &E, const Mat3 &P) {
    const Mat3 X = E.topLeftCorner<3, 3>() + E.topRightCorner<3, 3>() * P;
    const Mat3 Y = E.bottomLeftCorner<3, 3>() + E.bottomRightCorner<3, 3>() * P;
    // P' = Y X^-1  <=>  X^T P'^T = Y^T
    Mat3 Pn = X.transpose().fullPivLu().solve(Y.transpose()).transpose();
    return 0.5 * (Pn + Pn.transpose());
}

// Caches exp(H h) for repeated steps with identical coefficients.
class HamiltonianStepper {
  public:
    Mat3 step(const Mat3 &P, const AugmentedModel &model, double k, double f_t,
              double dt) {
        if (dt == 0.0)
            return P;
        if (!valid_ || k != k_ || f_t != f_ || dt != dt_) {
            build(hamiltonian(model, k, f_t), dt);
            k_ = k;
            f_ = f_t;
            dt_ = dt;
            valid_ = true;
        }
        Mat3 out = P;
        for (int i = 0; i < repeats_; ++i)
            out = apply_propagator(E_, out);
        return out;
    }

  private:
    void build(const Mat6 &H, double dt) {
        repeats_ = 1;
        double h = dt;
        for (int halving = 0;; ++halving) {
            E_ = (H * h).exp();
            if (E_.allFinite() && E_.cwiseAbs().maxCoeff() <= kGrowthLimit)
                return;
            if (halving == kMaxHalvings)
                fail(ErrorKind::NumericalInstability,
                     "Riccati propagator overflows even after step halving");
            h *= 0.5;
            repeats_ *= 2;
        }
    }

    bool valid_ = false;
    double k_ = 0.0, f_ = 0.0, dt_ = 0.0;
    int repeats_ = 1;
    Mat6 E_;
};

double default_dt(const PhysicalParams &p) { return p.tau / 20000.0; }

std::size_t substeps(double length, double dt) {
    const double n = length / dt;
    const double r = std::round(n);
    if (std::abs(n - r) <= 1e-9 * std::max(1.0, n) && r >= 1.0)
        return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::ceil(n));
}

} // namespace

AugmentedModel::AugmentedModel(const PhysicalParams &params, ForceBasis basis)
    : params_(params), basis_(std::move(basis)) {
    params_.validate();
}

Mat3 AugmentedModel::drift(double f_t) const {
    Mat3 A = Mat3::Zero();
    A(0, 1) = 1.0 / params_.mass;
    A(1, 0) = -params_.mass * params_.omega * params_.omega;
    A(1, 2) = f_t;
    return A;
}

Vec3 AugmentedModel::process_noise() const { return Vec3(0.0, 0.5 * params_.hbar, 0.0); }

Eigen::RowVector3d AugmentedModel::observation() const {
    return Eigen::RowVector3d(1.0, 0.0, 0.0);
}

AugmentedModel build_model(const PhysicalParams &params, const ForceBasis &basis) {
    return AugmentedModel(params, basis);
}

Mat3 Scaling::to_dimensionless(const Mat3 &P) const {
    const Mat3 Ti = T.inverse();
    return Ti * P * Ti;
}

Mat3 Scaling::to_physical(const Mat3 &P) const { return T * P * T; }

PhysicalParams Scaling::dimensionless_params() const {
    return PhysicalParams::dimensionless(physical.omega_tau());
}

SensitivitySchedule Scaling::schedule_to_dimensionless(const SensitivitySchedule &s) const {
    SensitivitySchedule out = s;
    for (double &b : out.breakpoints)
        b /= physical.tau;
    out.breakpoints.back() = 1.0;
    for (double &v : out.k)
        v = k_to_dimensionless(v);
    return out;
}

SensitivitySchedule Scaling::schedule_to_physical(const SensitivitySchedule &s) const {
    SensitivitySchedule out = s;
    for (double &b : out.breakpoints)
        b *= physical.tau;
    out.breakpoints.back() = physical.tau;
    for (double &v : out.k)
        v = k_to_physical(v);
    return out;
}

Scaling nondimensionalize(const PhysicalParams &params) {
    params.validate();
    const double m = params.mass, hb = params.hbar, tau = params.tau;
    Scaling s;
    s.physical = params;
    s.T = Mat3::Zero();
    s.T(0, 0) = std::sqrt(hb * tau / (2.0 * m));
    s.T(1, 1) = std::sqrt(hb * m / (2.0 * tau));
    s.T(2, 2) = std::sqrt(hb * m / (2.0 * tau * tau * tau));
    s.k_unit = 2.0 * m / (hb * tau * tau);
    return s;
}

void check_covariance(const Mat3 &P) {
    if (!P.allFinite())
        fail(ErrorKind::NumericalInstability, "covariance has non-finite entries");
    const double scale = P.cwiseAbs().maxCoeff();
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(scale, 1e-300))
        fail(ErrorKind::NumericalInstability, "covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(P, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo < -1e-9 * std::max(hi, 0.0))
        fail(ErrorKind::NumericalInstability,
             "covariance lost positive semi-definiteness (min eigenvalue " +
                 std::to_string(lo) + ")");
}

CovarianceMatrix riccati_step(const CovarianceMatrix &P, const AugmentedModel &model,
                              double k, double f_t, double dt) {
    require_k(k);
    if (!std::isfinite(dt) || dt < 0.0)
        fail(ErrorKind::InvalidArgument, "time step must be finite and >= 0");
    HamiltonianStepper stepper;
    Mat3 out = stepper.step(P, model, k, f_t, dt);
    check_covariance(out);
    return out;
}

CovarianceMatrix projective_reduction(const CovarianceMatrix &P) {
    if (!(P(0, 0) > 0.0))
        fail(ErrorKind::Degenerate, "projective reduction needs P11 > 0");
    Mat3 out = P - P.col(0) * P.row(0) / P(0, 0);
    out.row(0).setZero();
    out.col(0).setZero();
    return 0.5 * (out + out.transpose());
}

Vec3 projective_mean_update(const Vec3 &mean, const CovarianceMatrix &P,
                            double x_measured) {
    if (!(P(0, 0) > 0.0))
        fail(ErrorKind::Degenerate, "projective update needs P11 > 0");
    return mean + P.col(0) * (x_measured - mean(0)) / P(0, 0);
}

MeanPropagator::MeanPropagator(const PhysicalParams &params, double dt) : dt_(dt) {
    // exp of [[A0, e2], [0, 0]] dt gives exp(A0 dt) and the integral of
    // exp(A0 s) e2 in one go.
    Mat3 M = Mat3::Zero();
    M(0, 1) = 1.0 / params.mass;
    M(1, 0) = -params.mass * params.omega * params.omega;
    M(1, 2) = 1.0;
    const Mat3 E = (M * dt).exp();
    phi_ = E.topLeftCorner<2, 2>();
    gamma_ = E.topRightCorner<2, 1>();
}

Vec3 MeanPropagator::apply(const Vec3 &mean, double f_t) const {
    Vec3 out;
    out.head<2>() = phi_ * mean.head<2>() + gamma_ * (f_t * mean(2));
    out(2) = mean(2);
    return out;
}

Vec3 kalman_mean_step(const Vec3 &mean, const CovarianceMatrix &P_prior, double k,
                      double f_t, double dxi, const MeanPropagator &drift) {
    if (!std::isfinite(dxi))
        fail(ErrorKind::InvalidMeasurement, "record increment must be finite");
    const double dt = drift.dt();
    const double denom = 1.0 + 2.0 * k * dt * P_prior(0, 0);
    const Vec3 post = mean + (2.0 * k / denom) * P_prior.col(0) * (dxi - mean(0) * dt);
    return drift.apply(post, f_t);
}

KalmanState kalman_step(const KalmanState &state, const AugmentedModel &model,
                        double k, double f_t, double dxi, double dt) {
    require_k(k);
    MeanPropagator drift(model.params(), dt);
    return KalmanState{kalman_mean_step(state.mean, state.P, k, f_t, dxi, drift),
                       riccati_step(state.P, model, k, f_t, dt)};
}

namespace {

struct Grid {
    double dt;
    std::size_t steps;
};

ScheduleTrajectory run_on_grid(const Mat3 &P0, const Vec3 &mean0,
                               const SensitivitySchedule &schedule,
                               const AugmentedModel &model,
                               const MeasurementRecord *record, double dt,
                               std::size_t stride) {
    ScheduleTrajectory out;
    HamiltonianStepper stepper;
    Mat3 P = P0;
    Vec3 mean = mean0;
    double t = 0.0;
    std::size_t step = 0;
    auto store = [&](bool force) {
        if (force || (stride > 0 && step % stride == 0)) {
            out.t.push_back(t);
            out.mean.push_back(mean);
            out.P.push_back(P);
        }
    };
    store(true);

    if (record) {
        MeanPropagator drift(model.params(), dt);
        const std::size_t n = record->size();
        out.predicted_x.reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double tm = (static_cast<double>(j) + 0.5) * dt;
            const double k = schedule.k_at(tm);
            const double f = model.force_shape(tm);
            out.predicted_x.push_back(mean(0));
            mean = kalman_mean_step(mean, P, k, f, record->dxi[j], drift);
            P = stepper.step(P, model, k, f, dt);
            ++step;
            t = static_cast<double>(step) * dt;
            store(j + 1 == n);
        }
    } else {
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            const double a = schedule.breakpoints[i], b = schedule.breakpoints[i + 1];
            const std::size_t n = substeps(b - a, dt);
            const double h = (b - a) / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
                const double tm = a + (static_cast<double>(j) + 0.5) * h;
                P = stepper.step(P, model, schedule.k[i], model.force_shape(tm), h);
                ++step;
                t = (j + 1 == n) ? b : a + static_cast<double>(j + 1) * h;
                store(i + 1 == schedule.size() && j + 1 == n);
            }
        }
    }
    check_covariance(P);
    out.steps = step;
    out.P_before_reduction = P;
    out.terminal = KalmanState{mean, P};
    return out;
}

void finish_terminal(ScheduleTrajectory &traj, const SensitivitySchedule &schedule,
                     const MeasurementRecord *record) {
    if (!schedule.terminal_projective)
        return;
    const Mat3 P = traj.P_before_reduction;
    if (record && record->terminal_position)
        traj.terminal.mean = projective_mean_update(traj.terminal.mean, P,
                                                    *record->terminal_position);
    traj.terminal.P = projective_reduction(P);
}

} // namespace

ScheduleTrajectory run_schedule(const CovarianceMatrix &P0, const Vec3 &mean0,
                                const SensitivitySchedule &schedule,
                                const AugmentedModel &model,
                                const MeasurementRecord *record,
                                const RunOptions &options) {
    const double tau = model.params().tau;
    schedule.validate(tau);
    check_covariance(P0);
    if (!mean0.allFinite())
        fail(ErrorKind::InvalidState, "initial mean must be finite");

    if (record) {
        record->validate_grid(tau, options.dt);
        check_schedule_grid(schedule, record->dt);
        auto traj = run_on_grid(P0, mean0, schedule, model, record, record->dt,
                                options.store_stride);
        finish_terminal(traj, schedule, record);
        return traj;
    }

    if (options.store_stride == 0 && model.basis().time_invariant()) {
        // One exact step per interval.
        ScheduleTrajectory out;
        HamiltonianStepper stepper;
        const double f = model.force_shape(0.0);
        Mat3 P = P0;
        out.t.push_back(0.0);
        out.mean.push_back(mean0);
        out.P.push_back(P0);
        for (std::size_t i = 0; i < schedule.size(); ++i)
            P = stepper.step(P, model, schedule.k[i], f,
                             schedule.breakpoints[i + 1] - schedule.breakpoints[i]);
        check_covariance(P);
        out.t.push_back(tau);
        out.mean.push_back(mean0);
        out.P.push_back(P);
        out.steps = schedule.size();
        out.P_before_reduction = P;
        out.terminal = KalmanState{mean0, P};
        finish_terminal(out, schedule, nullptr);
        return out;
    }

    double dt = options.dt > 0.0 ? options.dt : default_dt(model.params());
    auto traj = run_on_grid(P0, mean0, schedule, model, nullptr, dt, options.store_stride);
    if (options.refine) {
        for (std::size_t r = 0; r < options.max_refinements; ++r) {
            dt *= 0.5;
            auto finer = run_on_grid(P0, mean0, schedule, model, nullptr, dt,
                                     options.store_stride == 0 ? 0 : options.store_stride * 2);
            const double a = traj.P_before_reduction(2, 2);
            const double b = finer.P_before_reduction(2, 2);
            traj = std::move(finer);
            if (std::abs(b - a) <= options.refine_tol * std::abs(b))
                break;
        }
    }
    finish_terminal(traj, schedule, nullptr);
    return traj;
}

CovarianceMatrix terminal_covariance(const CovarianceMatrix &P0,
                                     const SensitivitySchedule &schedule,
                                     const AugmentedModel &model,
                                     const RunOptions &options) {
    RunOptions opt = options;
    opt.store_stride = 0;
    return run_schedule(P0, Vec3::Zero(), schedule, model, nullptr, opt).terminal.P;
}

std::vector<Mat3> covariance_path(const CovarianceMatrix &P0,
                                  const SensitivitySchedule &schedule,
                                  const AugmentedModel &model, double dt) {
    const double tau = model.params().tau;
    schedule.validate(tau);
    check_covariance(P0);
    const std::size_t n = steps_for(tau, dt);
    check_schedule_grid(schedule, dt);
    std::vector<Mat3> path;
    path.reserve(n + 1);
    HamiltonianStepper stepper;
    Mat3 P = P0;
    path.push_back(P);
    for (std::size_t j = 0; j < n; ++j) {
        const double tm = (static_cast<double>(j) + 0.5) * dt;
        P = stepper.step(P, model, schedule.k_at(tm), model.force_shape(tm), dt);
        path.push_back(P);
    }
    check_covariance(P);
    return path;
}

double flat_prior_variance(const PhysicalParams &params) {
    return 1e6 * nondimensionalize(params).theta_variance_unit();
}

CovarianceMatrix initial_covariance(const PhysicalParams &params, InitialPolicy policy,
                                    double k_initial, double epsilon,
                                    double prior_variance) {
    params.validate();
    Mat3 P = Mat3::Zero();
    const double m = params.mass, hb = params.hbar, tau = params.tau;
    switch (policy) {
    case InitialPolicy::SteadyState: {
        const auto s = dynamics::steady_state_sigma(params, k_initial);
        const auto mo = dynamics::derived_moments(
            dynamics::GaussianState{{0.0, 0.0}, s}, params);
        P(0, 0) = mo.var_x;
        P(0, 1) = P(1, 0) = mo.cov;
        P(1, 1) = mo.var_p;
        break;
    }
    case InitialPolicy::OptimalInit:
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            fail(ErrorKind::InvalidArgument, "epsilon must be positive");
        P(0, 0) = hb * tau / (2.0 * m * epsilon);
        P(1, 1) = epsilon * hb * m / (2.0 * tau);
        break;
    }
    P(2, 2) = prior_variance > 0.0 ? prior_variance : flat_prior_variance(params);
    return P;
}

} // namespace qforce::filter
