// Augmented state-space model, Riccati and Kalman tests
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qforce/analytics.hpp"
#include "qforce/error.hpp"
#include "qforce/gaussian_state.hpp"
#include "qforce/state_space.hpp"

#include <unsupported/Eigen/MatrixFunctions>

using namespace qforce;
using namespace qforce::filter;

namespace {

const PhysicalParams kDim = PhysicalParams::dimensionless();

double rel_err(const Mat3 &a, const Mat3 &b) {
    return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

Mat3 random_psd(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat3 L;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            L(i, j) = n(rng);
    return L * L.transpose() + 0.1 * Mat3::Identity();
}

} // namespace

// =============================================================================
// Model and scaling
// =============================================================================

TEST(Model, FreeConstantForceMatrices) {
    PhysicalParams p;
    p.mass = 2.0;
    const AugmentedModel m = build_model(p, ForceBasis::constant());
    Mat3 A = Mat3::Zero();
    A(0, 1) = 0.5;
    A(1, 2) = 1.0;
    EXPECT_EQ(m.drift(m.force_shape(0.3)), A);
    EXPECT_EQ(m.process_noise(), Vec3(0.0, 0.5, 0.0));
    EXPECT_EQ(m.observation(), Eigen::RowVector3d(1.0, 0.0, 0.0));
}

TEST(Model, RescaledOscillatorMatrices) {
    const AugmentedModel m = build_model(PhysicalParams::dimensionless(3.0), ForceBasis::zero());
    const Mat3 A = m.drift(0.0);
    EXPECT_DOUBLE_EQ(A(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(A(1, 0), -9.0);
    EXPECT_DOUBLE_EQ(A(1, 2), 0.0);
    EXPECT_EQ(m.process_noise(), Vec3(0.0, 1.0, 0.0));
}

TEST(Scaling, UnitProducingChoice) {
    const Scaling s = nondimensionalize(kDim);
    EXPECT_TRUE(s.T.isApprox(Mat3::Identity(), 1e-15));
    EXPECT_DOUBLE_EQ(s.k_unit, 1.0);
}

TEST(Scaling, RoundTripAndSensitivityMap) {
    PhysicalParams p;
    p.mass = 3.1;
    p.hbar = 0.02;
    p.tau = 7.0;
    p.omega = 0.4;
    const Scaling s = nondimensionalize(p);
    std::mt19937_64 rng(1);
    const Mat3 P = random_psd(rng);
    EXPECT_LT(rel_err(s.to_physical(s.to_dimensionless(P)), P), 1e-12);
    EXPECT_NEAR(s.k_to_physical(2.5), 2.5 * 2.0 * p.mass / (p.hbar * p.tau * p.tau), 1e-9);
    EXPECT_NEAR(s.k_to_dimensionless(s.k_to_physical(2.5)), 2.5, 1e-14);
    EXPECT_NEAR(s.theta_variance_unit(), p.hbar * p.mass / (2.0 * std::pow(p.tau, 3)), 1e-18);
    EXPECT_NEAR(s.dimensionless_params().omega_tau(), p.omega_tau(), 1e-15);
}

TEST(Scaling, CovariancePropagationCommutesWithRescaling) {
    PhysicalParams p;
    p.mass = 2.3;
    p.hbar = 0.7;
    p.tau = 1.9;
    p.omega = 1.1;
    const Scaling s = nondimensionalize(p);
    const SensitivitySchedule phys =
        SensitivitySchedule::uniform({0.5 * s.k_unit, 2.0 * s.k_unit, 7.0 * s.k_unit}, p.tau, true);
    const Mat3 P0 = initial_covariance(p, InitialPolicy::SteadyState, phys.k[0], 1e-6, 5.0);

    const Mat3 P_phys =
        terminal_covariance(P0, phys, build_model(p, ForceBasis::constant()));
    const Mat3 P_dim = terminal_covariance(s.to_dimensionless(P0), s.schedule_to_dimensionless(phys),
                                           build_model(s.dimensionless_params(), ForceBasis::constant()));
    const Mat3 mapped = s.to_dimensionless(P_phys);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (std::abs(P_dim(i, j)) > 1e-12)
                EXPECT_NEAR(mapped(i, j) / P_dim(i, j), 1.0, 1e-8) << i << "," << j;
}

// =============================================================================
// Riccati propagation
// =============================================================================

TEST(Riccati, UnmeasuredIsLiouvilleTransport) {
    PhysicalParams p;
    p.mass = 1.7;
    const AugmentedModel m = build_model(p, ForceBasis::constant());
    std::mt19937_64 rng(2);
    const Mat3 P0 = random_psd(rng);
    const double t = 0.8;
    Mat3 phi = Mat3::Identity();
    phi(0, 1) = t / p.mass;
    phi(0, 2) = t * t / (2.0 * p.mass);
    phi(1, 2) = t;
    EXPECT_LT(rel_err(riccati_step(P0, m, 0.0, 1.0, t), phi * P0 * phi.transpose()), 1e-12);
}

TEST(Riccati, MatchesRungeKuttaOracle) {
    PhysicalParams p;
    p.omega = 1.3;
    p.hbar = 0.6;
    const AugmentedModel m = build_model(p, ForceBasis::constant());
    const Mat3 P0 = initial_covariance(p, InitialPolicy::SteadyState, 2.0, 1e-6, 10.0);
    const Mat3 P = riccati_step(P0, m, 3.0, 1.0, 1.0);
    const Mat3 ref = oracle::riccati_rk4(P0, p.mass, p.omega, p.hbar, 1.0, 3.0, 1.0, 40000);
    EXPECT_LT(rel_err(P, ref), 1e-9);
}

TEST(Riccati, StiffMomentumSqueezedStartStaysPositive) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::OptimalInit, 0.0, 1e-6);
    Mat3 P = P0;
    for (int i = 0; i < 100; ++i) {
        P = riccati_step(P, m, 1e4, 1.0, 0.01);
        ASSERT_NO_THROW(check_covariance(P));
    }
    EXPECT_GT(P(2, 2), 0.0);
}

TEST(Riccati, RandomStartsStaySymmetricPositive) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> lk(-3.0, 4.0);
    const AugmentedModel m = build_model(PhysicalParams::dimensionless(2.0), ForceBasis::constant());
    for (int trial = 0; trial < 200; ++trial) {
        Mat3 P = random_psd(rng);
        for (int i = 0; i < 10; ++i) {
            P = riccati_step(P, m, std::pow(10.0, lk(rng)), 1.0, 0.1);
            ASSERT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-12 * P.cwiseAbs().maxCoeff());
            Eigen::SelfAdjointEigenSolver<Mat3> es(P);
            ASSERT_GE(es.eigenvalues().minCoeff(), -1e-10 * P.trace());
        }
    }
}

TEST(Riccati, UnobservableParameterKeepsPrior) {
    const AugmentedModel m = build_model(kDim, ForceBasis::zero());
    Mat3 P = initial_covariance(kDim, InitialPolicy::SteadyState, 4.0, 1e-6, 3.0);
    for (int i = 0; i < 20; ++i) {
        P = riccati_step(P, m, 4.0, 0.0, 0.05);
        EXPECT_DOUBLE_EQ(P(2, 2), 3.0);
    }
}

TEST(Riccati, InformationIsMonotone) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> lk(-1.0, 3.0);
    std::vector<double> k(10);
    for (double &v : k)
        v = std::pow(10.0, lk(rng));
    const auto sched = SensitivitySchedule::uniform(k, 1.0, false);
    const auto path = covariance_path(initial_covariance(kDim, InitialPolicy::OptimalInit, 0.0),
                                      sched, m, 1e-3);
    for (std::size_t j = 1; j < path.size(); ++j)
        ASSERT_LE(path[j](2, 2), path[j - 1](2, 2) * (1.0 + 1e-12));
}

TEST(Riccati, PinnedThetaReproducesWidthSolution) {
    // With theta known the (x, p) block is the moment image of the exact width flow.
    PhysicalParams p;
    p.omega = 0.9;
    p.hbar = 1.4;
    const double k = 2.2;
    const AugmentedModel m = build_model(p, ForceBasis::constant());
    const dynamics::Complex s0{1.7, 0.4};
    const auto mo0 = dynamics::derived_moments({{}, s0}, p);
    Mat3 P = Mat3::Zero();
    P(0, 0) = mo0.var_x;
    P(0, 1) = P(1, 0) = mo0.cov;
    P(1, 1) = mo0.var_p;
    for (double t : {0.3, 1.0, 4.0, 30.0}) {
        const Mat3 Pt = riccati_step(P, m, k, 1.0, t);
        const auto mo = dynamics::derived_moments({{}, dynamics::sigma_solution(p, k, s0, t)}, p);
        EXPECT_NEAR(Pt(0, 0) / mo.var_x, 1.0, 1e-9) << t;
        EXPECT_NEAR(Pt(0, 1) / mo.cov, 1.0, 1e-9) << t;
        EXPECT_NEAR(Pt(1, 1) / mo.var_p, 1.0, 1e-9) << t;
        EXPECT_EQ(Pt(2, 2), 0.0);
    }
    const auto s_inf = dynamics::steady_state_sigma(p, k);
    const auto mo_inf = dynamics::derived_moments({{}, s_inf}, p);
    const Mat3 P_inf = riccati_step(P, m, k, 1.0, 60.0);
    EXPECT_NEAR(P_inf(0, 0) / mo_inf.var_x, 1.0, 1e-10);
    EXPECT_NEAR(P_inf(1, 1) / mo_inf.var_p, 1.0, 1e-10);
}

TEST(Riccati, SteadyStartMatchesClosedForm) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    for (double k : {5.0, 10.0, 20.0}) {
        const Mat3 P0 = initial_covariance(kDim, InitialPolicy::SteadyState, k);
        const Mat3 P = terminal_covariance(P0, SensitivitySchedule::constant(k, 1.0), m);
        EXPECT_NEAR(P(2, 2) / sql::sigma_free_constant_steady(k), 1.0, 1e-3) << k;
    }
}

TEST(Riccati, SqueezedStartMatchesClosedForm) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::OptimalInit, 0.0, 1e-6);
    for (double k : {1.0, 2.833, 8.0}) {
        const Mat3 P = terminal_covariance(P0, SensitivitySchedule::constant(k, 1.0), m);
        EXPECT_NEAR(P(2, 2) / sql::sigma_free_constant_optimal_init(k), 1.0, 1e-3) << k;
        const Mat3 R =
            terminal_covariance(P0, SensitivitySchedule::constant(k, 1.0, 1, true), m);
        EXPECT_NEAR(R(2, 2) / sql::sigma_free_constant_projective_end(k), 1.0, 1e-3) << k;
    }
}

TEST(Riccati, SplittingIntervalIsInvisible) {
    const AugmentedModel m = build_model(PhysicalParams::dimensionless(1.5), ForceBasis::constant());
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::OptimalInit, 0.0, 1e-3);
    SensitivitySchedule a = SensitivitySchedule::uniform({2.0, 9.0}, 1.0);
    SensitivitySchedule b = a;
    b.breakpoints = {0.0, 0.2, 0.5, 1.0};
    b.k = {2.0, 2.0, 9.0};
    EXPECT_LT(rel_err(terminal_covariance(P0, b, m), terminal_covariance(P0, a, m)), 1e-10);
}

TEST(Riccati, SingleIntervalIsOneStep) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::SteadyState, 3.0);
    EXPECT_LT(rel_err(terminal_covariance(P0, SensitivitySchedule::constant(3.0, 1.0), m),
                      riccati_step(P0, m, 3.0, 1.0, 1.0)),
              1e-13);
}

TEST(Riccati, TimeVaryingBasisRefinementSettles) {
    const AugmentedModel m = build_model(kDim, ForceBasis::sinusoid(2.0));
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::SteadyState, 5.0);
    const auto sched = SensitivitySchedule::constant(5.0, 1.0);
    RunOptions coarse;
    coarse.dt = 1e-2;
    RunOptions fine;
    fine.dt = 1e-2;
    fine.refine = true;
    fine.refine_tol = 1e-8;
    const double a = terminal_covariance(P0, sched, m, coarse)(2, 2);
    const double b = terminal_covariance(P0, sched, m, fine)(2, 2);
    RunOptions ref;
    ref.dt = 1e-5;
    const double c = terminal_covariance(P0, sched, m, ref)(2, 2);
    EXPECT_LT(std::abs(b - c), std::abs(a - c));
    EXPECT_NEAR(b / c, 1.0, 1e-6);
}

TEST(Riccati, InvalidInputs) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    EXPECT_THROW(riccati_step(Mat3::Identity(), m, -1.0, 1.0, 0.1), Error);
    EXPECT_THROW(riccati_step(Mat3::Identity(), m, 1.0, 1.0, -0.1), Error);
    Mat3 bad = Mat3::Identity();
    bad(0, 0) = -1.0;
    try {
        check_covariance(bad);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::NumericalInstability);
    }
    bad = Mat3::Identity();
    bad(0, 1) = 0.5;
    EXPECT_THROW(check_covariance(bad), Error);
}

// =============================================================================
// Projective readout
// =============================================================================

TEST(Projective, UncorrelatedParameterUnchanged) {
    Mat3 P = Mat3::Identity() * 2.0;
    P(0, 1) = P(1, 0) = 0.5;
    EXPECT_DOUBLE_EQ(projective_reduction(P)(2, 2), 2.0);
}

TEST(Projective, RankOneCollapses) {
    const Vec3 v(1.5, -0.3, 2.0);
    EXPECT_LT(projective_reduction(v * v.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Projective, IdempotentAndFormula) {
    std::mt19937_64 rng(6);
    const Mat3 P = random_psd(rng);
    const Mat3 R = projective_reduction(P);
    EXPECT_NEAR(R(2, 2), P(2, 2) - P(2, 0) * P(2, 0) / P(0, 0), 1e-14);
    EXPECT_EQ(R.row(0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(R.col(0).cwiseAbs().maxCoeff(), 0.0);
    Mat3 R2 = R;
    R2(0, 0) = 1.0; // a second readout of an already known x
    const Mat3 twice = projective_reduction(R2);
    EXPECT_LT((twice.bottomRightCorner<2, 2>() - R.bottomRightCorner<2, 2>()).cwiseAbs().maxCoeff(),
              1e-15);
}

TEST(Projective, DegenerateWithoutPositionVariance) {
    try {
        (void)projective_reduction(Mat3::Zero());
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
    }
}

// =============================================================================
// Kalman filter
// =============================================================================

TEST(Kalman, ZeroInnovationIsPureDrift) {
    PhysicalParams p;
    p.omega = 2.0;
    const AugmentedModel m = build_model(p, ForceBasis::constant());
    const KalmanState st{Vec3(0.3, -0.1, 0.7), initial_covariance(p, InitialPolicy::SteadyState, 1.0)};
    const double dt = 0.01;
    const KalmanState out = kalman_step(st, m, 1.0, 1.0, st.mean(0) * dt, dt);
    const Vec3 expected = (m.drift(1.0) * dt).exp() * st.mean;
    EXPECT_LT((out.mean - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Kalman, CovarianceIndependentOfRecord) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    KalmanState a{Vec3::Zero(), initial_covariance(kDim, InitialPolicy::SteadyState, 2.0)};
    KalmanState b = a;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.1);
    for (int i = 0; i < 100; ++i) {
        a = kalman_step(a, m, 2.0, 1.0, n(rng), 0.01);
        b = kalman_step(b, m, 2.0, 1.0, 0.0, 0.01);
        ASSERT_EQ(a.P, b.P);
    }
    KalmanState c{Vec3::Zero(), initial_covariance(kDim, InitialPolicy::SteadyState, 2.0)};
    Mat3 P = c.P;
    for (int i = 0; i < 100; ++i) {
        c = kalman_step(c, m, 2.0, 1.0, 0.05, 0.01);
        P = riccati_step(P, m, 2.0, 1.0, 0.01);
    }
    EXPECT_EQ(c.P, P);
}

TEST(Kalman, RecordRunMatchesCovarianceOnlyRun) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    MeasurementRecord rec;
    rec.dt = 1e-3;
    rec.dxi.assign(1000, 0.0);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, std::sqrt(rec.dt));
    for (double &v : rec.dxi)
        v = n(rng);
    const auto sched = SensitivitySchedule::constant(3.0, 1.0, 1, true);
    rec.schedule = sched;
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::SteadyState, 3.0);
    const auto with = run_schedule(P0, Vec3::Zero(), sched, m, &rec);
    const auto path = covariance_path(P0, sched, m, rec.dt);
    EXPECT_EQ(with.P_before_reduction, path.back());
    EXPECT_EQ(with.predicted_x.size(), rec.size());
    EXPECT_EQ(with.terminal.P, projective_reduction(path.back()));
}

TEST(Kalman, NoiselessRecordRecoversForce) {
    // Classical trajectory x(t) = theta t^2/2 read out without noise.
    const double theta = 1.7, dt = 1e-4;
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    MeasurementRecord rec;
    rec.dt = dt;
    for (int j = 0; j < 10000; ++j) {
        const double t0 = j * dt, t1 = t0 + dt;
        rec.dxi.push_back(theta * (t1 * t1 * t1 - t0 * t0 * t0) / 6.0);
    }
    const auto sched = SensitivitySchedule::constant(50.0, 1.0);
    const Mat3 P0 = initial_covariance(kDim, InitialPolicy::OptimalInit, 0.0, 1e-8);
    const auto out = run_schedule(P0, Vec3::Zero(), sched, m, &rec);
    EXPECT_NEAR(out.terminal.mean(2), theta, 1e-3 * theta);
}

TEST(Kalman, GridMismatchRejected) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    MeasurementRecord rec;
    rec.dt = 1e-3;
    rec.dxi.assign(999, 0.0);
    try {
        (void)run_schedule(Mat3::Identity(), Vec3::Zero(), SensitivitySchedule::constant(1.0, 1.0), m,
                           &rec);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Grid);
    }
}

TEST(Kalman, NonFiniteIncrementRejected) {
    const AugmentedModel m = build_model(kDim, ForceBasis::constant());
    const KalmanState st{Vec3::Zero(), Mat3::Identity()};
    EXPECT_THROW(kalman_step(st, m, 1.0, 1.0, NAN, 0.01), Error);
}

// =============================================================================
// Initial covariance policies
// =============================================================================

TEST(InitialCovariance, RescaledSteadyBlock) {
    const double k = 4.0;
    const Mat3 P = initial_covariance(kDim, InitialPolicy::SteadyState, k);
    EXPECT_NEAR(P(0, 0), 1.0 / std::sqrt(k), 1e-14);
    EXPECT_NEAR(P(0, 1), 1.0, 1e-14);
    EXPECT_NEAR(P(1, 1), 2.0 * std::sqrt(k), 1e-14);
    EXPECT_DOUBLE_EQ(P(2, 2), 1e6);
    EXPECT_DOUBLE_EQ(P(0, 2), 0.0);
}

TEST(InitialCovariance, SqueezedStartIsPure) {
    PhysicalParams p;
    p.hbar = 0.3;
    p.mass = 4.0;
    const Mat3 P = initial_covariance(p, InitialPolicy::OptimalInit, 0.0, 1e-4, 2.0);
    EXPECT_NEAR(P(0, 0) * P(1, 1), p.hbar * p.hbar / 4.0, 1e-15);
    EXPECT_DOUBLE_EQ(P(2, 2), 2.0);
    EXPECT_DOUBLE_EQ(flat_prior_variance(p), 1e6 * p.hbar * p.mass / 2.0);
}
