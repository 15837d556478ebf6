#include <benchmark/benchmark.h>

#include <qforce/analytics.hpp>
#include <qforce/detection.hpp>
#include <qforce/gaussian_state.hpp>
#include <qforce/grid_bayes.hpp>
#include <qforce/schedule_optimizer.hpp>
#include <qforce/state_space.hpp>
#include <qforce/trajectory.hpp>

using namespace qforce;

namespace {

const PhysicalParams kUnit{};

MeasurementRecord make_record(std::size_t steps) {
    const auto sched = SensitivitySchedule::constant(5.0, 1.0);
    const auto init = dynamics::from_moments(0.0, 0.0, dynamics::steady_state_sigma(kUnit, 5.0), kUnit);
    return sim::generate_record(kUnit, {ForceBasis::constant(), 1.0}, sched, init,
                                1.0 / static_cast<double>(steps), 3);
}

} // namespace

static void BM_SdeStep(benchmark::State &state) {
    auto s = dynamics::from_moments(0.0, 0.0, {1.0, 0.5}, kUnit);
    double dW = 1e-3;
    for (auto _ : state) {
        s = dynamics::sde_step(s, kUnit, 5.0, 0.1, 1e-4, dW).state;
        dW = -dW;
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_SdeStep);

static void BM_RiccatiStep(benchmark::State &state) {
    const auto model = filter::build_model(kUnit, ForceBasis::constant());
    filter::CovarianceMatrix P =
        filter::initial_covariance(kUnit, filter::InitialPolicy::SteadyState, 5.0);
    for (auto _ : state) {
        P = filter::riccati_step(P, model, 5.0, 1.0, 1e-4);
        benchmark::DoNotOptimize(P);
    }
}
BENCHMARK(BM_RiccatiStep);

static void BM_KalmanRecord(benchmark::State &state) {
    const auto rec = make_record(static_cast<std::size_t>(state.range(0)));
    const auto model = filter::build_model(kUnit, ForceBasis::constant());
    const auto P0 = filter::initial_covariance(kUnit, filter::InitialPolicy::SteadyState, 5.0);
    filter::RunOptions ro;
    ro.dt = rec.dt;
    for (auto _ : state)
        benchmark::DoNotOptimize(
            filter::run_schedule(P0, filter::Vec3::Zero(), rec.schedule, model, &rec, ro));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KalmanRecord)->Arg(1000)->Arg(20000);

static void BM_GridBayes(benchmark::State &state) {
    const auto rec = make_record(2000);
    const auto init = dynamics::from_moments(0.0, 0.0, dynamics::steady_state_sigma(kUnit, 5.0), kUnit);
    const gridbayes::Prior prior{gridbayes::Prior::Kind::Gaussian, 0.0, 4.0};
    const auto post0 = gridbayes::init_grid(-12.0, 12.0, static_cast<std::size_t>(state.range(0)),
                                            prior, init, kUnit);
    for (auto _ : state)
        benchmark::DoNotOptimize(gridbayes::run_grid(post0, rec, ForceBasis::constant()));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 2000);
}
BENCHMARK(BM_GridBayes)->Arg(201)->Arg(1001);

static void BM_VarianceIntegralKick(benchmark::State &state) {
    const auto f = ForceBasis::kick(0.5, 1e-3);
    for (auto _ : state)
        benchmark::DoNotOptimize(sql::variance_integral(5.0, f, 30.0));
}
BENCHMARK(BM_VarianceIntegralKick);

static void BM_ScheduleCost(benchmark::State &state) {
    schedopt::ScheduleOptProblem p;
    const std::vector<double> log_k(p.n_intervals, std::log(5.0));
    for (auto _ : state)
        benchmark::DoNotOptimize(schedopt::cost_log(log_k, p));
}
BENCHMARK(BM_ScheduleCost);

static void BM_OnlineDetect(benchmark::State &state) {
    const auto rec = make_record(static_cast<std::size_t>(state.range(0)));
    detect::ThresholdPolicy policy;
    policy.z = 4.0;
    for (auto _ : state)
        benchmark::DoNotOptimize(detect::online_detect(rec, policy));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OnlineDetect)->Arg(1000)->Arg(20000);

BENCHMARK_MAIN();
