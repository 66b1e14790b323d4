#include <benchmark/benchmark.h>

#include "etmpc/controller.hpp"
#include "etmpc/ocp.hpp"
#include "test_util.hpp"

using namespace etmpc;
using namespace etmpc::testutil;

namespace {

struct Fixture {
    ProblemData pd;
    TerminalParams params;
    NominalTrajectory traj;
    std::vector<StepLinearization> lins;
    TerminalHorizon horizon;
    Vec x0;

    explicit Fixture(int nx, int nu, int ntheta)
        : pd(make_quadratic_pd(60, nx, nu, ntheta)), params(design_terminal(pd))
    {
        x0 = Vec::Constant(nx, 0.2);
        traj = rollout(pd, x0, std::vector<Vec>(pd.N, Vec::Zero(nu)), Vec::Zero(ntheta),
                       params.K);
        lins = linearize_trajectory(pd, traj, pd.Theta0_v, params.vm, params.sigma);
        horizon = find_terminal_horizon(params, params.vm.norm(traj.x0.back()), params.d_theta);
    }
};

void BM_Linearize(benchmark::State& state)
{
    Fixture f(2, 1, 2);
    for (auto _ : state) {
        auto lins = linearize_trajectory(f.pd, f.traj, f.pd.Theta0_v, f.params.vm,
                                         f.params.sigma);
        benchmark::DoNotOptimize(lins.back().lambda);
    }
}

void BM_AssembleOcp(benchmark::State& state)
{
    Fixture f(2, 1, 2);
    for (auto _ : state) {
        auto cp = assemble_ocp(f.pd, f.traj, f.lins, f.params, f.horizon, f.x0, 1);
        benchmark::DoNotOptimize(cp.num_soc_blocks());
    }
}

void BM_SolveOcp(benchmark::State& state)
{
    Fixture f(2, 1, 2);
    auto cp = assemble_ocp(f.pd, f.traj, f.lins, f.params, f.horizon, f.x0, 1);
    for (auto _ : state) {
        auto st = solve_socp(cp);
        benchmark::DoNotOptimize(st.objective);
    }
}

void BM_ControllerStep(benchmark::State& state)
{
    Fixture f(2, 1, 2);
    for (auto _ : state) {
        Controller ctrl(f.pd, f.params);
        ctrl.initialize(f.x0);
        auto rep = ctrl.step(f.x0);
        benchmark::DoNotOptimize(rep.J_final);
    }
}

} // namespace

BENCHMARK(BM_Linearize)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AssembleOcp)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SolveOcp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ControllerStep)->Unit(benchmark::kMillisecond);
