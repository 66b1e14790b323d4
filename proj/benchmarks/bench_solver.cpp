#include <benchmark/benchmark.h>

#include <random>

#include "etmpc/conic.hpp"
#include "etmpc/terminal.hpp"
#include "test_util.hpp"

using namespace etmpc;
using namespace etmpc::testutil;

namespace {

ConicProgram ball_projection(int n, unsigned seed)
{
    std::mt19937 rng(seed);
    Vec p = randn(rng, n);
    p *= 2.0 / p.norm();
    ConicProgram cp;
    int t = cp.add_vars("t", 1);
    int x = cp.add_vars("x", n);
    cp.add_objective(t, 1.0);
    std::vector<LinExpr> dist{LinExpr().add(t, 1.0)};
    for (int i = 0; i < n; ++i) {
        LinExpr e(-p(i));
        e.add(x + i, 1.0);
        dist.push_back(e);
    }
    cp.add_soc(dist);
    std::vector<LinExpr> ball{LinExpr(1.0)};
    for (int i = 0; i < n; ++i) {
        LinExpr e;
        e.add(x + i, 1.0);
        ball.push_back(e);
    }
    cp.add_soc(ball);
    return cp;
}

void BM_SocpBallProjection(benchmark::State& state)
{
    auto cp = ball_projection(static_cast<int>(state.range(0)), 17);
    for (auto _ : state) {
        auto st = solve_socp(cp);
        benchmark::DoNotOptimize(st.objective);
    }
}

void BM_TerminalLmi(benchmark::State& state)
{
    const int nx = static_cast<int>(state.range(0));
    ProblemData pd = make_quadratic_pd(41, nx, std::max(1, nx / 2), 2);
    auto ldi = build_ldi(*pd.model, pd.Xhat, pd.Uhat, pd.Theta0_v);
    for (auto _ : state) {
        auto sol = solve_terminal_lmi(ldi, pd.W.vertices, pd.Q, pd.R);
        benchmark::DoNotOptimize(sol.sigma);
    }
}

} // namespace

BENCHMARK(BM_SocpBallProjection)->Arg(4)->Arg(16)->Arg(64);
BENCHMARK(BM_TerminalLmi)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
