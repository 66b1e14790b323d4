#pragma once

#include <optional>
#include <string>

#include "etmpc/bench.hpp"

namespace etmpc {

struct LoadedProblem {
    ProblemData pd;
    std::optional<InstanceTruth> truth;
    std::optional<BenchmarkSpec> spec;  // present when generated from a stanza
};

/// Problem definition files: either an explicit quadratic-basis model
/// (dimensions, A/B, basis indices, set bounds, weights, horizon) or a
/// "benchmark" generator stanza with dimensions and a seed.
LoadedProblem load_problem(const std::string& path);
void save_problem(const std::string& path, const ProblemData& pd,
                  const InstanceTruth* truth = nullptr);

/// Design artifact: the offline terminal record, so online runs skip the SDP.
void save_params(const std::string& path, const TerminalParams& p);
TerminalParams load_params(const std::string& path);

/// Closed-loop run log with everything the offline verifier needs.
void save_trace(const std::string& path, const ClosedLoopTrace& trace, const ProblemData& pd,
                const TerminalParams& params);
struct LoadedTrace {
    ClosedLoopTrace trace;
    ProblemData pd;
    TerminalParams params;
};
LoadedTrace load_trace(const std::string& path);

/// Offline re-verification of a recorded run: constraints, objective-decrease
/// chain, parameter-set nestedness/consistency, Monte Carlo tube containment,
/// and row-by-row re-evaluation of each solved program.
struct TraceVerification {
    bool constraints_ok = false;
    bool cost_chain_ok = false;
    bool theta_ok = false;
    double tube_worst = 0.0;        // max ||e||_V - beta over samples (<= tol)
    double rows_worst = 0.0;        // max re-evaluated row violation
    int steps_checked = 0;
    bool ok(double tol = 1e-6) const
    {
        return constraints_ok && cost_chain_ok && theta_ok && tube_worst <= tol &&
               rows_worst <= tol;
    }
};
TraceVerification verify_trace(const ProblemData& pd, const TerminalParams& params,
                               const ClosedLoopTrace& trace, int tube_samples = 100,
                               unsigned seed = 12345);

} // namespace etmpc
