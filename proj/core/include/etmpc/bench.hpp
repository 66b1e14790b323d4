#pragma once

#include <string>
#include <vector>

#include "etmpc/controller.hpp"
#include "etmpc/estimator.hpp"

namespace etmpc {

struct BenchmarkSpec {
    int nx = 2, nu = 1, ntheta = 2, nw = 2;
    int N = 10;
    int T = 10;          // closed-loop steps
    int instances = 20;
    unsigned seed = 1;

    std::string label() const;
};

struct InstanceTruth {
    Vec theta_star;
    unsigned noise_seed = 0;
};

struct GeneratedInstance {
    ProblemData pd;
    InstanceTruth truth;
    int redraws = 0;  // rejected (A,B) draws before a designable instance
};

/// Draws a random quadratic-nonlinearity instance; (A,B) are redrawn until the
/// terminal design succeeds (LMI feasible, finite terminal horizon).
GeneratedInstance generate_instance(const BenchmarkSpec& spec);

/// One recorded closed-loop step (controller report condensed plus the data
/// needed for offline re-verification).
struct StepTrace {
    Vec x, u;
    double stage_cost = 0.0;
    double J_final = 0.0;
    double sigma_hat = 0.0;
    int N_hat = 0;
    int iterations = 0;
    int line_search_trials = 0;
    bool solved = false;
    bool abandoned_first = false;
    double step_time = 0.0;              // all iterations
    std::vector<double> iter_times;      // per outer iteration
    std::vector<double> iter_J;          // objective per feasible iteration
    SizeStats stats;                     // of the last solved program
    Vec theta_offsets;                   // estimator facet offsets after update
    Vec theta0;                          // nominal parameter used in the step

    // verification snapshot
    std::vector<Vec> traj_x0;
    std::vector<Vec> traj_v0;
    TubeSolution solution;
    std::vector<Vec> theta_vertices;     // parameter set active at the solve
};

struct ClosedLoopTrace {
    BenchmarkSpec spec;
    InstanceTruth truth;
    double sigma_bar = 0.0;
    int init_draws = 0;  // initial conditions tried before feasibility
    Vec x_init;
    std::vector<StepTrace> steps;
    double J_first_iteration = 0.0;  // first iteration at t = 0
    double certainty_cost = -1.0;    // converged certainty-equivalent optimum
    double suboptimality = -1.0;

    double realized_cost() const;
};

struct SimulateConfig {
    ControllerConfig controller;
    int estimation_window = 5;
    int max_init_draws = 100;
    bool compute_suboptimality = true;
};

/// Runs the closed loop: controller step, plant propagation under the hidden
/// truth, then the set-membership update feeding the next step.
ClosedLoopTrace simulate(const ProblemData& pd, const InstanceTruth& truth,
                         const TerminalParams& params, const BenchmarkSpec& spec,
                         const SimulateConfig& cfg = {});

struct SweepRow {
    BenchmarkSpec spec;
    int n_vars = 0, n_eq = 0, n_linear = 0, n_soc = 0;
    double iter_time_mean = 0.0, iter_time_min = 0.0, iter_time_max = 0.0;
    double step_time_mean = 0.0;
    double outer_iters_mean = 0.0;
    double subopt_mean = 0.0, subopt_std = 0.0;
    double closed_loop_cost_mean = 0.0;
    double sigma_bar_mean = 0.0;
    int total_redraws = 0;
};

/// Runs `spec.instances` independent (instance, controller) pairs per spec on
/// a worker pool and aggregates; outputs are ordered by seed and deterministic
/// up to the timing columns.
std::vector<SweepRow> sweep(const std::vector<BenchmarkSpec>& specs,
                            const SimulateConfig& cfg = {}, int workers = 0);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Converged optimum of the certainty-equivalent problem (W = {0},
/// Theta = {theta*}, sigma = 0, initial tube pinned to zero).
double certainty_equivalent_cost(const ProblemData& pd, const TerminalParams& params,
                                 const Vec& theta_star, const Vec& x_init,
                                 const ControllerConfig& cfg);

} // namespace etmpc
