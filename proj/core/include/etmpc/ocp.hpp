#pragma once

#include <optional>
#include <vector>

#include "etmpc/conic.hpp"
#include "etmpc/linearize.hpp"
#include "etmpc/terminal.hpp"

namespace etmpc {

/// Optimizer output of the online tube program.
struct TubeSolution {
    std::vector<Vec> v_star;  // N input perturbations
    Vec beta_star;            // N+1 tube radii followed by N_hat terminal extensions
    std::vector<Vec> z_star;  // N+1 nominal-perturbation states
    Vec l_star;               // N stage rows then N_hat+1 terminal rows
    double J_bar = 0.0;
    double r_star = 0.0;      // epigraph of ||z_N||_V

    int horizon() const { return static_cast<int>(v_star.size()); }
};

struct SizeStats {
    int n_vars = 0;
    int n_eq_rows = 0;
    int n_linear_rows = 0;
    int n_soc_blocks = 0;
    double assembly_time = 0.0;  // seconds
    double solve_time = 0.0;
};

struct AssembleOptions {
    /// Pins z_0 = x_plant - x0_0 and beta_0 = 0 (certainty-equivalent baseline).
    bool pin_initial = false;
    /// Relaxes every linear row through one shared nonnegative slack and
    /// minimizes it (feasibility repair for the initial state).
    bool slack_relax = false;
};

/// Builds the online second-order cone program. iteration_index is 1-based;
/// the first iteration of a step with a predecessor requires prev_J_final,
/// realized_stage_cost and prev_sigma_hat_sq, later iterations require
/// prev_iter_J, and the very first solve at t = 0 supplies neither.
ConicProgram assemble_ocp(const ProblemData& pd, const NominalTrajectory& traj,
                          const std::vector<StepLinearization>& lins, const TerminalParams& params,
                          const TerminalHorizon& horizon, const Vec& x_plant, int iteration_index,
                          std::optional<double> prev_J_final = std::nullopt,
                          std::optional<double> realized_stage_cost = std::nullopt,
                          std::optional<double> prev_sigma_hat_sq = std::nullopt,
                          std::optional<double> prev_iter_J = std::nullopt,
                          const AssembleOptions& opts = {});

/// Unpacks and validates an Optimal solve; throws ValidationFailed when the
/// point violates a program row beyond 1e-6 or the solution invariants fail.
TubeSolution extract_solution(const ConicProgram& cp, const ProblemData& pd,
                              const TerminalHorizon& horizon, const Vec& raw_primal);

SizeStats count_constraints(const ConicProgram& cp);

/// Monte Carlo re-simulation of the optimized plan: samples parameter vectors
/// and disturbance sequences, propagates the true nonlinear dynamics, and
/// returns the worst tube violation max(||e_k||_V - beta_k) together with the
/// worst X/U constraint violation (both <= 0 when sound).
struct TubeCheck {
    double worst_tube = 0.0;
    double worst_constraint = 0.0;
};
TubeCheck check_tube_containment(const ProblemData& pd, const NominalTrajectory& traj,
                                 const TubeSolution& sol, const TerminalParams& params,
                                 const VPolytope& theta_t, const Vec& x_plant, int n_samples,
                                 unsigned seed);

} // namespace etmpc
