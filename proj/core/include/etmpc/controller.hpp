#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "etmpc/ocp.hpp"

namespace etmpc {

struct ControllerConfig {
    int iter_max = 10;
    double tolerance = 1e-3;  // on the largest per-step ||v*_k||
    int ls_max_iter = 8;      // backtracking halvings per recovery
    int n_hat_max = 64;
    /// Re-run the offline design from the current parameter set at every step
    /// (one SDP per step; the SDP cost grows much faster than the online SOCP).
    bool refresh_design_online = false;
    SolverSettings solver = SolverSettings::from_env();
};

struct IterationRecord {
    bool feasible = false;
    int line_search_trials = 0;
    double J_bar = std::numeric_limits<double>::quiet_NaN();
    double v_star_norm = std::numeric_limits<double>::quiet_NaN();
    double wall_time = 0.0;  // full iteration: rollout + bounds + assemble + solve
    SizeStats stats;
};

struct StepReport {
    Vec u_applied;
    int iterations = 0;
    std::vector<IterationRecord> records;
    double J_final = std::numeric_limits<double>::quiet_NaN();
    bool solved_any = false;
    bool abandoned = false;        // a line search ran out of trials
    bool abandoned_first = false;  // ... at the first iteration (theory says never)
    int N_hat = 0;
    double sigma_hat = 0.0;
    double x0N_norm = 0.0;

    // snapshot of the last solved program for offline verification
    NominalTrajectory solved_traj;
    TubeSolution solution;
    std::vector<double> lambdas;
    Vec x_plant;
};

/// Receding-horizon controller: outer successive-linearization iterations with
/// the feasibility-restoring backtracking line search and the warm shift.
class Controller {
public:
    Controller(ProblemData pd, TerminalParams params, ControllerConfig cfg = {});

    enum class InitOutcome { DirectFeasible, Repaired };

    /// Feasibility at the initial state: accepts v0 = 0 directly or repairs it
    /// through a slack relaxation; throws InitialInfeasible otherwise.
    InitOutcome initialize(const Vec& x_init);

    StepReport step(const Vec& x_plant);

    /// Runs one step from an explicit perturbation sequence instead of the
    /// stored one (diagnostics; exercises the feasibility-restoring search).
    StepReport step_with_sequence(const Vec& x_plant, std::vector<Vec> v0_init);

    /// Installs the estimator output for the following steps. The nominal
    /// parameter of the running step is not touched.
    void set_parameter_set(const VPolytope& vertices, const Vec& theta0);

    /// Re-runs the offline design from the current parameter set (the optional
    /// online refresh; expensive).
    void refresh_terminal_design();

    const ProblemData& problem() const { return pd_; }
    const TerminalParams& params() const { return params_; }
    const Vec& theta0() const { return theta0_; }
    const VPolytope& theta_set() const { return theta_; }
    double prev_J_final() const { return J_final_prev_; }

private:
    struct Attempt {
        bool ok = false;
        SolveResult status = SolveResult::NumericalFailure;
        NominalTrajectory traj;
        TerminalHorizon horizon;
        TubeSolution sol;
        SizeStats stats;
        std::vector<double> lambdas;
    };
    Attempt try_solve(const Vec& x00, const std::vector<Vec>& v0, int iteration,
                      std::optional<double> prev_iter_J, const Vec& x_plant);

    ProblemData pd_;
    TerminalParams params_;
    ControllerConfig cfg_;
    VPolytope theta_;
    Vec theta0_;

    std::vector<Vec> v0_, v0_old_;
    std::vector<Vec> x0_old_;  // stored nominal trajectory (N+1 states)
    bool initialized_ = false;
    bool have_prev_ = false;  // a completed step exists
    double J_final_prev_ = std::numeric_limits<double>::quiet_NaN();
    double sigma_hat_prev_ = 0.0;
    Vec last_x_, last_u_;
};

} // namespace etmpc
