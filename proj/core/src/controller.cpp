#include "etmpc/controller.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "etmpc/errors.hpp"

namespace etmpc {

namespace {

double vstar_norm(const std::vector<Vec>& v)
{
    double n = 0.0;
    for (const Vec& vk : v) n = std::max(n, vk.norm());
    return n;
}

} // namespace

Controller::Controller(ProblemData pd, TerminalParams params, ControllerConfig cfg)
    : pd_(std::move(pd)), params_(std::move(params)), cfg_(cfg), theta_(pd_.Theta0_v)
{
    theta0_ = Vec::Zero(pd_.ntheta());
    for (const Vec& v : theta_.vertices) theta0_ += v;
    theta0_ /= theta_.count();
}

void Controller::set_parameter_set(const VPolytope& vertices, const Vec& theta0)
{
    theta_ = vertices;
    theta0_ = theta0;
}

void Controller::refresh_terminal_design()
{
    params_ = design_terminal(pd_, &theta_, cfg_.solver);
}

Controller::Attempt Controller::try_solve(const Vec& x00, const std::vector<Vec>& v0,
                                          int iteration, std::optional<double> prev_iter_J,
                                          const Vec& x_plant)
{
    Attempt at;
    try {
        at.traj = rollout(pd_, x00, v0, theta0_, params_.K);
    } catch (const DivergentRollout&) {
        at.status = SolveResult::Infeasible;
        return at;
    }
    auto lins = linearize_trajectory(pd_, at.traj, theta_, params_.vm, params_.sigma);
    for (const auto& lin : lins) at.lambdas.push_back(lin.lambda);
    const double x0n = params_.vm.norm(at.traj.x0.back());
    double d_theta = 0.0;
    for (const Vec& a : theta_.vertices)
        for (const Vec& b : theta_.vertices) d_theta = std::max(d_theta, (a - b).lpNorm<1>());
    try {
        at.horizon = find_terminal_horizon(params_, x0n, d_theta, cfg_.n_hat_max, cfg_.solver);
    } catch (const DesignError&) {
        at.status = SolveResult::Infeasible;
        return at;
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::optional<double> prev_J, stage, sh2;
    if (iteration == 1 && have_prev_) {
        prev_J = J_final_prev_;
        stage = last_x_.dot(pd_.Q * last_x_) + last_u_.dot(pd_.R * last_u_);
        sh2 = sigma_hat_prev_ * sigma_hat_prev_;
    }
    // the initial tube radius always references the measured plant state,
    // even when the line search has blended the rollout start away from it
    ConicProgram cp = assemble_ocp(pd_, at.traj, lins, params_, at.horizon, x_plant, iteration,
                                   prev_J, stage, sh2, prev_iter_J);
    at.stats = count_constraints(cp);
    at.stats.assembly_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                 .count();

    auto st = solve_socp(cp, cfg_.solver);
    at.stats.solve_time = st.solve_time;
    at.status = st.result;
    if (st.result == SolveResult::NumericalFailure) {
        // near-converged outer iterations produce degenerate geometry that can
        // defeat full-precision certification; retry once at reduced accuracy
        // before treating the failure as infeasibility
        SolverSettings relaxed = cfg_.solver;
        relaxed.feastol = std::max(relaxed.feastol, 1e-5);
        relaxed.abstol = std::max(relaxed.abstol, 1e-4);
        relaxed.reltol = std::max(relaxed.reltol, 1e-4);
        if (std::getenv("ETMPC_CTRL_DEBUG"))
            std::fprintf(stderr, "[ctrl] i=%d first solve failed (pres=%.2e dres=%.2e gap=%.2e), retrying\n",
                         iteration, st.primal_residual, st.dual_residual, st.duality_gap);
        st = solve_socp(cp, relaxed);
        at.stats.solve_time += st.solve_time;
        at.status = st.result;
        if (std::getenv("ETMPC_CTRL_DEBUG"))
            std::fprintf(stderr, "[ctrl] i=%d retry status=%s pres=%.2e dres=%.2e gap=%.2e\n",
                         iteration, to_string(st.result), st.primal_residual, st.dual_residual,
                         st.duality_gap);
    }
    if (st.result != SolveResult::Optimal) {
        if (std::getenv("ETMPC_CTRL_DEBUG"))
            std::fprintf(stderr, "[ctrl] i=%d solve status=%s\n", iteration,
                         to_string(st.result));
        return at;  // remaining failures handled as infeasibility
    }
    try {
        at.sol = extract_solution(cp, pd_, at.horizon, st.primal);
    } catch (const ValidationFailed&) {
        at.status = SolveResult::NumericalFailure;
        return at;  // reduced-precision point failed validation: recover via search
    }
    at.ok = true;
    return at;
}

Controller::InitOutcome Controller::initialize(const Vec& x_init)
{
    InitOutcome outcome = InitOutcome::DirectFeasible;
    std::vector<Vec> zeros(pd_.N, Vec::Zero(pd_.nu()));
    Attempt at = try_solve(x_init, zeros, 1, std::nullopt, x_init);
    if (at.ok) {
        v0_ = zeros;
    } else {
        outcome = InitOutcome::Repaired;
        // slack-relaxed repair: relax every linear row, minimize the slack,
        // then verify the repaired sequence with a clean solve
        NominalTrajectory traj = rollout(pd_, x_init, zeros, theta0_, params_.K);
        auto lins = linearize_trajectory(pd_, traj, theta_, params_.vm, params_.sigma);
        const double x0n = params_.vm.norm(traj.x0.back());
        double d_theta = 0.0;
        for (const Vec& a : theta_.vertices)
            for (const Vec& b : theta_.vertices) d_theta = std::max(d_theta, (a - b).lpNorm<1>());
        TerminalHorizon th;
        try {
            th = find_terminal_horizon(params_, x0n, d_theta, cfg_.n_hat_max, cfg_.solver);
        } catch (const DesignError& e) {
            throw InitialInfeasible(std::string("initialize: no terminal horizon: ") + e.what());
        }
        AssembleOptions opts;
        opts.slack_relax = true;
        ConicProgram cp = assemble_ocp(pd_, traj, lins, params_, th, x_init, 1, std::nullopt,
                                       std::nullopt, std::nullopt, std::nullopt, opts);
        auto st = solve_socp(cp, cfg_.solver);
        if (!st.optimal())
            throw InitialInfeasible(std::string("initialize: slack relaxation failed: ") +
                                    to_string(st.result));
        const double slack = st.primal(cp.var("slack"));
        if (slack > 1e-8)
            throw InitialInfeasible("initialize: infeasible at the initial state", slack);
        std::vector<Vec> candidate(pd_.N);
        const int v0c = cp.var("v");
        for (int k = 0; k < pd_.N; ++k)
            candidate[k] = st.primal.segment(v0c + k * pd_.nu(), pd_.nu());
        Attempt verify = try_solve(x_init, candidate, 1, std::nullopt, x_init);
        if (!verify.ok)
            throw InitialInfeasible("initialize: slack repair did not survive a clean re-solve",
                                    slack);
        v0_ = candidate;
    }
    v0_old_ = v0_;
    NominalTrajectory traj = rollout(pd_, x_init, v0_, theta0_, params_.K);
    x0_old_ = traj.x0;
    initialized_ = true;
    have_prev_ = false;
    return outcome;
}

StepReport Controller::step_with_sequence(const Vec& x_plant, std::vector<Vec> v0_init)
{
    v0_ = std::move(v0_init);
    return step(x_plant);
}

StepReport Controller::step(const Vec& x_plant)
{
    if (!initialized_) throw std::logic_error("Controller::step before initialize");
    if (cfg_.refresh_design_online) refresh_terminal_design();
    StepReport rep;
    rep.x_plant = x_plant;

    Vec x00 = x_plant;
    std::vector<Vec> v0 = v0_;
    std::vector<Vec> v_star(pd_.N, Vec::Zero(pd_.nu()));
    double vnorm = std::numeric_limits<double>::infinity();
    std::optional<double> prev_iter_J;
    NominalTrajectory last_traj;
    bool have_traj = false;

    int i = 1;
    while (i <= cfg_.iter_max && vnorm >= cfg_.tolerance) {
        IterationRecord rec;
        const auto t0 = std::chrono::steady_clock::now();
        const int entry_iteration = i;

        Attempt at = try_solve(x00, v0, entry_iteration, prev_iter_J, x_plant);
        if (!at.ok) {
            // backtracking line search toward the stored feasible pair
            double alpha = 1.0;
            bool searching = true;
            int trials = 0;
            while (trials < cfg_.ls_max_iter && searching) {
                alpha *= 0.5;
                if (entry_iteration == 1) x00 = x0_old_[0] + alpha * (x00 - x0_old_[0]);
                for (int k = 0; k < pd_.N; ++k)
                    v0[k] = v0_old_[k] + alpha * (v0[k] - v0_old_[k]);
                ++trials;
                at = try_solve(x00, v0, entry_iteration, prev_iter_J, x_plant);
                if (at.ok) searching = false;
            }
            rec.line_search_trials = trials;
            if (searching) {
                // abandoned: restore the stored pair and stop iterating
                rep.abandoned = true;
                if (entry_iteration == 1) rep.abandoned_first = true;
                for (int k = 0; k < pd_.N; ++k) v_star[k].setZero();
                v0 = v0_old_;
                if (entry_iteration == 1 && !x0_old_.empty()) {
                    last_traj.x0 = x0_old_;
                    last_traj.v0 = v0_old_;
                    last_traj.theta0 = theta0_;
                    last_traj.K = params_.K;
                    have_traj = true;
                }
                i = cfg_.iter_max;
            }
        }
        if (at.ok) {
            last_traj = at.traj;
            have_traj = true;
            for (int k = 0; k < pd_.N; ++k) v_star[k] = at.sol.v_star[k];
            vnorm = vstar_norm(v_star);
            prev_iter_J = at.sol.J_bar;
            rep.solved_any = true;
            rep.J_final = at.sol.J_bar;
            rep.N_hat = at.horizon.N_hat;
            rep.sigma_hat = at.horizon.sigma_hat;
            rep.x0N_norm = at.horizon.x0N_norm;
            rep.solved_traj = at.traj;
            rep.solution = at.sol;
            rep.lambdas = at.lambdas;
            rec.feasible = true;
            rec.J_bar = at.sol.J_bar;
            rec.v_star_norm = vnorm;
            rec.stats = at.stats;
        }
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.records.push_back(rec);
        ++rep.iterations;

        // store the feasible sequence, then take the update step
        v0_old_ = v0;
        for (int k = 0; k < pd_.N; ++k) v0[k] += v_star[k];
        ++i;
        if (!at.ok && rep.abandoned) break;
    }

    // apply the first perturbation and shift the stored sequences
    rep.u_applied = params_.K * x_plant + v0[0];
    last_x_ = x_plant;
    last_u_ = rep.u_applied;
    if (rep.solved_any) {
        J_final_prev_ = rep.J_final;
        sigma_hat_prev_ = rep.sigma_hat;
        have_prev_ = true;
    } else {
        have_prev_ = false;  // drop the cost-decrease chain after a failed step
    }

    v0_ = v0;
    v0_.erase(v0_.begin());
    v0_.push_back(Vec::Zero(pd_.nu()));
    v0_old_.erase(v0_old_.begin());
    v0_old_.push_back(Vec::Zero(pd_.nu()));
    if (have_traj) {
        x0_old_.assign(last_traj.x0.begin() + 1, last_traj.x0.end());
        x0_old_.push_back(
            eval_closed_loop(*pd_.model, last_traj.x0.back(), Vec::Zero(pd_.nu()), theta0_,
                             params_.K));
    }
    return rep;
}

} // namespace etmpc
