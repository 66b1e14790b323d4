#include "etmpc/ocp.hpp"

#include <cmath>
#include <random>

#include "etmpc/errors.hpp"

namespace etmpc {

ConicProgram assemble_ocp(const ProblemData& pd, const NominalTrajectory& traj,
                          const std::vector<StepLinearization>& lins, const TerminalParams& params,
                          const TerminalHorizon& horizon, const Vec& x_plant, int iteration_index,
                          std::optional<double> prev_J_final,
                          std::optional<double> realized_stage_cost,
                          std::optional<double> prev_sigma_hat_sq, std::optional<double> prev_iter_J,
                          const AssembleOptions& opts)
{
    const int N = pd.N;
    const int nx = pd.nx(), nu = pd.nu();
    if (static_cast<int>(lins.size()) != N)
        throw std::invalid_argument("assemble_ocp: need one linearization per step");
    if (iteration_index > 1 && !prev_iter_J)
        throw std::invalid_argument("assemble_ocp: iterations > 1 need the previous objective");
    if (iteration_index == 1 && prev_J_final && (!realized_stage_cost || !prev_sigma_hat_sq))
        throw std::invalid_argument(
            "assemble_ocp: the first-iteration cost row needs the realized stage cost and the "
            "previous sigma_hat");

    const int n_hat = horizon.N_hat;
    const Mat& Vs = params.vm.sqrt();
    const Mat Qs = VMetric(pd.Q).sqrt();
    const Mat Rs = VMetric(pd.R).sqrt();
    const double c_v = params.vinv_qhat_norm;

    ConicProgram cp;
    const int v0 = cp.add_vars("v", N * nu);
    const int z0 = cp.add_vars("z", (N + 1) * nx);
    const int b0 = cp.add_vars("beta", N + 1);
    const int a0 = cp.add_vars("a", N);
    const int l0 = cp.add_vars("l", N);
    const int lt0 = cp.add_vars("lt", n_hat + 1);
    const int r0 = cp.add_vars("r", 1);
    const int be0 = n_hat > 0 ? cp.add_vars("bext", n_hat) : -1;
    const int j0 = cp.add_vars("J", 1);
    cp.add_objective(j0, 1.0);

    auto zcol = [&](int k, int i) { return z0 + k * nx + i; };
    auto vcol = [&](int k, int i) { return v0 + k * nu + i; };
    auto bvar = [&](int k) { return k <= N ? b0 + k : be0 + (k - N - 1); };

    // z dynamics equalities
    for (int k = 0; k < N; ++k)
        for (int i = 0; i < nx; ++i) {
            LinExpr e;
            e.add(zcol(k + 1, i), 1.0);
            for (int c = 0; c < nx; ++c) e.add(zcol(k, c), -lins[k].Phi(i, c));
            for (int c = 0; c < nu; ++c) e.add(vcol(k, c), -lins[k].B(i, c));
            cp.add_equality(e);
        }

    // initial tube radius: beta_0 >= ||x0_0 + z_0 - x_plant||_V
    {
        std::vector<LinExpr> rows;
        LinExpr head;
        head.add(b0, 1.0);
        rows.push_back(head);
        const Vec off = Vs * (traj.x0[0] - x_plant);
        for (int i = 0; i < nx; ++i) {
            LinExpr row(off(i));
            for (int c = 0; c < nx; ++c) row.add(zcol(0, c), Vs(i, c));
            rows.push_back(row);
        }
        cp.add_soc(std::move(rows));
    }
    if (opts.pin_initial) {
        for (int i = 0; i < nx; ++i) {
            LinExpr e(traj.x0[0](i) - x_plant(i));
            e.add(zcol(0, i), 1.0);
            cp.add_equality(e);  // z_0 = x_plant - x0_0
        }
        LinExpr e;
        e.add(b0, 1.0);
        cp.add_equality(e);  // beta_0 = 0
    }

    for (int k = 0; k < N; ++k) {
        const StepLinearization& lin = lins[k];
        // a_k >= sqrt(lambda_k beta_k^2 + sigma^2)
        {
            LinExpr head;
            head.add(a0 + k, 1.0);
            LinExpr t1;
            t1.add(b0 + k, std::sqrt(std::max(lin.lambda, 0.0)));
            cp.add_soc({head, t1, LinExpr(params.sigma)});
        }
        // tube recursion cones, one per (j, q)
        for (const CDPair& cd : lin.cd_pairs) {
            const Mat VC = Vs * cd.C;
            const Mat VD = Vs * cd.D;
            for (const Vec& d0 : lin.delta0_vertices) {
                std::vector<LinExpr> rows;
                LinExpr head;
                head.add(b0 + k + 1, 1.0);
                head.add(a0 + k, -1.0);
                rows.push_back(head);
                const Vec off = Vs * d0;
                for (int i = 0; i < nx; ++i) {
                    LinExpr row(off(i));
                    for (int c = 0; c < nx; ++c) row.add(zcol(k, c), VC(i, c));
                    for (int c = 0; c < nu; ++c) row.add(vcol(k, c), VD(i, c));
                    rows.push_back(std::move(row));
                }
                cp.add_soc(std::move(rows));
            }
        }
        // stage cost: l_k - c_v beta_k >= ||(Q^{1/2}(x0+z), R^{1/2}(K(x0+z)+v0+v))||
        {
            std::vector<LinExpr> rows;
            LinExpr head;
            head.add(l0 + k, 1.0);
            head.add(b0 + k, -c_v);
            rows.push_back(head);
            const Vec qoff = Qs * traj.x0[k];
            for (int i = 0; i < nx; ++i) {
                LinExpr row(qoff(i));
                for (int c = 0; c < nx; ++c) row.add(zcol(k, c), Qs(i, c));
                rows.push_back(std::move(row));
            }
            const Mat RK = Rs * params.K;
            const Vec roff = RK * traj.x0[k] + Rs * traj.v0[k];
            for (int i = 0; i < nu; ++i) {
                LinExpr row(roff(i));
                for (int c = 0; c < nx; ++c) row.add(zcol(k, c), RK(i, c));
                for (int c = 0; c < nu; ++c) row.add(vcol(k, c), Rs(i, c));
                rows.push_back(std::move(row));
            }
            cp.add_soc(std::move(rows));
        }
        // tightened input rows: G(K(x0+z)+v0+v) + beta ||V^{-1/2}K'G_i'|| <= g
        for (int rix = 0; rix < pd.U.rows(); ++rix) {
            const Vec gi = pd.U.H.row(rix);
            const Vec gk = params.K.transpose() * gi;
            LinExpr e(gi.dot(params.K * traj.x0[k] + traj.v0[k]) - pd.U.h(rix));
            for (int c = 0; c < nx; ++c) e.add(zcol(k, c), gk(c));
            for (int c = 0; c < nu; ++c) e.add(vcol(k, c), gi(c));
            e.add(b0 + k, params.vm.dual_row_norm(gk));
            cp.add_inequality(e);
        }
        // tightened state rows
        for (int rix = 0; rix < pd.X.rows(); ++rix) {
            const Vec hi = pd.X.H.row(rix);
            LinExpr e(hi.dot(traj.x0[k]) - pd.X.h(rix));
            for (int c = 0; c < nx; ++c) e.add(zcol(k, c), hi(c));
            e.add(b0 + k, params.vm.dual_row_norm(hi));
            cp.add_inequality(e);
        }
        // tightened perturbation rows: S contains z_k + E(V, beta_k^2)
        for (int rix = 0; rix < pd.S_h.rows(); ++rix) {
            const Vec hi = pd.S_h.H.row(rix);
            LinExpr e(-pd.S_h.h(rix));
            for (int c = 0; c < nx; ++c) e.add(zcol(k, c), hi(c));
            e.add(b0 + k, params.vm.dual_row_norm(hi));
            cp.add_inequality(e);
        }
        // input-perturbation membership rows (absent for a full-space set)
        for (int rix = 0; rix < pd.Vset_h.rows(); ++rix) {
            const Vec hi = pd.Vset_h.H.row(rix);
            LinExpr e(hi.dot(traj.v0[k]) - pd.Vset_h.h(rix));
            for (int c = 0; c < nu; ++c) e.add(vcol(k, c), hi(c));
            cp.add_inequality(e);
        }
    }

    // terminal: r >= ||z_N||_V
    {
        std::vector<LinExpr> rows;
        LinExpr head;
        head.add(r0, 1.0);
        rows.push_back(head);
        for (int i = 0; i < nx; ++i) {
            LinExpr row;
            for (int c = 0; c < nx; ++c) row.add(zcol(N, c), Vs(i, c));
            rows.push_back(std::move(row));
        }
        cp.add_soc(std::move(rows));
    }
    const OmegaBlocks ob = build_omega_blocks(params, horizon);
    for (int k = 0; k <= n_hat; ++k) {
        LinExpr cap(-ob.cap_rhs[k]);
        cap.add(bvar(N + k), 1.0);
        cap.add(r0, ob.cap_r_coef[k]);
        cp.add_inequality(cap);
    }
    for (int k = 1; k <= n_hat; ++k) {
        LinExpr head(-ob.rec_const[k - 1]);
        head.add(bvar(N + k), 1.0);
        head.add(r0, -ob.rec_r_coef[k - 1]);
        LinExpr t1;
        t1.add(bvar(N + k - 1), std::sqrt(ob.lambda_hat));
        cp.add_soc({head, t1, LinExpr(ob.sigma)});
    }
    const TerminalCostBlocks tc = terminal_cost_blocks(params, horizon);
    for (int k = 0; k <= n_hat; ++k) {
        LinExpr e(tc.consts[k]);
        e.add(r0, tc.r_coef[k]);
        e.add(bvar(N + k), tc.beta_coef[k]);
        e.add(lt0 + k, -1.0);
        cp.add_inequality(e);  // lt_k >= terminal cost row
    }

    // objective epigraph: J >= sum of squared l rows
    {
        std::vector<LinExpr> lrows;
        for (int k = 0; k < N; ++k) {
            LinExpr e;
            e.add(l0 + k, 1.0);
            lrows.push_back(std::move(e));
        }
        for (int k = 0; k <= n_hat; ++k) {
            LinExpr e;
            e.add(lt0 + k, 1.0);
            lrows.push_back(std::move(e));
        }
        LinExpr ju;
        ju.add(j0, 1.0);
        cp.add_rotated_soc(ju, LinExpr(1.0), lrows);
    }

    // cost-decrease rows; the epsilon keeps a strict interior when the
    // previous optimum is exactly attained after re-linearization
    if (iteration_index == 1 && prev_J_final) {
        const double bound = *prev_J_final - *realized_stage_cost + *prev_sigma_hat_sq;
        LinExpr e(-(bound + 1e-9 + 1e-9 * std::abs(bound)));
        e.add(j0, 1.0);
        cp.add_inequality(e);
    } else if (iteration_index > 1) {
        // the margin must exceed the solver's certification tolerance, else the
        // row pinches the feasible set into an uncertifiable sliver when the
        // re-linearized optimum matches the previous iterate
        LinExpr e(-(*prev_iter_J + 1e-6 + 1e-6 * std::abs(*prev_iter_J)));
        e.add(j0, 1.0);
        cp.add_inequality(e);
    }

    if (opts.slack_relax) {
        const int s0 = cp.add_vars("slack", 1);
        cp.relax_inequalities(s0);
        LinExpr nonneg;
        nonneg.add(s0, -1.0);
        cp.add_inequality(nonneg);
        cp.clear_objective();
        cp.add_objective(s0, 1.0);
    }
    return cp;
}

TubeSolution extract_solution(const ConicProgram& cp, const ProblemData& pd,
                              const TerminalHorizon& horizon, const Vec& raw_primal)
{
    const int N = pd.N;
    const int nx = pd.nx(), nu = pd.nu();
    const int n_hat = horizon.N_hat;
    TubeSolution sol;
    const int v0 = cp.var("v"), z0 = cp.var("z"), b0 = cp.var("beta");
    const int l0 = cp.var("l"), lt0 = cp.var("lt"), r0 = cp.var("r"), j0 = cp.var("J");

    for (int k = 0; k < N; ++k) sol.v_star.push_back(raw_primal.segment(v0 + k * nu, nu));
    for (int k = 0; k <= N; ++k) sol.z_star.push_back(raw_primal.segment(z0 + k * nx, nx));
    sol.beta_star = Vec(N + 1 + n_hat);
    sol.beta_star.head(N + 1) = raw_primal.segment(b0, N + 1);
    if (n_hat > 0) sol.beta_star.tail(n_hat) = raw_primal.segment(cp.var("bext"), n_hat);
    sol.l_star = Vec(N + n_hat + 1);
    sol.l_star.head(N) = raw_primal.segment(l0, N);
    sol.l_star.tail(n_hat + 1) = raw_primal.segment(lt0, n_hat + 1);
    sol.r_star = raw_primal(r0);
    sol.J_bar = raw_primal(j0);

    if (sol.beta_star.minCoeff() < -1e-9)
        throw ValidationFailed("extract_solution: negative tube radius");
    if (sol.J_bar < sol.l_star.squaredNorm() - 1e-6)
        throw ValidationFailed("extract_solution: objective epigraph violated");
    const double viol = cp.max_violation(raw_primal);
    if (viol > 1e-6)
        throw ValidationFailed("extract_solution: solution violates a program row by " +
                               std::to_string(viol));
    return sol;
}

SizeStats count_constraints(const ConicProgram& cp)
{
    SizeStats st;
    st.n_vars = cp.num_vars();
    st.n_eq_rows = cp.num_equalities();
    st.n_linear_rows = cp.num_inequalities();
    st.n_soc_blocks = cp.num_soc_blocks();
    return st;
}

TubeCheck check_tube_containment(const ProblemData& pd, const NominalTrajectory& traj,
                                 const TubeSolution& sol, const TerminalParams& params,
                                 const VPolytope& theta_t, const Vec& x_plant, int n_samples,
                                 unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const BasisModel& m = *pd.model;
    const int N = pd.N;
    TubeCheck out;

    auto mix = [&](const std::vector<Vec>& verts) {
        Vec lam(verts.size());
        for (int i = 0; i < lam.size(); ++i) lam(i) = u(rng);
        lam /= lam.sum();
        Vec v = Vec::Zero(verts[0].size());
        for (std::size_t i = 0; i < verts.size(); ++i) v += lam(i) * verts[i];
        return v;
    };

    for (int s = 0; s < n_samples; ++s) {
        const Vec theta = mix(theta_t.vertices);
        Vec x = x_plant;
        for (int k = 0; k <= N; ++k) {
            const Vec center = traj.x0[k] + sol.z_star[k];
            const Vec e = x - center;
            out.worst_tube =
                std::max(out.worst_tube, params.vm.norm(e) - sol.beta_star(k));
            if (!pd.X.is_full_space())
                out.worst_constraint =
                    std::max(out.worst_constraint, (pd.X.H * x - pd.X.h).maxCoeff());
            if (k == N) break;
            const Vec uk = params.K * x + traj.v0[k] + sol.v_star[k];
            out.worst_constraint =
                std::max(out.worst_constraint, (pd.U.H * uk - pd.U.h).maxCoeff());
            x = eval_dynamics(m, x, uk, theta) + mix(pd.W.vertices);
        }
    }
    return out;
}

} // namespace etmpc
