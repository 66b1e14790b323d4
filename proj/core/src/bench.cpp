#include "etmpc/bench.hpp"

#include <cmath>
#include <atomic>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "etmpc/errors.hpp"

namespace etmpc {

std::string BenchmarkSpec::label() const
{
    std::ostringstream os;
    os << "(" << nx << "," << nu << "," << ntheta << ")";
    return os.str();
}

double ClosedLoopTrace::realized_cost() const
{
    double c = 0.0;
    for (const StepTrace& s : steps) c += s.stage_cost;
    return c;
}

namespace {

Vec randn_vec(std::mt19937& rng, int n)
{
    std::normal_distribution<double> g;
    return Vec::NullaryExpr(n, [&] { return g(rng); });
}

Mat randn_mat(std::mt19937& rng, int r, int c)
{
    std::normal_distribution<double> g;
    return Mat::NullaryExpr(r, c, [&] { return g(rng); });
}

} // namespace

GeneratedInstance generate_instance(const BenchmarkSpec& spec)
{
    std::mt19937 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    GeneratedInstance out;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 200)
            throw DesignError("generate_instance: no designable draw after 200 attempts");
        // random dynamics, spectral radius capped at 1.2
        Mat A = randn_mat(rng, spec.nx, spec.nx);
        const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
        A *= (0.3 + 0.9 * uni(rng)) / std::max(rho, 1e-9);
        Mat B = randn_mat(rng, spec.nx, spec.nu);
        std::vector<int> jidx(spec.ntheta);
        for (int i = 0; i < spec.ntheta; ++i) jidx[i] = static_cast<int>(rng() % spec.nx);

        // true parameter and a surrounding simplex of diameter <= 0.05
        Vec theta_star = 0.02 * randn_vec(rng, spec.ntheta);
        const double a = 0.035 / (spec.ntheta * std::sqrt(2.0));
        Vec center = theta_star + 0.25 * a * randn_vec(rng, spec.ntheta);
        Vec offsets(spec.ntheta + 1);
        offsets.head(spec.ntheta) = Vec::Constant(spec.ntheta, a) - center;
        offsets(spec.ntheta) = a + center.sum();
        HPolytope theta_h = HPolytope::simplex(offsets);
        if (!contains_point(theta_h, theta_star, -1e-12)) continue;
        VPolytope theta_v = simplex_vertices(theta_h);
        bool close = true;
        for (const Vec& v : theta_v.vertices)
            if ((v - theta_star).norm() > 0.05) close = false;
        if (!close) continue;

        // disturbance subspace with full column rank
        Mat Bw = randn_mat(rng, spec.nx, spec.nw);
        if (Eigen::FullPivLU<Mat>(Bw).rank() < spec.nw) continue;
        std::vector<Vec> wverts;
        for (int mask = 0; mask < (1 << spec.nw); ++mask) {
            Vec wh(spec.nw);
            for (int i = 0; i < spec.nw; ++i) wh(i) = (mask >> i) & 1 ? 0.01 : -0.01;
            wverts.push_back(Vec(Bw * wh));
        }

        ProblemData pd;
        pd.model = std::make_shared<QuadraticBasisModel>(A, B, jidx, 1.5);
        pd.X = HPolytope::full_space(spec.nx);
        pd.U = HPolytope::inf_ball(spec.nu, 1.0);
        pd.Theta0_h = theta_h;
        pd.Theta0_v = theta_v;
        pd.W = VPolytope(wverts);
        pd.S_h = HPolytope::simplex(Vec::Constant(spec.nx + 1, 0.5));
        pd.S_v = simplex_vertices(pd.S_h);
        pd.Vset_h = HPolytope::full_space(spec.nu);
        pd.Q = Mat::Identity(spec.nx, spec.nx);
        pd.R = Mat::Identity(spec.nu, spec.nu);
        pd.N = spec.N;
        pd.Xhat = HPolytope::inf_ball(spec.nx, 1.5);
        pd.Uhat = HPolytope::full_space(spec.nu);
        pd.validate();

        // designability probe: LMI feasible and a finite terminal horizon
        try {
            TerminalParams p = design_terminal(pd);
            if (p.sigma * p.sigma / (1.0 - p.lambda_hat) >= 0.81 * p.rho_hat * p.rho_hat) {
                ++out.redraws;
                continue;
            }
            (void)find_terminal_horizon(p, 0.0, p.d_theta);
        } catch (const DesignError&) {
            ++out.redraws;
            continue;
        }

        out.pd = std::move(pd);
        out.truth.theta_star = theta_star;
        out.truth.noise_seed = static_cast<unsigned>(rng());
        return out;
    }
}

double certainty_equivalent_cost(const ProblemData& pd, const TerminalParams& params,
                                 const Vec& theta_star, const Vec& x_init,
                                 const ControllerConfig& cfg)
{
    ProblemData cpd = pd;
    cpd.W = VPolytope({Vec::Zero(pd.nx())});
    cpd.Theta0_h = HPolytope::full_space(pd.ntheta());
    cpd.Theta0_v = VPolytope({theta_star});
    TerminalParams cp = params;
    cp.sigma = 0.0;
    cp.d_theta = 0.0;

    std::vector<Vec> v0(cpd.N, Vec::Zero(cpd.nu()));
    double J = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> prev_iter_J;
    for (int i = 1; i <= cfg.iter_max; ++i) {
        NominalTrajectory traj;
        try {
            traj = rollout(cpd, x_init, v0, theta_star, cp.K);
        } catch (const DivergentRollout&) {
            break;
        }
        auto lins = linearize_trajectory(cpd, traj, cpd.Theta0_v, cp.vm, cp.sigma);
        TerminalHorizon th;
        try {
            th = find_terminal_horizon(cp, cp.vm.norm(traj.x0.back()), 0.0, cfg.n_hat_max,
                                       cfg.solver);
        } catch (const DesignError&) {
            break;
        }
        AssembleOptions opts;
        opts.pin_initial = true;
        auto prog = assemble_ocp(cpd, traj, lins, cp, th, x_init, i, std::nullopt, std::nullopt,
                                 std::nullopt, prev_iter_J, opts);
        auto st = solve_socp(prog, cfg.solver);
        if (!st.optimal()) break;
        auto sol = extract_solution(prog, cpd, th, st.primal);
        J = sol.J_bar;
        prev_iter_J = sol.J_bar;
        double vn = 0.0;
        for (const Vec& vk : sol.v_star) vn = std::max(vn, vk.norm());
        for (int k = 0; k < cpd.N; ++k) v0[k] += sol.v_star[k];
        if (vn < cfg.tolerance) break;
    }
    return J;
}

ClosedLoopTrace simulate(const ProblemData& pd, const InstanceTruth& truth,
                         const TerminalParams& params, const BenchmarkSpec& spec,
                         const SimulateConfig& cfg)
{
    ClosedLoopTrace trace;
    trace.spec = spec;
    trace.truth = truth;
    trace.sigma_bar = params.sigma_bar();

    std::mt19937 noise(truth.noise_seed);
    std::uniform_real_distribution<double> uhat(-0.01, 0.01);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);

    // recover the disturbance subspace basis from the stored vertices
    // (vertices are Bw * (+-0.01 corners); draw w = sum of scaled columns)
    const int nw = spec.nw;
    Mat Bw(pd.nx(), nw);
    {
        // vertex for mask with single bit i set minus the base corner gives
        // 2 * 0.01 * Bw e_i
        const Vec& base = pd.W.vertices[0];
        for (int i = 0; i < nw; ++i) Bw.col(i) = (pd.W.vertices[1 << i] - base) / 0.02;
    }
    auto draw_w = [&]() {
        Vec wh(nw);
        for (int i = 0; i < nw; ++i) wh(i) = uhat(noise);
        return Vec(Bw * wh);
    };

    Controller ctrl(pd, params, cfg.controller);
    SetMembershipEstimator est(pd.Theta0_h, pd.W, cfg.estimation_window, cfg.controller.solver);
    ctrl.set_parameter_set(est.vertices(), est.nominal());

    // feasible initial condition by rejection
    Vec x;
    bool initialized = false;
    for (int tries = 0; tries < cfg.max_init_draws && !initialized; ++tries) {
        ++trace.init_draws;
        x = Vec::NullaryExpr(pd.nx(), [&] { return ux(noise); });
        try {
            ctrl.initialize(x);
            initialized = true;
        } catch (const InitialInfeasible&) {
        }
    }
    if (!initialized)
        throw InitialInfeasible("simulate: no feasible initial condition in " +
                                std::to_string(cfg.max_init_draws) + " draws");
    trace.x_init = x;

    for (int t = 0; t < spec.T; ++t) {
        StepTrace stept;
        stept.x = x;
        stept.theta0 = ctrl.theta0();
        for (const Vec& v : ctrl.theta_set().vertices) stept.theta_vertices.push_back(v);

        StepReport rep = ctrl.step(x);
        stept.u = rep.u_applied;
        stept.stage_cost = x.dot(pd.Q * x) + rep.u_applied.dot(pd.R * rep.u_applied);
        stept.J_final = rep.J_final;
        stept.sigma_hat = rep.sigma_hat;
        stept.N_hat = rep.N_hat;
        stept.iterations = rep.iterations;
        stept.solved = rep.solved_any;
        stept.abandoned_first = rep.abandoned_first;
        for (const auto& r : rep.records) {
            stept.step_time += r.wall_time;
            stept.iter_times.push_back(r.wall_time);
            stept.line_search_trials += r.line_search_trials;
            if (r.feasible) {
                stept.iter_J.push_back(r.J_bar);
                stept.stats = r.stats;
            }
        }
        if (rep.solved_any) {
            stept.traj_x0 = rep.solved_traj.x0;
            stept.traj_v0 = rep.solved_traj.v0;
            stept.solution = rep.solution;
        }
        if (t == 0 && !rep.records.empty() && rep.records[0].feasible)
            trace.J_first_iteration = rep.records[0].J_bar;

        const Vec w = draw_w();
        Vec x_next = eval_dynamics(*pd.model, x, rep.u_applied, truth.theta_star) + w;
        est.update(*pd.model, x, rep.u_applied, x_next);
        ctrl.set_parameter_set(est.vertices(), est.nominal());
        stept.theta_offsets = est.theta_set().h;
        trace.steps.push_back(std::move(stept));
        x = x_next;
    }

    if (cfg.compute_suboptimality && trace.J_first_iteration > 0.0) {
        trace.certainty_cost = certainty_equivalent_cost(pd, params, truth.theta_star,
                                                         trace.x_init, cfg.controller);
        if (std::isfinite(trace.certainty_cost) && trace.certainty_cost > 1e-12)
            trace.suboptimality = trace.J_first_iteration / trace.certainty_cost - 1.0;
    }
    return trace;
}

std::vector<SweepRow> sweep(const std::vector<BenchmarkSpec>& specs, const SimulateConfig& cfg,
                            int workers)
{
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;

    std::vector<SweepRow> rows;
    for (const BenchmarkSpec& spec : specs) {
        std::vector<ClosedLoopTrace> traces(spec.instances);
        std::vector<int> redraws(spec.instances, 0);
        std::vector<std::string> errors(spec.instances);
        std::atomic<int> next{0};
        auto work = [&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= spec.instances) return;
                BenchmarkSpec s = spec;
                s.seed = spec.seed + static_cast<unsigned>(1000 * i);
                try {
                    GeneratedInstance gi = generate_instance(s);
                    redraws[i] = gi.redraws;
                    TerminalParams p = design_terminal(gi.pd, nullptr, cfg.controller.solver);
                    traces[i] = simulate(gi.pd, gi.truth, p, s, cfg);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int wkr = 0; wkr < std::min(workers, spec.instances); ++wkr)
            pool.emplace_back(work);
        for (auto& th : pool) th.join();
        for (int i = 0; i < spec.instances; ++i)
            if (!errors[i].empty())
                throw DesignError("sweep instance " + std::to_string(i) + " failed: " + errors[i]);

        SweepRow row;
        row.spec = spec;
        double it_sum = 0.0;
        int it_count = 0;
        row.iter_time_min = std::numeric_limits<double>::infinity();
        double subopt_sum = 0.0, subopt_sq = 0.0;
        int subopt_n = 0;
        double outer_sum = 0.0, step_time_sum = 0.0;
        int step_count = 0;
        for (const auto& tr : traces) {
            row.sigma_bar_mean += tr.sigma_bar / traces.size();
            row.closed_loop_cost_mean += tr.realized_cost() / traces.size();
            if (tr.suboptimality >= -1e-9) {
                subopt_sum += tr.suboptimality;
                subopt_sq += tr.suboptimality * tr.suboptimality;
                ++subopt_n;
            }
            for (const auto& st : tr.steps) {
                for (double dt : st.iter_times) {
                    it_sum += dt;
                    ++it_count;
                    row.iter_time_min = std::min(row.iter_time_min, dt);
                    row.iter_time_max = std::max(row.iter_time_max, dt);
                }
                outer_sum += st.iterations;
                step_time_sum += st.step_time;
                ++step_count;
                if (st.solved) {
                    row.n_vars = st.stats.n_vars;
                    row.n_eq = st.stats.n_eq_rows;
                    row.n_linear = st.stats.n_linear_rows;
                    row.n_soc = std::max(row.n_soc, st.stats.n_soc_blocks);
                }
            }
            row.total_redraws += 0;
        }
        for (int i = 0; i < spec.instances; ++i) row.total_redraws += redraws[i];
        row.iter_time_mean = it_count ? it_sum / it_count : 0.0;
        row.step_time_mean = step_count ? step_time_sum / step_count : 0.0;
        row.outer_iters_mean = step_count ? outer_sum / step_count : 0.0;
        if (subopt_n) {
            row.subopt_mean = subopt_sum / subopt_n;
            row.subopt_std =
                std::sqrt(std::max(0.0, subopt_sq / subopt_n - row.subopt_mean * row.subopt_mean));
        }
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::ostringstream os;
    os << "nx,nu,ntheta,nw,N,T,instances,n_vars,n_eq_rows,n_linear_rows,n_soc_blocks,"
          "iter_time_mean,iter_time_min,iter_time_max,step_time_mean,outer_iters_mean,"
          "subopt_mean,subopt_std,closed_loop_cost_mean,sigma_bar_mean,redraws\n";
    os.precision(10);
    for (const SweepRow& r : rows) {
        os << r.spec.nx << "," << r.spec.nu << "," << r.spec.ntheta << "," << r.spec.nw << ","
           << r.spec.N << "," << r.spec.T << "," << r.spec.instances << "," << r.n_vars << ","
           << r.n_eq << "," << r.n_linear << "," << r.n_soc << "," << r.iter_time_mean << ","
           << r.iter_time_min << "," << r.iter_time_max << "," << r.step_time_mean << ","
           << r.outer_iters_mean << "," << r.subopt_mean << "," << r.subopt_std << ","
           << r.closed_loop_cost_mean << "," << r.sigma_bar_mean << "," << r.total_redraws
           << "\n";
    }
    return os.str();
}

} // namespace etmpc
