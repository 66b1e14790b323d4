#include "etmpc/problem_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "etmpc/errors.hpp"
#include "etmpc/ocp.hpp"

namespace etmpc {

namespace {

using nlohmann::json;

json to_json(const Vec& v)
{
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json to_json(const Mat& m)
{
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Vec vec_from(const json& a)
{
    Vec v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<int>(i)) = a[i].get<double>();
    return v;
}

Mat mat_from(const json& a)
{
    if (a.empty()) return Mat(0, 0);
    Mat m(a.size(), a[0].size());
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t c = 0; c < a[r].size(); ++c)
            m(static_cast<int>(r), static_cast<int>(c)) = a[r][c].get<double>();
    return m;
}

json poly_to_json(const HPolytope& hp)
{
    return json{{"H", to_json(hp.H)}, {"h", to_json(hp.h)}, {"dim", hp.dim()}};
}

HPolytope poly_from_json(const json& j)
{
    if (j.contains("H") && !j["H"].empty())
        return HPolytope(mat_from(j["H"]), vec_from(j["h"]));
    return HPolytope::full_space(j["dim"].get<int>());
}

json write_file(const std::string& path, const json& j)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    return j;
}

json read_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    json j;
    is >> j;
    return j;
}

json problem_to_json(const ProblemData& pd, const InstanceTruth* truth)
{
    const auto* qm = dynamic_cast<const QuadraticBasisModel*>(pd.model.get());
    if (!qm)
        throw std::invalid_argument(
            "save_problem: only quadratic-basis models have a file representation");
    json j;
    j["nx"] = pd.nx();
    j["nu"] = pd.nu();
    j["ntheta"] = pd.ntheta();
    j["N"] = pd.N;
    j["model"] = {{"type", "quadratic"},
                  {"A", to_json(qm->A())},
                  {"B", to_json(qm->B())},
                  {"basis_index", qm->basis_index()},
                  {"xhat_bound", qm->xhat_bound()}};
    j["X"] = poly_to_json(pd.X);
    j["U"] = poly_to_json(pd.U);
    j["theta_offsets"] = to_json(pd.Theta0_h.h);
    json wv = json::array();
    for (const Vec& w : pd.W.vertices) wv.push_back(to_json(w));
    j["w_vertices"] = wv;
    j["s_offsets"] = to_json(pd.S_h.h);
    j["vset"] = poly_to_json(pd.Vset_h);
    j["Q"] = to_json(pd.Q);
    j["R"] = to_json(pd.R);
    j["Xhat"] = poly_to_json(pd.Xhat);
    j["Uhat"] = poly_to_json(pd.Uhat);
    if (truth)
        j["truth"] = {{"theta_star", to_json(truth->theta_star)},
                      {"noise_seed", truth->noise_seed}};
    return j;
}

LoadedProblem problem_from_json(const json& j)
{
    LoadedProblem lp;
    if (j.contains("benchmark")) {
        const json& b = j["benchmark"];
        BenchmarkSpec spec;
        spec.nx = b.value("nx", 2);
        spec.nu = b.value("nu", 1);
        spec.ntheta = b.value("ntheta", 2);
        spec.nw = b.value("nw", 2);
        spec.N = b.value("N", 10);
        spec.T = b.value("T", 10);
        spec.seed = b.value("seed", 1u);
        GeneratedInstance gi = generate_instance(spec);
        lp.pd = std::move(gi.pd);
        lp.truth = gi.truth;
        lp.spec = spec;
        return lp;
    }
    ProblemData pd;
    const json& m = j.at("model");
    if (m.at("type") != "quadratic")
        throw std::invalid_argument("problem file: unsupported model type");
    pd.model = std::make_shared<QuadraticBasisModel>(
        mat_from(m.at("A")), mat_from(m.at("B")), m.at("basis_index").get<std::vector<int>>(),
        m.value("xhat_bound", 1.5));
    pd.X = poly_from_json(j.at("X"));
    pd.U = poly_from_json(j.at("U"));
    pd.Theta0_h = HPolytope::simplex(vec_from(j.at("theta_offsets")));
    pd.Theta0_v = simplex_vertices(pd.Theta0_h);
    std::vector<Vec> wv;
    for (const auto& w : j.at("w_vertices")) wv.push_back(vec_from(w));
    pd.W = VPolytope(wv);
    pd.S_h = HPolytope::simplex(vec_from(j.at("s_offsets")));
    pd.S_v = simplex_vertices(pd.S_h);
    pd.Vset_h = poly_from_json(j.at("vset"));
    if (!pd.Vset_h.is_full_space()) pd.Vset_v = simplex_vertices(pd.Vset_h);
    pd.Q = mat_from(j.at("Q"));
    pd.R = mat_from(j.at("R"));
    pd.N = j.at("N").get<int>();
    pd.Xhat = poly_from_json(j.at("Xhat"));
    pd.Uhat = poly_from_json(j.at("Uhat"));
    pd.validate();
    lp.pd = std::move(pd);
    if (j.contains("truth")) {
        InstanceTruth t;
        t.theta_star = vec_from(j["truth"]["theta_star"]);
        t.noise_seed = j["truth"]["noise_seed"].get<unsigned>();
        lp.truth = t;
    }
    return lp;
}

json params_to_json(const TerminalParams& p)
{
    json j;
    j["V"] = to_json(p.V);
    j["K"] = to_json(p.K);
    j["sigma"] = p.sigma;
    j["lambda_hat"] = p.lambda_hat;
    j["d_theta"] = p.d_theta;
    j["d_phi"] = p.d_phi;
    j["gamma"] = p.gamma;
    j["rho_hat"] = p.rho_hat;
    j["lipschitz_v"] = p.lipschitz_v;
    j["Hbar"] = to_json(p.Hbar);
    j["hbar"] = to_json(p.hbar);
    j["Qhat"] = to_json(p.Qhat);
    json pairs = json::array();
    for (const auto& [A, B] : p.ldi.pairs) pairs.push_back({{"A", to_json(A)}, {"B", to_json(B)}});
    j["ldi"] = {{"pairs", pairs},
                {"Xhat", poly_to_json(p.ldi.Xhat)},
                {"Uhat", poly_to_json(p.ldi.Uhat)}};
    return j;
}

TerminalParams params_from_json(const json& j)
{
    TerminalParams p;
    p.V = mat_from(j.at("V"));
    p.K = mat_from(j.at("K"));
    p.sigma = j.at("sigma").get<double>();
    p.lambda_hat = j.at("lambda_hat").get<double>();
    p.d_theta = j.at("d_theta").get<double>();
    p.d_phi = j.at("d_phi").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.rho_hat = j.at("rho_hat").get<double>();
    p.lipschitz_v = j.at("lipschitz_v").get<double>();
    p.Hbar = mat_from(j.at("Hbar"));
    p.hbar = vec_from(j.at("hbar"));
    for (const auto& pr : j.at("ldi").at("pairs"))
        p.ldi.pairs.push_back({mat_from(pr.at("A")), mat_from(pr.at("B"))});
    p.ldi.Xhat = poly_from_json(j.at("ldi").at("Xhat"));
    p.ldi.Uhat = poly_from_json(j.at("ldi").at("Uhat"));
    p.vm = VMetric(p.V);
    p.Qhat = mat_from(j.at("Qhat"));
    Mat W = p.vm.inv_sqrt() * p.Qhat * p.vm.inv_sqrt();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
    p.vinv_qhat_norm = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    return p;
}

json spec_to_json(const BenchmarkSpec& s)
{
    return json{{"nx", s.nx}, {"nu", s.nu},           {"ntheta", s.ntheta}, {"nw", s.nw},
                {"N", s.N},   {"T", s.T},             {"instances", s.instances},
                {"seed", s.seed}};
}

BenchmarkSpec spec_from_json(const json& j)
{
    BenchmarkSpec s;
    s.nx = j.value("nx", 2);
    s.nu = j.value("nu", 1);
    s.ntheta = j.value("ntheta", 2);
    s.nw = j.value("nw", 2);
    s.N = j.value("N", 10);
    s.T = j.value("T", 10);
    s.instances = j.value("instances", 20);
    s.seed = j.value("seed", 1u);
    return s;
}

} // namespace

LoadedProblem load_problem(const std::string& path)
{
    return problem_from_json(read_file(path));
}

void save_problem(const std::string& path, const ProblemData& pd, const InstanceTruth* truth)
{
    write_file(path, problem_to_json(pd, truth));
}

void save_params(const std::string& path, const TerminalParams& p)
{
    write_file(path, params_to_json(p));
}

TerminalParams load_params(const std::string& path)
{
    return params_from_json(read_file(path));
}

void save_trace(const std::string& path, const ClosedLoopTrace& trace, const ProblemData& pd,
                const TerminalParams& params)
{
    json j;
    j["spec"] = spec_to_json(trace.spec);
    j["problem"] = problem_to_json(pd, &trace.truth);
    j["params"] = params_to_json(params);
    j["sigma_bar"] = trace.sigma_bar;
    j["x_init"] = to_json(trace.x_init);
    j["init_draws"] = trace.init_draws;
    j["J_first_iteration"] = trace.J_first_iteration;
    j["certainty_cost"] = trace.certainty_cost;
    j["suboptimality"] = trace.suboptimality;
    json steps = json::array();
    for (const StepTrace& st : trace.steps) {
        json s;
        s["x"] = to_json(st.x);
        s["u"] = to_json(st.u);
        s["stage_cost"] = st.stage_cost;
        s["J_final"] = st.J_final;
        s["sigma_hat"] = st.sigma_hat;
        s["N_hat"] = st.N_hat;
        s["iterations"] = st.iterations;
        s["line_search_trials"] = st.line_search_trials;
        s["solved"] = st.solved;
        s["abandoned_first"] = st.abandoned_first;
        s["step_time"] = st.step_time;
        s["iter_times"] = st.iter_times;
        s["iter_J"] = st.iter_J;
        s["theta_offsets"] = to_json(st.theta_offsets);
        s["theta0"] = to_json(st.theta0);
        s["stats"] = {{"n_vars", st.stats.n_vars},
                      {"n_eq_rows", st.stats.n_eq_rows},
                      {"n_linear_rows", st.stats.n_linear_rows},
                      {"n_soc_blocks", st.stats.n_soc_blocks},
                      {"assembly_time", st.stats.assembly_time},
                      {"solve_time", st.stats.solve_time}};
        if (st.solved) {
            json tx = json::array(), tv = json::array(), tz = json::array(), vv = json::array(),
                 th = json::array();
            for (const Vec& x : st.traj_x0) tx.push_back(to_json(x));
            for (const Vec& v : st.traj_v0) tv.push_back(to_json(v));
            for (const Vec& z : st.solution.z_star) tz.push_back(to_json(z));
            for (const Vec& v : st.solution.v_star) vv.push_back(to_json(v));
            for (const Vec& t : st.theta_vertices) th.push_back(to_json(t));
            s["traj_x0"] = tx;
            s["traj_v0"] = tv;
            s["z_star"] = tz;
            s["v_star"] = vv;
            s["theta_vertices"] = th;
            s["beta_star"] = to_json(st.solution.beta_star);
            s["l_star"] = to_json(st.solution.l_star);
            s["J_bar"] = st.solution.J_bar;
            s["r_star"] = st.solution.r_star;
        }
        steps.push_back(std::move(s));
    }
    j["steps"] = std::move(steps);
    write_file(path, j);
}

LoadedTrace load_trace(const std::string& path)
{
    json j = read_file(path);
    LoadedTrace lt;
    LoadedProblem lp = problem_from_json(j.at("problem"));
    lt.pd = std::move(lp.pd);
    lt.params = params_from_json(j.at("params"));
    lt.trace.spec = spec_from_json(j.at("spec"));
    if (lp.truth) lt.trace.truth = *lp.truth;
    lt.trace.sigma_bar = j.value("sigma_bar", 0.0);
    lt.trace.x_init = vec_from(j.at("x_init"));
    lt.trace.init_draws = j.value("init_draws", 0);
    lt.trace.J_first_iteration = j.value("J_first_iteration", 0.0);
    lt.trace.certainty_cost = j.value("certainty_cost", -1.0);
    lt.trace.suboptimality = j.value("suboptimality", -1.0);
    for (const auto& s : j.at("steps")) {
        StepTrace st;
        st.x = vec_from(s.at("x"));
        st.u = vec_from(s.at("u"));
        st.stage_cost = s.value("stage_cost", 0.0);
        st.J_final = s.value("J_final", 0.0);
        st.sigma_hat = s.value("sigma_hat", 0.0);
        st.N_hat = s.value("N_hat", 0);
        st.iterations = s.value("iterations", 0);
        st.line_search_trials = s.value("line_search_trials", 0);
        st.solved = s.value("solved", false);
        st.abandoned_first = s.value("abandoned_first", false);
        st.step_time = s.value("step_time", 0.0);
        st.iter_times = s.value("iter_times", std::vector<double>{});
        st.iter_J = s.value("iter_J", std::vector<double>{});
        st.theta_offsets = vec_from(s.at("theta_offsets"));
        st.theta0 = vec_from(s.at("theta0"));
        if (s.contains("stats")) {
            st.stats.n_vars = s["stats"].value("n_vars", 0);
            st.stats.n_eq_rows = s["stats"].value("n_eq_rows", 0);
            st.stats.n_linear_rows = s["stats"].value("n_linear_rows", 0);
            st.stats.n_soc_blocks = s["stats"].value("n_soc_blocks", 0);
            st.stats.assembly_time = s["stats"].value("assembly_time", 0.0);
            st.stats.solve_time = s["stats"].value("solve_time", 0.0);
        }
        if (st.solved) {
            for (const auto& x : s.at("traj_x0")) st.traj_x0.push_back(vec_from(x));
            for (const auto& v : s.at("traj_v0")) st.traj_v0.push_back(vec_from(v));
            for (const auto& z : s.at("z_star")) st.solution.z_star.push_back(vec_from(z));
            for (const auto& v : s.at("v_star")) st.solution.v_star.push_back(vec_from(v));
            for (const auto& t : s.at("theta_vertices")) st.theta_vertices.push_back(vec_from(t));
            st.solution.beta_star = vec_from(s.at("beta_star"));
            st.solution.l_star = vec_from(s.at("l_star"));
            st.solution.J_bar = s.value("J_bar", 0.0);
            st.solution.r_star = s.value("r_star", 0.0);
        }
        lt.trace.steps.push_back(std::move(st));
    }
    return lt;
}

TraceVerification verify_trace(const ProblemData& pd, const TerminalParams& params,
                               const ClosedLoopTrace& trace, int tube_samples, unsigned seed)
{
    TraceVerification tv;
    tv.constraints_ok = true;
    tv.cost_chain_ok = true;
    tv.theta_ok = true;

    bool have_prev = false;
    double J_prev = 0.0, sh_prev = 0.0, stage_prev = 0.0;
    Vec offsets_prev;
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const StepTrace& st = trace.steps[t];
        if (!pd.X.is_full_space() && !contains_point(pd.X, st.x, 1e-7)) tv.constraints_ok = false;
        if (!contains_point(pd.U, st.u, 1e-7)) tv.constraints_ok = false;

        if (st.solved) {
            if (have_prev && st.J_final > J_prev - stage_prev + sh_prev * sh_prev + 1e-6)
                tv.cost_chain_ok = false;
            J_prev = st.J_final;
            sh_prev = st.sigma_hat;
            stage_prev = st.stage_cost;
            have_prev = true;
        } else {
            have_prev = false;
        }

        if (offsets_prev.size() &&
            ((st.theta_offsets - offsets_prev).array() > 1e-9).any())
            tv.theta_ok = false;
        offsets_prev = st.theta_offsets;
        HPolytope theta_now = pd.Theta0_h;
        theta_now.h = st.theta_offsets;
        if (trace.truth.theta_star.size() &&
            !contains_point(theta_now, trace.truth.theta_star, 1e-7))
            tv.theta_ok = false;

        if (!st.solved) continue;
        ++tv.steps_checked;

        NominalTrajectory traj;
        traj.x0 = st.traj_x0;
        traj.v0 = st.traj_v0;
        traj.theta0 = st.theta0;
        traj.K = params.K;
        VPolytope theta_set(st.theta_vertices);
        auto check = check_tube_containment(pd, traj, st.solution, params, theta_set, st.x,
                                            tube_samples, seed + static_cast<unsigned>(t));
        tv.tube_worst = std::max(tv.tube_worst, check.worst_tube);
        tv.constraints_ok = tv.constraints_ok && check.worst_constraint <= 1e-7;

        // row-by-row re-evaluation of the solved program at the stored point
        auto lins = linearize_trajectory(pd, traj, theta_set, params.vm, params.sigma);
        const double x0n = params.vm.norm(traj.x0.back());
        double d_theta = 0.0;
        for (const Vec& a : theta_set.vertices)
            for (const Vec& b : theta_set.vertices)
                d_theta = std::max(d_theta, (a - b).lpNorm<1>());
        TerminalHorizon th;
        th.N_hat = st.N_hat;
        th.sigma_hat = st.sigma_hat;
        th.x0N_norm = x0n;
        th.d_theta = d_theta;
        ConicProgram cp = assemble_ocp(pd, traj, lins, params, th, st.x, 1);
        Vec primal = Vec::Zero(cp.num_vars());
        const int N = pd.N;
        for (int k = 0; k < N; ++k)
            primal.segment(cp.var("v") + k * pd.nu(), pd.nu()) = st.solution.v_star[k];
        for (int k = 0; k <= N; ++k)
            primal.segment(cp.var("z") + k * pd.nx(), pd.nx()) = st.solution.z_star[k];
        primal.segment(cp.var("beta"), N + 1) = st.solution.beta_star.head(N + 1);
        if (th.N_hat > 0)
            primal.segment(cp.var("bext"), th.N_hat) = st.solution.beta_star.tail(th.N_hat);
        for (int k = 0; k < N; ++k) {
            // choose the auxiliary sqrt variable minimizing the worst violation
            // across its cone and the recursion rows (the solver's own value is
            // not recorded; any feasible choice certifies the stored solution)
            const double beta_k = st.solution.beta_star(k);
            const double lo = std::sqrt(lins[k].lambda * beta_k * beta_k +
                                        params.sigma * params.sigma);
            double hi = std::numeric_limits<double>::infinity();
            for (const CDPair& cd : lins[k].cd_pairs)
                for (const Vec& d0 : lins[k].delta0_vertices) {
                    const Vec arg = cd.C * st.solution.z_star[k] +
                                    cd.D * st.solution.v_star[k] + d0;
                    hi = std::min(hi, st.solution.beta_star(k + 1) - params.vm.norm(arg));
                }
            primal(cp.var("a") + k) = lo <= hi ? lo : 0.5 * (lo + hi);
        }
        primal.segment(cp.var("l"), N) = st.solution.l_star.head(N);
        primal.segment(cp.var("lt"), th.N_hat + 1) = st.solution.l_star.tail(th.N_hat + 1);
        primal(cp.var("r")) = st.solution.r_star;
        primal(cp.var("J")) = st.solution.J_bar;
        auto [viol, where] = cp.max_violation_desc(primal);
        if (viol > tv.rows_worst && std::getenv("ETMPC_VERIFY_DEBUG"))
            std::fprintf(stderr, "[verify] step %zu worst row %s = %.3e\n", t, where.c_str(),
                         viol);
        tv.rows_worst = std::max(tv.rows_worst, viol);
    }
    return tv;
}

} // namespace etmpc
