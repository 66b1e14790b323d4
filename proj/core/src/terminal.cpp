#include "etmpc/terminal.hpp"

#include <cmath>

#include "etmpc/errors.hpp"

namespace etmpc {

double TerminalParams::lambda_pow(int k) const
{
    if (k == 0) return 1.0;
    return std::pow(lambda_hat, 0.5 * k);
}

LDIModel build_ldi(const BasisModel& m, const HPolytope& Xhat, const HPolytope& Uhat,
                   const VPolytope& Theta0)
{
    LDIModel ldi;
    ldi.Xhat = Xhat;
    ldi.Uhat = Uhat;
    ldi.pairs = m.ldi_pairs(Xhat, Uhat, Theta0);
    if (ldi.pairs.empty()) throw DesignError("build_ldi: empty vertex list");
    return ldi;
}

namespace {

// Assembles the robust cost-decrease LMI block for one (LDI vertex, w vertex)
// pair as a linear matrix function of (svec(S), Y, tau).
struct LmiAssembler {
    int n, m;   // state/input dims
    Mat Qinv, Rinv;

    int dim() const { return 3 * n + m + 1; }

    Mat block(const Mat& Aj, const Mat& Bj, const Vec& w, const Mat& S, const Mat& Y,
              double tau) const
    {
        const int T = dim();
        Mat M = Mat::Zero(T, T);
        const int i_s = 0, i_t = n, i_c = n + 1, i_q = 2 * n + 1, i_r = 3 * n + 1;
        Mat AS_BY = Aj * S + Bj * Y;
        M.block(i_s, i_s, n, n) = S;
        M(i_t, i_t) = tau;
        M.block(i_c, i_s, n, n) = AS_BY;
        M.block(i_s, i_c, n, n) = AS_BY.transpose();
        M.block(i_c, i_t, n, 1) = w;
        M.block(i_t, i_c, 1, n) = w.transpose();
        M.block(i_c, i_c, n, n) = S;
        M.block(i_q, i_s, n, n) = S;
        M.block(i_s, i_q, n, n) = S;
        M.block(i_q, i_q, n, n) = Qinv;
        M.block(i_r, i_s, m, n) = Y;
        M.block(i_s, i_r, n, m) = Y.transpose();
        M.block(i_r, i_r, m, m) = Rinv;
        return M;
    }
};

Mat sym_basis(int n, int a, int b)
{
    Mat E = Mat::Zero(n, n);
    E(a, b) = 1.0;
    E(b, a) = 1.0;
    return E;
}

} // namespace

namespace {
LmiSolution solve_terminal_lmi_impl(const LDIModel& ldi, const std::vector<Vec>& w_vertices,
                                    const Mat& Q, const Mat& R, const SolverSettings& settings,
                                    bool diagnose, double tau_cap = -1.0);
}

LmiSolution solve_terminal_lmi(const LDIModel& ldi, const std::vector<Vec>& w_vertices,
                               const Mat& Q, const Mat& R, const SolverSettings& settings)
{
    LmiSolution sol = solve_terminal_lmi_impl(ldi, w_vertices, Q, R, settings, true);

    // Retighten sigma for the returned (V, K): the exact worst case of the
    // pointwise certificate is max_{j,r} [w'Vw - b' M_j^{-1} b] with
    // M_j = Phi_j' V Phi_j - V + Qhat < 0 and b = Phi_j' V w. A small margin
    // above max ||w||_V keeps the Lemma-1 Psi matrices definite.
    const Mat Qhat = Q + sol.K.transpose() * R * sol.K;
    double tight = 0.0;
    double wvw_max = 0.0;
    bool can_tighten = true;
    const double scale = sol.V.norm() + Qhat.norm();
    for (const auto& [Aj, Bj] : ldi.pairs) {
        const Mat Phi = Aj + Bj * sol.K;
        Mat M = Phi.transpose() * sol.V * Phi - sol.V + Qhat;
        M = 0.5 * (M + M.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(M);
        if (es.eigenvalues().maxCoeff() > 1e-7 * scale) {
            can_tighten = false;  // certificate quadratic not concave: keep the SDP tau
            break;
        }
        for (const Vec& w : w_vertices) {
            const Vec b = Phi.transpose() * (sol.V * w);
            const Vec bc = es.eigenvectors().transpose() * b;
            // sup_x x'Mx + 2b'x + c is finite iff b lies in range(M);
            // eigenvalues within noise of zero count as null directions
            double val = w.dot(sol.V * w);
            for (int i = 0; i < bc.size(); ++i) {
                const double lam = es.eigenvalues()(i);
                if (lam < -1e-7 * scale) {
                    val -= bc(i) * bc(i) / lam;
                } else if (std::abs(bc(i)) > 1e-7 * (1.0 + b.norm())) {
                    can_tighten = false;
                    break;
                }
            }
            if (!can_tighten) break;
            tight = std::max(tight, val);
        }
        if (!can_tighten) break;
    }
    for (const Vec& w : w_vertices) wvw_max = std::max(wvw_max, w.dot(sol.V * w));
    if (can_tighten) {
        const double target = std::max(tight, 1.002 * wvw_max);
        if (target < sol.tau) {
            sol.tau = target;
            sol.sigma = std::sqrt(std::max(target, 0.0));
        }
    }
    return sol;
}

namespace {
// Two-pass solve: first minimize tau; then, within a 5% tau margin, maximize
// the smallest eigenvalue of S. tau-minimization alone leaves (S, Y) on a
// degenerate optimal face where V can blow up in directions that do not
// affect tau, which drives lambda_hat toward 1 and the terminal horizon
// toward infinity.
LmiSolution solve_terminal_lmi_impl(const LDIModel& ldi, const std::vector<Vec>& w_vertices,
                                    const Mat& Q, const Mat& R, const SolverSettings& settings,
                                    bool diagnose, double tau_cap)
{
    const int n = static_cast<int>(Q.rows());
    const int m = static_cast<int>(R.rows());
    LmiAssembler asem;
    asem.n = n;
    asem.m = m;
    asem.Qinv = Eigen::LLT<Mat>(Q).solve(Mat::Identity(n, n));
    asem.Rinv = Eigen::LLT<Mat>(R).solve(Mat::Identity(m, m));

    ConicProgram cp;
    const int ns = n * (n + 1) / 2;
    const int s0 = cp.add_vars("S", ns);
    const int y0 = cp.add_vars("Y", m * n);
    const int t0 = cp.add_vars("tau", 1);
    int eta0 = -1;
    if (tau_cap >= 0.0) {
        eta0 = cp.add_vars("eta", 1);
        cp.add_objective(eta0, -1.0);
        LinExpr cap(-tau_cap);
        cap.add(t0, 1.0);
        cp.add_inequality(cap);
    } else {
        cp.add_objective(t0, 1.0);
    }
    {
        LinExpr nonneg;
        nonneg.add(t0, -1.0);
        cp.add_inequality(nonneg);  // tau >= 0
    }

    auto s_mat = [&](int idx) {  // idx over lower-triangular (a >= b) pairs
        int k = 0;
        for (int b = 0; b < n; ++b)
            for (int a = b; a < n; ++a) {
                if (k == idx) return sym_basis(n, a, b);
                ++k;
            }
        throw std::logic_error("bad S index");
    };
    auto y_mat = [&](int idx) {
        Mat Y = Mat::Zero(m, n);
        Y(idx % m, idx / m) = 1.0;
        return Y;
    };

    const Mat Z_S = Mat::Zero(n, n);
    const Mat Z_Y = Mat::Zero(m, n);
    for (const auto& [Aj, Bj] : ldi.pairs) {
        // variable coefficient matrices are shared across disturbance vertices
        std::vector<std::pair<int, Mat>> terms;
        const Vec w0 = Vec::Zero(n);
        Mat base = asem.block(Aj, Bj, w0, Z_S, Z_Y, 0.0);
        for (int k = 0; k < ns; ++k)
            terms.push_back({s0 + k, Mat(asem.block(Aj, Bj, w0, s_mat(k), Z_Y, 0.0) - base)});
        for (int k = 0; k < m * n; ++k)
            terms.push_back({y0 + k, Mat(asem.block(Aj, Bj, w0, Z_S, y_mat(k), 0.0) - base)});
        terms.push_back({t0, Mat(asem.block(Aj, Bj, w0, Z_S, Z_Y, 1.0) - base)});
        for (const Vec& w : w_vertices) {
            Mat F0 = asem.block(Aj, Bj, w, Z_S, Z_Y, 0.0);
            cp.add_psd(F0, terms);
        }
    }
    // keep S invertible (phase 2 maximizes its smallest eigenvalue instead)
    {
        std::vector<std::pair<int, Mat>> terms;
        for (int k = 0; k < ns; ++k) terms.push_back({s0 + k, s_mat(k)});
        if (eta0 >= 0) terms.push_back({eta0, Mat(-Mat::Identity(n, n))});
        cp.add_psd(Mat(-1e-9 * Mat::Identity(n, n)), terms);
    }

    auto st = solve_sdp(cp, settings);
    if (st.result == SolveResult::Infeasible) {
        if (diagnose) {
            // identify a single infeasible vertex pair when one exists
            for (std::size_t j = 0; j < ldi.pairs.size(); ++j) {
                LDIModel single;
                single.Xhat = ldi.Xhat;
                single.Uhat = ldi.Uhat;
                single.pairs = {ldi.pairs[j]};
                try {
                    (void)solve_terminal_lmi_impl(single, w_vertices, Q, R, settings, false);
                } catch (const DesignError&) {
                    throw DesignError("terminal LMI infeasible (LDI vertex " + std::to_string(j) +
                                      " alone admits no robustly stabilizing gain)");
                }
            }
        }
        throw DesignError("terminal LMI infeasible (no robustly stabilizing gain on the region)");
    }
    if (!st.optimal())
        throw DesignError(std::string("terminal LMI solve failed: ") + to_string(st.result));

    Mat S = Mat::Zero(n, n);
    int k = 0;
    for (int b = 0; b < n; ++b)
        for (int a = b; a < n; ++a) {
            S(a, b) = st.primal(s0 + k);
            S(b, a) = st.primal(s0 + k);
            ++k;
        }
    Mat Y = Mat::Zero(m, n);
    for (int idx = 0; idx < m * n; ++idx) Y(idx % m, idx / m) = st.primal(y0 + idx);

    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success)
        throw DesignError("terminal LMI returned a non-definite S");
    LmiSolution sol;
    sol.V = llt.solve(Mat::Identity(n, n));
    sol.V = 0.5 * (sol.V + sol.V.transpose());
    sol.K = Y * sol.V;
    sol.tau = std::max(st.primal(t0), 0.0);
    sol.sigma = std::sqrt(sol.tau);
    if (tau_cap < 0.0) {
        try {
            return solve_terminal_lmi_impl(ldi, w_vertices, Q, R, settings, false,
                                           1.02 * sol.tau + 1e-12);
        } catch (const DesignError&) {
            return sol;  // fall back to the tau-optimal point
        }
    }
    return sol;
}
} // namespace

TerminalScalars terminal_scalars(const Mat& V, const Mat& K, const Mat& Q, const Mat& R,
                                 const VPolytope& Theta0, const LDIModel& ldi, const Mat& Hbar,
                                 const Vec& hbar)
{
    TerminalScalars out{};
    VMetric vm(V);
    Mat Qhat = Q + K.transpose() * R * K;

    Mat W = vm.inv_sqrt() * Qhat * vm.inv_sqrt();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
    const double smin = es.eigenvalues().minCoeff();
    out.lambda_hat = 1.0 - smin;
    if (out.lambda_hat >= 1.0)
        throw DesignError("terminal_scalars: lambda_hat >= 1 (V is not >= Qhat)");
    if (out.lambda_hat < 0.0) out.lambda_hat = 0.0;

    out.d_theta = 0.0;
    for (const Vec& a : Theta0.vertices)
        for (const Vec& b : Theta0.vertices)
            out.d_theta = std::max(out.d_theta, (a - b).lpNorm<1>());

    out.d_phi = 0.0;
    for (std::size_t i = 0; i < ldi.pairs.size(); ++i)
        for (std::size_t j = i + 1; j < ldi.pairs.size(); ++j) {
            Mat Di = ldi.pairs[i].first + ldi.pairs[i].second * K;
            Mat Dj = ldi.pairs[j].first + ldi.pairs[j].second * K;
            Mat M = vm.sqrt() * (Di - Dj) * vm.inv_sqrt();
            out.d_phi = std::max(out.d_phi, M.operatorNorm());
        }

    out.gamma = std::sqrt(1.0 / (1.0 - std::sqrt(out.lambda_hat)));

    out.rho_hat = std::numeric_limits<double>::infinity();
    for (int r = 0; r < Hbar.rows(); ++r)
        out.rho_hat = std::min(out.rho_hat, hbar(r) / vm.dual_row_norm(Hbar.row(r)));
    if (!std::isfinite(out.rho_hat) || out.rho_hat <= 0.0)
        throw DesignError("terminal_scalars: aggregate constraint set yields rho_hat <= 0");
    return out;
}

TerminalParams design_terminal(const ProblemData& pd, const VPolytope* theta_set,
                               const SolverSettings& settings)
{
    const VPolytope& theta = theta_set ? *theta_set : pd.Theta0_v;
    TerminalParams p;
    p.ldi = build_ldi(*pd.model, pd.Xhat, pd.Uhat, theta);

    // constant-basis vertices shift the disturbance set inside the LMI
    std::vector<Vec> wv;
    const auto cset = pd.model->constant_basis_indices();
    if (cset.empty()) {
        wv = pd.W.vertices;
    } else {
        const Vec zx = Vec::Zero(pd.nx()), zu = Vec::Zero(pd.nu());
        for (const Vec& w : pd.W.vertices)
            for (const Vec& th : theta.vertices) {
                Vec wc = Vec::Zero(pd.nx());
                for (int i : cset) wc += th(i - 1) * pd.model->basis(i, zx, zu);
                wv.push_back(w + wc);
            }
    }

    LmiSolution sol = solve_terminal_lmi(p.ldi, wv, pd.Q, pd.R, settings);
    p.V = sol.V;
    p.K = sol.K;
    p.sigma = sol.sigma;

    // aggregate constraint set X cap Xhat cap {x : Kx in U cap Uhat}
    const int n = pd.nx();
    int rows = pd.X.rows() + pd.Xhat.rows() + pd.U.rows() + pd.Uhat.rows();
    p.Hbar = Mat::Zero(rows, n);
    p.hbar = Vec::Zero(rows);
    int at = 0;
    auto append = [&](const Mat& H, const Vec& h) {
        p.Hbar.block(at, 0, H.rows(), n) = H;
        p.hbar.segment(at, h.size()) = h;
        at += static_cast<int>(H.rows());
    };
    append(pd.X.H, pd.X.h);
    append(pd.Xhat.H, pd.Xhat.h);
    append(Mat(pd.U.H * p.K), pd.U.h);
    append(Mat(pd.Uhat.H * p.K), pd.Uhat.h);

    TerminalScalars sc = terminal_scalars(p.V, p.K, pd.Q, pd.R, theta, p.ldi, p.Hbar, p.hbar);
    p.lambda_hat = sc.lambda_hat;
    p.d_theta = sc.d_theta;
    p.d_phi = sc.d_phi;
    p.gamma = sc.gamma;
    p.rho_hat = sc.rho_hat;

    p.vm = VMetric(p.V);
    p.Qhat = pd.Q + p.K.transpose() * pd.R * p.K;
    Mat W = p.vm.inv_sqrt() * p.Qhat * p.vm.inv_sqrt();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
    p.vinv_qhat_norm = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));

    // Euclidean Lipschitz constant converted to the V-norm via cond(V^{1/2})
    Eigen::SelfAdjointEigenSolver<Mat> ev(p.V, Eigen::EigenvaluesOnly);
    const double cond_sqrt =
        std::sqrt(ev.eigenvalues().maxCoeff() / ev.eigenvalues().minCoeff());
    p.lipschitz_v = pd.model->lipschitz() * cond_sqrt;
    return p;
}

namespace {

// Max of the re-entry expression over the terminal set at horizon N_hat;
// returns true when the check holds (vacuously for empty Omega).
bool horizon_check(const TerminalParams& p, double x0N_norm, double d_theta, int N_hat,
                   const SolverSettings& settings)
{
    const double lam = p.lambda_hat;
    const double sig = p.sigma;
    const double dtl = d_theta * p.lipschitz_v * x0N_norm;

    ConicProgram cp;
    const int r0 = cp.add_vars("r", 1);
    const int b0 = cp.add_vars("beta", N_hat + 1);
    {
        LinExpr e;
        e.add(r0, -1.0);
        cp.add_inequality(e);  // r >= 0
        LinExpr e2;
        e2.add(b0, -1.0);
        cp.add_inequality(e2);  // beta_N >= 0
    }
    for (int k = 0; k <= N_hat; ++k) {
        LinExpr cap(std::pow(lam, 0.5 * k) * x0N_norm - p.rho_hat);
        cap.add(b0 + k, 1.0);
        cap.add(r0, std::pow(lam, 0.5 * k));
        cp.add_inequality(cap);
    }
    for (int k = 1; k <= N_hat; ++k) {
        LinExpr head(-std::pow(lam, 0.5 * (k - 1)) * dtl);
        head.add(b0 + k, 1.0);
        head.add(r0, -std::pow(lam, 0.5 * (k - 1)) * p.d_phi);
        LinExpr t1;
        t1.add(b0 + k - 1, std::sqrt(lam));
        cp.add_soc({head, t1, LinExpr(sig)});
    }
    // maximize lam^{1/2} b_{N_hat} + lam^{N_hat/2}(r d_phi + dtl) + lam^{(N_hat+1)/2}(r + x0N)
    cp.add_objective(b0 + N_hat, -std::sqrt(lam));
    cp.add_objective(r0, -(std::pow(lam, 0.5 * N_hat) * p.d_phi +
                           std::pow(lam, 0.5 * (N_hat + 1))));
    auto st = solve_socp(cp, settings);
    if (st.result == SolveResult::Infeasible) return true;  // empty terminal set
    if (!st.optimal())
        throw DesignError(std::string("terminal horizon check failed: ") + to_string(st.result));
    const double value = -st.objective + sig + std::pow(lam, 0.5 * N_hat) * dtl +
                         std::pow(lam, 0.5 * (N_hat + 1)) * x0N_norm;
    return value <= p.rho_hat + 1e-9;
}

} // namespace

TerminalHorizon find_terminal_horizon(const TerminalParams& p, double x0N_norm, double d_theta,
                                      int n_hat_max, const SolverSettings& settings)
{
    if (p.sigma * p.sigma / (1.0 - p.lambda_hat) >= p.rho_hat * p.rho_hat)
        throw DesignError("find_terminal_horizon: sigma^2/(1-lambda) >= rho^2, no finite horizon");

    int hi = 1;
    int lo = 0;  // largest failing horizon seen
    while (!horizon_check(p, x0N_norm, d_theta, hi, settings)) {
        lo = hi;
        hi *= 2;
        if (hi > n_hat_max)
            throw DesignError("find_terminal_horizon: N_hat exceeds " + std::to_string(n_hat_max));
    }
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (mid == 0) break;
        if (horizon_check(p, x0N_norm, d_theta, mid, settings))
            hi = mid;
        else
            lo = mid;
    }

    TerminalHorizon th;
    th.N_hat = hi;
    th.x0N_norm = x0N_norm;
    th.d_theta = d_theta;
    th.sigma_hat = p.gamma * p.sigma +
                   p.gamma * std::pow(p.lambda_hat, 0.5 * hi) *
                       (p.d_phi * p.rho_hat + d_theta * p.lipschitz_v * x0N_norm);
    return th;
}

OmegaBlocks build_omega_blocks(const TerminalParams& p, const TerminalHorizon& th)
{
    OmegaBlocks ob;
    ob.N_hat = th.N_hat;
    ob.lambda_hat = p.lambda_hat;
    ob.sigma = p.sigma;
    const double dtl = th.d_theta * p.lipschitz_v * th.x0N_norm;
    for (int k = 1; k <= th.N_hat; ++k) {
        ob.rec_r_coef.push_back(p.lambda_pow(k - 1) * p.d_phi);
        ob.rec_const.push_back(p.lambda_pow(k - 1) * dtl);
    }
    for (int k = 0; k <= th.N_hat; ++k) {
        ob.cap_r_coef.push_back(p.lambda_pow(k));
        ob.cap_rhs.push_back(p.rho_hat - p.lambda_pow(k) * th.x0N_norm);
    }
    return ob;
}

TerminalCostBlocks terminal_cost_blocks(const TerminalParams& p, const TerminalHorizon& th)
{
    TerminalCostBlocks tc;
    for (int k = 0; k <= th.N_hat; ++k) {
        const double scale = k == th.N_hat ? p.gamma : 1.0;
        tc.r_coef.push_back(scale * p.lambda_pow(k));
        tc.beta_coef.push_back(scale);
        tc.consts.push_back(scale * p.lambda_pow(k) * th.x0N_norm);
    }
    return tc;
}

} // namespace etmpc
