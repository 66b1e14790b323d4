#pragma once

#include <utility>
#include <vector>

#include "etmpc/conic.hpp"
#include "etmpc/model.hpp"

namespace etmpc {

/// Linear difference inclusion co{(A^j, B^j)} covering the Jacobians of the
/// dynamics on Xhat x Uhat x Theta0.
struct LDIModel {
    std::vector<std::pair<Mat, Mat>> pairs;
    HPolytope Xhat, Uhat;
};

struct LmiSolution {
    Mat V;
    Mat K;
    double sigma = 0.0;
    double tau = 0.0;
};

/// Offline terminal design record; immutable once computed.
struct TerminalParams {
    Mat V;
    Mat K;
    double sigma = 0.0;
    double lambda_hat = 0.0;  // in [0, 1)
    double d_theta = 0.0;     // 1-norm diameter of the parameter set
    double d_phi = 0.0;       // V-induced diameter of the closed-loop LDI vertices
    double gamma = 1.0;       // gamma^2 = 1/(1 - lambda_hat^{1/2})
    double rho_hat = 0.0;
    double lipschitz_v = 0.0; // model Lipschitz constant converted to the V-norm
    Mat Hbar;
    Vec hbar;
    LDIModel ldi;

    VMetric vm;
    Mat Qhat;                 // Q + K'RK
    double vinv_qhat_norm = 0.0;  // ||V^{-1/2}||_{Qhat}

    double lambda_pow(int k) const;  // lambda_hat^{k/2}
    /// sigma-bar of the average-performance theorem.
    double sigma_bar() const
    {
        return gamma * sigma + gamma * rho_hat * (d_phi + d_theta * lipschitz_v);
    }
};

/// Per-trajectory terminal data; depends on ||x0_N||_V and the current
/// parameter-set diameter, so it is refreshed at every outer iteration.
struct TerminalHorizon {
    int N_hat = 1;
    double sigma_hat = 0.0;
    double x0N_norm = 0.0;
    double d_theta = 0.0;
};

/// Coefficient tables for the terminal constraint set: with variables r and
/// b_k = beta_{N+k},
///   recursion rows (k = 1..N_hat):
///       b_k >= sqrt(lam*b_{k-1}^2 + sigma^2) + rec_r_coef[k-1]*r + rec_const[k-1]
///   cap rows (k = 0..N_hat):
///       b_k + cap_r_coef[k]*r <= cap_rhs[k]
struct OmegaBlocks {
    int N_hat = 0;
    double lambda_hat = 0.0;
    double sigma = 0.0;
    std::vector<double> rec_r_coef;
    std::vector<double> rec_const;
    std::vector<double> cap_r_coef;
    std::vector<double> cap_rhs;
};

/// Terminal cost rows l_{N+k} = r_coef[k]*r + beta_coef[k]*b_k + consts[k],
/// k = 0..N_hat; their squares stack into the objective epigraph.
struct TerminalCostBlocks {
    std::vector<double> r_coef;
    std::vector<double> beta_coef;
    std::vector<double> consts;
};

LDIModel build_ldi(const BasisModel& m, const HPolytope& Xhat, const HPolytope& Uhat,
                   const VPolytope& Theta0);

/// Minimizes tau subject to the robust cost-decrease LMI over every
/// (LDI vertex, disturbance vertex) pair; V = S^{-1}, K = Y V, sigma = tau^{1/2}.
/// Constant-basis shifts w_c^{(q)} must already be folded into w_vertices.
LmiSolution solve_terminal_lmi(const LDIModel& ldi, const std::vector<Vec>& w_vertices,
                               const Mat& Q, const Mat& R,
                               const SolverSettings& settings = SolverSettings::from_env());

struct TerminalScalars {
    double lambda_hat, d_theta, d_phi, gamma, rho_hat;
};
TerminalScalars terminal_scalars(const Mat& V, const Mat& K, const Mat& Q, const Mat& R,
                                 const VPolytope& Theta0, const LDIModel& ldi, const Mat& Hbar,
                                 const Vec& hbar);

/// Full offline design for a problem instance. When theta_set is non-null the
/// LDI/LMI are built from it instead of Theta0 (the optional online refresh).
TerminalParams design_terminal(const ProblemData& pd, const VPolytope* theta_set = nullptr,
                               const SolverSettings& settings = SolverSettings::from_env());

/// Smallest N_hat (doubling then bisection, up to n_hat_max) for which the
/// terminal-set re-entry check holds, plus the matching sigma_hat.
TerminalHorizon find_terminal_horizon(const TerminalParams& p, double x0N_norm, double d_theta,
                                      int n_hat_max = 64,
                                      const SolverSettings& settings = SolverSettings::from_env());

OmegaBlocks build_omega_blocks(const TerminalParams& p, const TerminalHorizon& th);

TerminalCostBlocks terminal_cost_blocks(const TerminalParams& p, const TerminalHorizon& th);

} // namespace etmpc
