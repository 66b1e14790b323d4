#include "etmpc/linearize.hpp"

#include <cmath>

#include "etmpc/errors.hpp"

namespace etmpc {

NominalTrajectory rollout(const ProblemData& pd, const Vec& x_init, const std::vector<Vec>& v0,
                          const Vec& theta0, const Mat& K)
{
    if (static_cast<int>(v0.size()) != pd.N)
        throw std::invalid_argument("rollout: perturbation sequence length != N");
    NominalTrajectory traj;
    traj.v0 = v0;
    traj.theta0 = theta0;
    traj.K = K;
    traj.x0.reserve(pd.N + 1);
    traj.x0.push_back(x_init);
    for (int k = 0; k < pd.N; ++k) {
        Vec next = eval_closed_loop(*pd.model, traj.x0.back(), v0[k], theta0, K);
        if (!next.allFinite())
            throw DivergentRollout("rollout: non-finite state at step " + std::to_string(k + 1));
        traj.x0.push_back(std::move(next));
    }
    return traj;
}

namespace {

bool same_pair(const CDPair& a, const CDPair& b)
{
    return a.C == b.C && a.D == b.D;
}

} // namespace

std::vector<StepLinearization> linearize_trajectory(const ProblemData& pd,
                                                    const NominalTrajectory& traj,
                                                    const VPolytope& theta_t, const VMetric& V,
                                                    double sigma)
{
    const BasisModel& m = *pd.model;
    const VPolytope* vset = pd.Vset_v ? &*pd.Vset_v : nullptr;
    std::vector<StepLinearization> out;
    out.reserve(pd.N);
    for (int k = 0; k < pd.N; ++k) {
        StepLinearization lin;
        auto [Phi, B] = closed_loop_jacobians(m, traj.x0[k], traj.v0[k], traj.theta0, traj.K);
        lin.Phi = std::move(Phi);
        lin.B = std::move(B);
        lin.delta0_vertices =
            param_disturbance_vertices(m, traj.x0[k], traj.v0[k], traj.theta0, theta_t, traj.K);
        auto pairs = m.jacobian_extreme_set(traj.x0[k], traj.v0[k], traj.theta0, pd.S_v, vset,
                                            theta_t, traj.K);
        // duplicate vertices contribute identical cones; drop exact matches
        for (CDPair& p : pairs) {
            bool dup = false;
            for (const CDPair& q : lin.cd_pairs)
                if (same_pair(p, q)) {
                    dup = true;
                    break;
                }
            if (!dup) lin.cd_pairs.push_back(std::move(p));
        }
        lin.lambda = compute_lambda(lin.Phi, lin.cd_pairs, V, pd.W.vertices, sigma);
        out.push_back(std::move(lin));
    }
    return out;
}

} // namespace etmpc
