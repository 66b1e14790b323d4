#pragma once

#include <vector>

#include "etmpc/model.hpp"
#include "etmpc/tube.hpp"

namespace etmpc {

/// Disturbance-free rollout of the closed loop under theta0 and the current
/// perturbation sequence.
struct NominalTrajectory {
    std::vector<Vec> x0;  // N+1 states
    std::vector<Vec> v0;  // N perturbations
    Vec theta0;
    Mat K;

    int horizon() const { return static_cast<int>(v0.size()); }
};

/// Per-step linearization record: Jacobians, zero/first-order error vertices
/// and the tube contraction factor.
struct StepLinearization {
    Mat Phi, B;
    std::vector<Vec> delta0_vertices;  // W^0_k generators
    std::vector<CDPair> cd_pairs;      // W^1_k generators (deduplicated)
    double lambda = 0.0;
};

/// Simulates x0[k+1] = f_K(x0[k], v0[k], theta0). State constraints are not
/// enforced here. Throws DivergentRollout on non-finite states.
NominalTrajectory rollout(const ProblemData& pd, const Vec& x_init, const std::vector<Vec>& v0,
                          const Vec& theta0, const Mat& K);

/// Linearization records for k = 0..N-1 using the current parameter set.
std::vector<StepLinearization> linearize_trajectory(const ProblemData& pd,
                                                    const NominalTrajectory& traj,
                                                    const VPolytope& theta_t, const VMetric& V,
                                                    double sigma);

} // namespace etmpc
