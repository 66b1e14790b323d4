#pragma once

#include <deque>

#include "etmpc/conic.hpp"
#include "etmpc/model.hpp"

namespace etmpc {

/// Set-membership estimator with a fixed facet template: Theta_t = {theta :
/// H_Theta theta <= h_t} where only h_t moves, shrinking monotonically as
/// transitions arrive. The template keeps the vertex count constant (n_theta+1
/// for the simplex form), and each facet offset is refreshed by one LP over
/// the data-consistency constraints of the last N_Theta transitions.
class SetMembershipEstimator {
public:
    struct Transition {
        Vec x, u, x_next;
    };

    SetMembershipEstimator(HPolytope theta0, VPolytope w_vertices, int window = 5,
                           SolverSettings settings = SolverSettings::from_env());

    /// Inserts a transition and refreshes the facet offsets. Returns false
    /// (and freezes at the previous set) when the data is inconsistent with
    /// the disturbance set and the current parameter polytope.
    bool update(const BasisModel& m, const Vec& x, const Vec& u, const Vec& x_next);

    const HPolytope& theta_set() const { return theta_; }
    const VPolytope& vertices() const { return vertices_; }
    /// Nominal parameter: the mean of the vertex list.
    Vec nominal() const;
    /// 1-norm diameter of the current vertex set.
    double diameter() const;
    bool frozen() const { return frozen_; }
    int window_size() const { return static_cast<int>(window_.size()); }

private:
    HPolytope theta_;
    VPolytope vertices_;
    VPolytope w_;
    int window_len_;
    SolverSettings settings_;
    std::deque<Transition> window_;
    bool frozen_ = false;
};

} // namespace etmpc
