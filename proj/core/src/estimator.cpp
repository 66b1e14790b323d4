#include "etmpc/estimator.hpp"

#include "etmpc/errors.hpp"

namespace etmpc {

SetMembershipEstimator::SetMembershipEstimator(HPolytope theta0, VPolytope w_vertices, int window,
                                               SolverSettings settings)
    : theta_(std::move(theta0)),
      vertices_(simplex_vertices(theta_)),
      w_(std::move(w_vertices)),
      window_len_(window),
      settings_(std::move(settings))
{
    if (window_len_ < 1) throw std::invalid_argument("estimator window must be >= 1");
}

bool SetMembershipEstimator::update(const BasisModel& m, const Vec& x, const Vec& u,
                                    const Vec& x_next)
{
    window_.push_back({x, u, x_next});
    if (static_cast<int>(window_.size()) > window_len_) window_.pop_front();
    if (frozen_) return false;

    const int ntheta = m.ntheta();
    const int L = static_cast<int>(window_.size());
    const int nw = w_.count();
    const int nx = m.nx();

    // shared feasible set: theta in Theta_{t-1} and, for every windowed
    // transition, x_next - D theta - d in co{w^(r)}
    auto build = [&](const Vec& objective_row) {
        ConicProgram cp;
        const int th0 = cp.add_vars("theta", ntheta);
        const int mu0 = cp.add_vars("mu", L * nw);
        for (int i = 0; i < ntheta; ++i) cp.add_objective(th0 + i, -objective_row(i));  // maximize
        for (int r = 0; r < theta_.rows(); ++r) {
            LinExpr e(-theta_.h(r));
            for (int c = 0; c < ntheta; ++c) e.add(th0 + c, theta_.H(r, c));
            cp.add_inequality(e);
        }
        for (int l = 0; l < L; ++l) {
            const Transition& tr = window_[l];
            Mat D(nx, ntheta);
            for (int i = 1; i <= ntheta; ++i) D.col(i - 1) = m.basis(i, tr.x, tr.u);
            const Vec d = m.basis(0, tr.x, tr.u);
            for (int i = 0; i < nx; ++i) {
                LinExpr e(d(i) - tr.x_next(i));
                for (int c = 0; c < ntheta; ++c) e.add(th0 + c, D(i, c));
                for (int r = 0; r < nw; ++r) e.add(mu0 + l * nw + r, w_.vertices[r](i));
                cp.add_equality(e);
            }
            LinExpr sum(-1.0);
            for (int r = 0; r < nw; ++r) {
                sum.add(mu0 + l * nw + r, 1.0);
                LinExpr nonneg;
                nonneg.add(mu0 + l * nw + r, -1.0);
                cp.add_inequality(nonneg);
            }
            cp.add_equality(sum);
        }
        return cp;
    };

    Vec h_new = theta_.h;
    for (int r = 0; r < theta_.rows(); ++r) {
        auto cp = build(theta_.H.row(r));
        auto st = solve_lp(cp, settings_);
        if (st.result == SolveResult::Infeasible) {
            frozen_ = true;  // model misspecification: keep Theta_{t-1}
            return false;
        }
        if (!st.optimal()) return false;  // keep the previous set on solver trouble
        h_new(r) = std::min(h_new(r), -st.objective);
    }
    // LP accuracy can leave the tightened offsets infinitesimally inconsistent
    // when the set collapses toward a point; lift the sum facet to keep the
    // template nonempty (the true feasible set is contained either way)
    const int nt = ntheta;
    const double span = h_new(nt) + h_new.head(nt).sum();
    if (span < 0.0) h_new(nt) -= span;
    theta_.h = h_new;
    vertices_ = simplex_vertices(theta_);
    return true;
}

Vec SetMembershipEstimator::nominal() const
{
    Vec mean = Vec::Zero(vertices_.dim());
    for (const Vec& v : vertices_.vertices) mean += v;
    return mean / vertices_.count();
}

double SetMembershipEstimator::diameter() const
{
    double d = 0.0;
    for (const Vec& a : vertices_.vertices)
        for (const Vec& b : vertices_.vertices) d = std::max(d, (a - b).lpNorm<1>());
    return d;
}

} // namespace etmpc
