#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "etmpc/geometry.hpp"

namespace etmpc {

/// One vertex of the Jacobian-deviation hull: (s,v) |-> C s + D v covers the
/// first-order remainder directions.
struct CDPair {
    Mat C;
    Mat D;
};

/// Dynamics f(x,u,theta) = f_0(x,u) + sum_i theta_i f_i(x,u) with basis
/// evaluators, their Jacobians, and the bound oracles the tube construction
/// needs. Evaluators must be pure functions; instances are immutable and
/// shareable across threads.
class BasisModel {
public:
    BasisModel(int nx, int nu, int ntheta, double lipschitz_euclidean)
        : nx_(nx), nu_(nu), ntheta_(ntheta), lipschitz_(lipschitz_euclidean)
    {
    }
    virtual ~BasisModel() = default;

    int nx() const { return nx_; }
    int nu() const { return nu_; }
    int ntheta() const { return ntheta_; }
    /// Euclidean Lipschitz constant of x |-> f_{K,i}(x,0) on the terminal
    /// validity region (converted to the V-norm by the terminal design).
    double lipschitz() const { return lipschitz_; }

    /// Basis i in 0..ntheta (0 is the nominal part).
    virtual Vec basis(int i, const Vec& x, const Vec& u) const = 0;
    virtual Mat basis_dx(int i, const Vec& x, const Vec& u) const = 0;
    virtual Mat basis_du(int i, const Vec& x, const Vec& u) const = 0;

    /// Indices i with a constant basis f_i (estimated additive disturbance);
    /// f_i(0,0) = 0 is required for every other index.
    virtual std::vector<int> constant_basis_indices() const { return {}; }

    /// True when Jacobian extremes over S x Vset x Theta are attained at
    /// vertex combinations (polynomial bases of degree <= 2).
    virtual bool jacobian_extremes_vertex_attained() const { return false; }

    /// Componentwise Jacobian ranges of basis i over a box; the interval
    /// fallback of the extreme-set oracle requires it.
    virtual void jacobian_box_bounds(int i, const Vec& x_lo, const Vec& x_hi, const Vec& u_lo,
                                     const Vec& u_hi, Mat& dx_lo, Mat& dx_hi, Mat& du_lo,
                                     Mat& du_hi) const;

    /// Vertices {(C^j, D^j)} with
    ///   grad_x f_K(x0+s, v0+v, th) - Phi in co{C^j} and
    ///   grad_v f_K(x0+s, v0+v, th) - B   in co{D^j}
    /// for all (s,v,th) in S x Vset x Theta. vset == nullptr means the
    /// perturbation set on v is the full space (only valid when grad_v f is
    /// constant in v, which holds for models affine in u).
    virtual std::vector<CDPair> jacobian_extreme_set(const Vec& x0, const Vec& v0,
                                                     const Vec& theta0, const VPolytope& S,
                                                     const VPolytope* vset,
                                                     const VPolytope& Theta, const Mat& K) const;

    /// Linear difference inclusion vertices (A^j, B^j) covering
    /// [grad_x f, grad_u f] on Xhat x Uhat x Theta0.
    virtual std::vector<std::pair<Mat, Mat>> ldi_pairs(const HPolytope& Xhat,
                                                       const HPolytope& Uhat,
                                                       const VPolytope& Theta0) const;

private:
    int nx_, nu_, ntheta_;
    double lipschitz_;
};

/// f0 = A x + B u with ntheta identically-zero parametric bases (handy for
/// uncertainty-free reductions).
class LinearModel : public BasisModel {
public:
    LinearModel(Mat A, Mat B, int ntheta = 1);

    Vec basis(int i, const Vec& x, const Vec& u) const override;
    Mat basis_dx(int i, const Vec& x, const Vec& u) const override;
    Mat basis_du(int i, const Vec& x, const Vec& u) const override;
    bool jacobian_extremes_vertex_attained() const override { return true; }
    std::vector<CDPair> jacobian_extreme_set(const Vec&, const Vec&, const Vec&,
                                             const VPolytope&, const VPolytope*,
                                             const VPolytope&, const Mat&) const override;
    std::vector<std::pair<Mat, Mat>> ldi_pairs(const HPolytope&, const HPolytope&,
                                               const VPolytope&) const override;

    const Mat& A() const { return A_; }
    const Mat& B() const { return B_; }

private:
    Mat A_, B_;
};

/// The random-benchmark family: f0 = A x + B u, f_i = e_i [x]_{j_i}^2.
/// Jacobian deviations are bilinear in (s, theta), so extreme sets and the
/// LDI are computed exactly from vertex/interval products.
class QuadraticBasisModel : public BasisModel {
public:
    QuadraticBasisModel(Mat A, Mat B, std::vector<int> basis_index, double xhat_bound);

    Vec basis(int i, const Vec& x, const Vec& u) const override;
    Mat basis_dx(int i, const Vec& x, const Vec& u) const override;
    Mat basis_du(int i, const Vec& x, const Vec& u) const override;
    bool jacobian_extremes_vertex_attained() const override { return true; }
    std::vector<CDPair> jacobian_extreme_set(const Vec& x0, const Vec& v0, const Vec& theta0,
                                             const VPolytope& S, const VPolytope* vset,
                                             const VPolytope& Theta, const Mat& K) const override;
    std::vector<std::pair<Mat, Mat>> ldi_pairs(const HPolytope& Xhat, const HPolytope& Uhat,
                                               const VPolytope& Theta0) const override;

    const Mat& A() const { return A_; }
    const Mat& B() const { return B_; }
    const std::vector<int>& basis_index() const { return jidx_; }
    double xhat_bound() const { return xhat_bound_; }

private:
    int unit_row(int i) const { return (i - 1) % nx(); }

    Mat A_, B_;
    std::vector<int> jidx_;
    double xhat_bound_;
};

/// Problem instance: model, constraint/uncertainty sets, weights, horizon.
struct ProblemData {
    std::shared_ptr<const BasisModel> model;
    HPolytope X;        // state constraints (zero rows = unconstrained)
    HPolytope U;        // input constraints
    HPolytope Theta0_h; // initial parameter set, facet template form
    VPolytope Theta0_v;
    VPolytope W;        // disturbance vertices
    HPolytope S_h;      // state-perturbation set (bounded, 0 in interior)
    VPolytope S_v;
    HPolytope Vset_h;   // input-perturbation set (zero rows = full space)
    std::optional<VPolytope> Vset_v;
    Mat Q, R;
    int N = 0;
    HPolytope Xhat;     // LDI validity region (bounded box)
    HPolytope Uhat;     // zero rows = unconstrained

    int nx() const { return model->nx(); }
    int nu() const { return model->nu(); }
    int ntheta() const { return model->ntheta(); }

    /// Checks the structural invariants (dims, SPD weights, origin interior).
    void validate() const;
};

Vec eval_dynamics(const BasisModel& m, const Vec& x, const Vec& u, const Vec& theta);

/// f_K(x, v, theta) = f(x, Kx + v, theta)
Vec eval_closed_loop(const BasisModel& m, const Vec& x, const Vec& v, const Vec& theta,
                     const Mat& K);

/// (Phi, B) = (grad_x f + grad_u f K, grad_u f) at (x0, K x0 + v0, theta0).
std::pair<Mat, Mat> closed_loop_jacobians(const BasisModel& m, const Vec& x0, const Vec& v0,
                                          const Vec& theta0, const Mat& K);

/// Zero-order error vertices delta0^(q) = sum_i (theta^q_i - theta0_i) f_i(x0, u0).
std::vector<Vec> param_disturbance_vertices(const BasisModel& m, const Vec& x0, const Vec& v0,
                                            const Vec& theta0, const VPolytope& Theta,
                                            const Mat& K);

/// Structural checks: f_i(0,0) = 0 for non-constant bases and Jacobians
/// matching central finite differences at seeded sample points.
void check_basis_model(const BasisModel& m, int samples = 5, double tol = 1e-5);

} // namespace etmpc
