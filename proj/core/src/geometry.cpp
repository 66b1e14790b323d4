#include "etmpc/geometry.hpp"

#include <cmath>

#include "etmpc/conic.hpp"
#include "etmpc/errors.hpp"

namespace etmpc {

HPolytope::HPolytope(Mat H_, Vec h_) : H(std::move(H_)), h(std::move(h_))
{
    if (H.rows() != h.size())
        throw std::invalid_argument("HPolytope: facet matrix and offset row counts differ");
}

HPolytope HPolytope::full_space(int n)
{
    return HPolytope(Mat::Zero(0, n), Vec::Zero(0));
}

HPolytope HPolytope::inf_ball(int n, double radius)
{
    Mat H(2 * n, n);
    H << Mat::Identity(n, n), -Mat::Identity(n, n);
    return HPolytope(H, Vec::Constant(2 * n, radius));
}

HPolytope HPolytope::box(const Vec& lo, const Vec& hi)
{
    const int n = static_cast<int>(lo.size());
    Mat H(2 * n, n);
    H << Mat::Identity(n, n), -Mat::Identity(n, n);
    Vec h(2 * n);
    h << hi, -lo;
    return HPolytope(H, h);
}

HPolytope HPolytope::simplex(const Vec& offsets)
{
    const int n = static_cast<int>(offsets.size()) - 1;
    Mat H(n + 1, n);
    H.topRows(n) = -Mat::Identity(n, n);
    H.row(n).setOnes();
    return HPolytope(H, offsets);
}

VPolytope::VPolytope(std::vector<Vec> v) : vertices(std::move(v))
{
    if (vertices.empty()) throw std::invalid_argument("VPolytope: empty vertex list");
    for (const Vec& x : vertices)
        if (x.size() != vertices[0].size())
            throw std::invalid_argument("VPolytope: mixed vertex dimensions");
}

void VPolytope::bounding_box(Vec& lo, Vec& hi) const
{
    lo = vertices[0];
    hi = vertices[0];
    for (const Vec& v : vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
}

Ellipsoid::Ellipsoid(Mat V_, double beta2_) : V(std::move(V_)), beta2(beta2_)
{
    if (beta2 < 0.0) throw std::invalid_argument("Ellipsoid: negative squared radius");
    Eigen::LLT<Mat> llt(V);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("Ellipsoid: shape matrix is not positive definite");
}

VMetric::VMetric(const Mat& V) : V_(V)
{
    if (V.rows() != V.cols()) throw std::invalid_argument("VMetric: matrix not square");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (V + V.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw NotPositiveDefinite("VMetric: matrix is not positive definite");
    sqrt_ = es.operatorSqrt();
    inv_sqrt_ = es.operatorInverseSqrt();
}

double VMetric::norm(const Vec& x) const
{
    if (x.size() != V_.rows()) throw std::invalid_argument("VMetric::norm: dimension mismatch");
    return std::sqrt(std::max(0.0, x.dot(V_ * x)));
}

double VMetric::dual_row_norm(const Vec& H_row) const
{
    return (inv_sqrt_ * H_row).norm();
}

double VMetric::tighten(const Vec& H_row, double h_row, const Vec& z, double beta) const
{
    if (beta < 0.0) throw std::invalid_argument("VMetric::tighten: negative beta");
    return h_row - H_row.dot(z) - beta * dual_row_norm(H_row);
}

double v_norm(const Vec& x, const Mat& V)
{
    if (x.size() != V.rows() || V.rows() != V.cols())
        throw std::invalid_argument("v_norm: dimension mismatch");
    const double q = x.dot(V * x);
    if (q < 0.0) throw NotPositiveDefinite("v_norm: negative quadratic form");
    return std::sqrt(q);
}

double tighten_halfspace(const Vec& H_row, double h_row, const Vec& z, const Mat& V, double beta)
{
    return VMetric(V).tighten(H_row, h_row, z, beta);
}

namespace {

bool rows_match(const Mat& A, const Mat& B, double tol = 1e-9)
{
    return A.rows() == B.rows() && A.cols() == B.cols() &&
           (A - B).lpNorm<Eigen::Infinity>() <= tol;
}

} // namespace

VPolytope simplex_vertices(const HPolytope& hp)
{
    const int n = hp.dim();
    Mat simplex_H(n + 1, n);
    simplex_H.topRows(n) = -Mat::Identity(n, n);
    simplex_H.row(n).setOnes();

    if (hp.rows() == n + 1 && rows_match(hp.H, simplex_H)) {
        const Vec& h = hp.h;
        const double span = h(n) + h.head(n).sum();
        if (span < -1e-12) throw std::invalid_argument("simplex_vertices: empty simplex");
        std::vector<Vec> verts;
        verts.push_back(-h.head(n));  // all -theta_i facets active
        for (int i = 0; i < n; ++i) {
            Vec v = -h.head(n);
            v(i) = h(n) + h.head(n).sum() - h(i);
            verts.push_back(v);
        }
        return VPolytope(std::move(verts));
    }

    // box templates [I; -I] or [-I; I]
    if (hp.rows() == 2 * n) {
        Mat pos = hp.H.topRows(n), neg = hp.H.bottomRows(n);
        Vec hi, lo;
        bool ok = false;
        if (rows_match(pos, Mat::Identity(n, n)) && rows_match(neg, -Mat::Identity(n, n))) {
            hi = hp.h.head(n);
            lo = -hp.h.tail(n);
            ok = true;
        } else if (rows_match(pos, -Mat::Identity(n, n)) && rows_match(neg, Mat::Identity(n, n))) {
            lo = -hp.h.head(n);
            hi = hp.h.tail(n);
            ok = true;
        }
        if (ok) {
            if (((hi - lo).array() < -1e-12).any())
                throw std::invalid_argument("simplex_vertices: empty box");
            if (n > 20) throw std::invalid_argument("simplex_vertices: box dimension too large");
            std::vector<Vec> verts;
            for (int mask = 0; mask < (1 << n); ++mask) {
                Vec v(n);
                for (int i = 0; i < n; ++i) v(i) = (mask >> i) & 1 ? hi(i) : lo(i);
                verts.push_back(v);
            }
            return VPolytope(std::move(verts));
        }
    }
    throw std::invalid_argument("simplex_vertices: facet matrix is not a supported template");
}

bool contains_point(const HPolytope& hp, const Vec& x, double tol)
{
    if (hp.is_full_space()) return true;
    if (x.size() != hp.dim()) throw std::invalid_argument("contains_point: dimension mismatch");
    return ((hp.H * x - hp.h).array() <= tol).all();
}

bool is_nonempty(const HPolytope& hp, double tol)
{
    if (hp.is_full_space()) return true;
    // min t s.t. Hx <= h + t*1, t >= -1; nonempty iff t* <= tol
    ConicProgram cp;
    const int t = cp.add_vars("t", 1);
    const int x = cp.add_vars("x", hp.dim());
    cp.add_objective(t, 1.0);
    for (int r = 0; r < hp.rows(); ++r) {
        LinExpr e(-hp.h(r));
        e.add(t, -1.0);
        for (int j = 0; j < hp.dim(); ++j) e.add(x + j, hp.H(r, j));
        cp.add_inequality(e);
    }
    LinExpr lb(-1.0);
    lb.add(t, -1.0);
    cp.add_inequality(lb);  // t >= -1
    auto st = solve_lp(cp);
    return st.optimal() && st.objective <= tol;
}

bool in_convex_hull(const std::vector<Vec>& vertices, const Vec& x, double tol)
{
    if (vertices.empty()) return false;
    const int n = static_cast<int>(x.size());
    const int k = static_cast<int>(vertices.size());
    // min t s.t. |sum mu_i v_i - x|_inf <= t, sum mu = 1, mu >= 0
    ConicProgram cp;
    const int t = cp.add_vars("t", 1);
    const int mu = cp.add_vars("mu", k);
    cp.add_objective(t, 1.0);
    for (int i = 0; i < k; ++i) {
        LinExpr nonneg;
        nonneg.add(mu + i, -1.0);
        cp.add_inequality(nonneg);
    }
    LinExpr sum(-1.0);
    for (int i = 0; i < k; ++i) sum.add(mu + i, 1.0);
    cp.add_equality(sum);
    for (int j = 0; j < n; ++j) {
        LinExpr lo(-x(j)), hi(x(j));
        for (int i = 0; i < k; ++i) {
            lo.add(mu + i, vertices[i](j));
            hi.add(mu + i, -vertices[i](j));
        }
        lo.add(t, -1.0);
        cp.add_inequality(lo);  // sum mu v - x <= t
        hi.add(t, -1.0);
        cp.add_inequality(hi);  // x - sum mu v <= t
    }
    auto st = solve_lp(cp);
    return st.optimal() && st.objective <= tol;
}

} // namespace etmpc
