#include "etmpc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "etmpc/errors.hpp"

namespace etmpc {

namespace {

struct Interval {
    double lo = 0.0, hi = 0.0;
    Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
    static Interval mul(const Interval& a, const Interval& b)
    {
        const double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
        return {std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})};
    }
    double width() const { return hi - lo; }
};

void box_of_vertices(const VPolytope& vp, Vec& lo, Vec& hi)
{
    vp.bounding_box(lo, hi);
}

} // namespace

void BasisModel::jacobian_box_bounds(int, const Vec&, const Vec&, const Vec&, const Vec&, Mat&,
                                     Mat&, Mat&, Mat&) const
{
    throw ModelError("model does not provide interval Jacobian bounds");
}

std::vector<CDPair> BasisModel::jacobian_extreme_set(const Vec& x0, const Vec& v0,
                                                     const Vec& theta0, const VPolytope& S,
                                                     const VPolytope* vset, const VPolytope& Theta,
                                                     const Mat& K) const
{
    auto [Phi, B] = closed_loop_jacobians(*this, x0, v0, theta0, K);

    if (jacobian_extremes_vertex_attained()) {
        std::vector<Vec> vset_pts;
        if (vset)
            vset_pts = vset->vertices;
        else
            vset_pts = {Vec::Zero(nu())};
        std::vector<CDPair> out;
        for (const Vec& s : S.vertices)
            for (const Vec& vv : vset_pts)
                for (const Vec& th : Theta.vertices) {
                    const Vec xs = x0 + s;
                    const Vec us = K * xs + v0 + vv;
                    Mat dx = basis_dx(0, xs, us);
                    Mat du = basis_du(0, xs, us);
                    for (int i = 1; i <= ntheta(); ++i) {
                        dx += th(i - 1) * basis_dx(i, xs, us);
                        du += th(i - 1) * basis_du(i, xs, us);
                    }
                    out.push_back({dx + du * K - Phi, du - B});
                }
        return out;
    }

    // interval fallback over box hulls of S, Vset and Theta
    Vec slo, shi;
    box_of_vertices(S, slo, shi);
    Vec xlo = x0 + slo, xhi = x0 + shi;
    Vec vlo = Vec::Zero(nu()), vhi = Vec::Zero(nu());
    if (vset) box_of_vertices(*vset, vlo, vhi);
    // u = K(x0+s) + v0 + v over the boxes
    Vec ulo = v0 + vlo, uhi = v0 + vhi;
    for (int r = 0; r < nu(); ++r)
        for (int c = 0; c < nx(); ++c) {
            const double k = K(r, c);
            ulo(r) += std::min(k * xlo(c), k * xhi(c));
            uhi(r) += std::max(k * xlo(c), k * xhi(c));
        }
    Vec tlo, thi;
    box_of_vertices(Theta, tlo, thi);

    std::vector<Mat> dxlo(ntheta() + 1), dxhi(ntheta() + 1), dulo(ntheta() + 1),
        duhi(ntheta() + 1);
    for (int i = 0; i <= ntheta(); ++i)
        jacobian_box_bounds(i, xlo, xhi, ulo, uhi, dxlo[i], dxhi[i], dulo[i], duhi[i]);

    auto closed_loop_interval = [&](int r, int c) {
        // entry (r,c) of grad_x f + grad_u f K over the boxes
        Interval acc{dxlo[0](r, c), dxhi[0](r, c)};
        for (int j = 0; j < nu(); ++j) {
            const double k = K(j, c);
            acc = acc + Interval::mul({dulo[0](r, j), duhi[0](r, j)}, {k, k});
        }
        for (int i = 1; i <= ntheta(); ++i) {
            Interval base{dxlo[i](r, c), dxhi[i](r, c)};
            for (int j = 0; j < nu(); ++j) {
                const double k = K(j, c);
                base = base + Interval::mul({dulo[i](r, j), duhi[i](r, j)}, {k, k});
            }
            acc = acc + Interval::mul(base, {tlo(i - 1), thi(i - 1)});
        }
        return acc;
    };
    auto input_interval = [&](int r, int c) {
        Interval acc{dulo[0](r, c), duhi[0](r, c)};
        for (int i = 1; i <= ntheta(); ++i)
            acc = acc + Interval::mul({dulo[i](r, c), duhi[i](r, c)}, {tlo(i - 1), thi(i - 1)});
        return acc;
    };

    // collect entries with nonzero width, then enumerate sign corners
    struct VaryEntry {
        bool input;  // false: C entry, true: D entry
        int r, c;
        double lo, hi;
    };
    std::vector<VaryEntry> vary;
    Mat C0 = -Phi, D0 = -B;
    for (int r = 0; r < nx(); ++r) {
        for (int c = 0; c < nx(); ++c) {
            Interval iv = closed_loop_interval(r, c);
            if (iv.width() > 1e-14)
                vary.push_back({false, r, c, iv.lo, iv.hi});
            else
                C0(r, c) += iv.lo;
        }
        for (int c = 0; c < nu(); ++c) {
            Interval iv = input_interval(r, c);
            if (iv.width() > 1e-14)
                vary.push_back({true, r, c, iv.lo, iv.hi});
            else
                D0(r, c) += iv.lo;
        }
    }
    if (vary.size() > 16)
        throw ModelError("interval Jacobian bound needs " + std::to_string(1u << vary.size()) +
                         " vertices; region too rich for the fallback oracle");
    std::vector<CDPair> out;
    for (std::size_t mask = 0; mask < (1ull << vary.size()); ++mask) {
        Mat C = C0, D = D0;
        for (std::size_t i = 0; i < vary.size(); ++i) {
            const double val = (mask >> i) & 1 ? vary[i].hi : vary[i].lo;
            if (vary[i].input)
                D(vary[i].r, vary[i].c) += val;
            else
                C(vary[i].r, vary[i].c) += val;
        }
        out.push_back({std::move(C), std::move(D)});
    }
    return out;
}

std::vector<std::pair<Mat, Mat>> BasisModel::ldi_pairs(const HPolytope& Xhat,
                                                       const HPolytope& Uhat,
                                                       const VPolytope& Theta0) const
{
    // default: reuse the extreme-set oracle around the origin with K = 0,
    // shifting by the origin Jacobians
    VPolytope xv = simplex_vertices(Xhat);
    const VPolytope* uv = nullptr;
    VPolytope uvert;
    if (!Uhat.is_full_space()) {
        uvert = simplex_vertices(Uhat);
        uv = &uvert;
    }
    const Vec theta0 = Vec::Zero(ntheta());
    auto [A0, B0] = closed_loop_jacobians(*this, Vec::Zero(nx()), Vec::Zero(nu()), theta0,
                                          Mat::Zero(nu(), nx()));
    auto cds = jacobian_extreme_set(Vec::Zero(nx()), Vec::Zero(nu()), theta0, xv, uv, Theta0,
                                    Mat::Zero(nu(), nx()));
    std::vector<std::pair<Mat, Mat>> out;
    out.reserve(cds.size());
    for (const CDPair& cd : cds) out.push_back({A0 + cd.C, B0 + cd.D});
    return out;
}

LinearModel::LinearModel(Mat A, Mat B, int ntheta)
    : BasisModel(static_cast<int>(A.rows()), static_cast<int>(B.cols()), ntheta,
                 Eigen::JacobiSVD<Mat>(A).singularValues()(0)),
      A_(std::move(A)),
      B_(std::move(B))
{
}

Vec LinearModel::basis(int i, const Vec& x, const Vec& u) const
{
    if (i == 0) return A_ * x + B_ * u;
    return Vec::Zero(nx());
}

Mat LinearModel::basis_dx(int i, const Vec&, const Vec&) const
{
    if (i == 0) return A_;
    return Mat::Zero(nx(), nx());
}

Mat LinearModel::basis_du(int i, const Vec&, const Vec&) const
{
    if (i == 0) return B_;
    return Mat::Zero(nx(), nu());
}

std::vector<CDPair> LinearModel::jacobian_extreme_set(const Vec&, const Vec&, const Vec&,
                                                      const VPolytope&, const VPolytope*,
                                                      const VPolytope&, const Mat&) const
{
    return {{Mat::Zero(nx(), nx()), Mat::Zero(nx(), nu())}};
}

std::vector<std::pair<Mat, Mat>> LinearModel::ldi_pairs(const HPolytope&, const HPolytope&,
                                                        const VPolytope&) const
{
    return {{A_, B_}};
}

QuadraticBasisModel::QuadraticBasisModel(Mat A, Mat B, std::vector<int> basis_index,
                                         double xhat_bound)
    : BasisModel(static_cast<int>(A.rows()), static_cast<int>(B.cols()),
                 static_cast<int>(basis_index.size()), 2.0 * xhat_bound),
      A_(std::move(A)),
      B_(std::move(B)),
      jidx_(std::move(basis_index)),
      xhat_bound_(xhat_bound)
{
    for (int j : jidx_)
        if (j < 0 || j >= nx()) throw ModelError("basis index out of range");
}

Vec QuadraticBasisModel::basis(int i, const Vec& x, const Vec& u) const
{
    if (i == 0) return A_ * x + B_ * u;
    Vec out = Vec::Zero(nx());
    const double xi = x(jidx_[i - 1]);
    out(unit_row(i)) = xi * xi;
    return out;
}

Mat QuadraticBasisModel::basis_dx(int i, const Vec& x, const Vec&) const
{
    if (i == 0) return A_;
    Mat out = Mat::Zero(nx(), nx());
    out(unit_row(i), jidx_[i - 1]) = 2.0 * x(jidx_[i - 1]);
    return out;
}

Mat QuadraticBasisModel::basis_du(int i, const Vec&, const Vec&) const
{
    if (i == 0) return B_;
    return Mat::Zero(nx(), nu());
}

std::vector<CDPair> QuadraticBasisModel::jacobian_extreme_set(const Vec& x0, const Vec&,
                                                              const Vec& theta0,
                                                              const VPolytope& S,
                                                              const VPolytope*,
                                                              const VPolytope& Theta,
                                                              const Mat&) const
{
    // deviation is sum_i 2(theta_i (x0+s)_{j_i} - theta0_i x0_{j_i}) e_i e_{j_i}',
    // bilinear in (s, theta): extremes at vertex products; grad_u f is constant.
    std::vector<CDPair> out;
    out.reserve(S.vertices.size() * Theta.vertices.size());
    for (const Vec& s : S.vertices)
        for (const Vec& th : Theta.vertices) {
            Mat C = Mat::Zero(nx(), nx());
            for (int i = 1; i <= ntheta(); ++i) {
                const int j = jidx_[i - 1];
                C(unit_row(i), j) += 2.0 * (th(i - 1) * (x0(j) + s(j)) - theta0(i - 1) * x0(j));
            }
            out.push_back({std::move(C), Mat::Zero(nx(), nu())});
        }
    return out;
}

std::vector<std::pair<Mat, Mat>> QuadraticBasisModel::ldi_pairs(const HPolytope& Xhat,
                                                                const HPolytope&,
                                                                const VPolytope& Theta0) const
{
    // coefficient of basis i in grad_x f is c_i = 2 theta_i [x]_{j_i}; its range
    // over Theta0 x Xhat is an interval; corners give the aggregate LDI
    Vec xlo, xhi;
    VPolytope xv = simplex_vertices(Xhat);
    xv.bounding_box(xlo, xhi);
    std::vector<double> clo(ntheta()), chi(ntheta());
    for (int i = 1; i <= ntheta(); ++i) {
        const int j = jidx_[i - 1];
        double lo = 1e300, hi = -1e300;
        for (const Vec& th : Theta0.vertices) {
            for (double xval : {xlo(j), xhi(j)}) {
                lo = std::min(lo, 2.0 * th(i - 1) * xval);
                hi = std::max(hi, 2.0 * th(i - 1) * xval);
            }
        }
        clo[i - 1] = lo;
        chi[i - 1] = hi;
    }
    std::vector<int> varying;
    for (int i = 0; i < ntheta(); ++i)
        if (chi[i] - clo[i] > 1e-14) varying.push_back(i);
    if (varying.size() > 20) throw ModelError("LDI vertex count too large");
    std::vector<std::pair<Mat, Mat>> out;
    for (std::size_t mask = 0; mask < (1ull << varying.size()); ++mask) {
        Mat Aj = A_;
        for (int i = 0; i < ntheta(); ++i) Aj(unit_row(i + 1), jidx_[i]) += clo[i];
        for (std::size_t b = 0; b < varying.size(); ++b)
            if ((mask >> b) & 1)
                Aj(unit_row(varying[b] + 1), jidx_[varying[b]]) += chi[varying[b]] - clo[varying[b]];
        out.push_back({std::move(Aj), B_});
    }
    return out;
}

void ProblemData::validate() const
{
    if (!model) throw std::invalid_argument("ProblemData: missing model");
    if (N < 1) throw std::invalid_argument("ProblemData: horizon must be >= 1");
    const int n = nx();
    if (Q.rows() != n || Q.cols() != n || R.rows() != nu() || R.cols() != nu())
        throw std::invalid_argument("ProblemData: weight dimensions");
    if (Eigen::LLT<Mat>(Q).info() != Eigen::Success || Eigen::LLT<Mat>(R).info() != Eigen::Success)
        throw NotPositiveDefinite("ProblemData: Q and R must be positive definite");
    if (!U.is_full_space() && (U.h.array() <= 0.0).any())
        throw std::invalid_argument("ProblemData: origin not interior to U");
    if ((S_h.h.array() <= 0.0).any())
        throw std::invalid_argument("ProblemData: origin not interior to S");
    if (!in_convex_hull(W.vertices, Vec::Zero(n), 1e-9))
        throw std::invalid_argument("ProblemData: origin not in W");
    if (Theta0_v.dim() != ntheta())
        throw std::invalid_argument("ProblemData: Theta0 dimension mismatch");
    for (const Vec& th : Theta0_v.vertices)
        if (!contains_point(Theta0_h, th, 1e-7))
            throw std::invalid_argument("ProblemData: Theta0 vertex outside facet form");
}

Vec eval_dynamics(const BasisModel& m, const Vec& x, const Vec& u, const Vec& theta)
{
    if (x.size() != m.nx() || u.size() != m.nu() || theta.size() != m.ntheta())
        throw std::invalid_argument("eval_dynamics: dimension mismatch");
    Vec out = m.basis(0, x, u);
    for (int i = 1; i <= m.ntheta(); ++i) out += theta(i - 1) * m.basis(i, x, u);
    return out;
}

Vec eval_closed_loop(const BasisModel& m, const Vec& x, const Vec& v, const Vec& theta,
                     const Mat& K)
{
    return eval_dynamics(m, x, K * x + v, theta);
}

std::pair<Mat, Mat> closed_loop_jacobians(const BasisModel& m, const Vec& x0, const Vec& v0,
                                          const Vec& theta0, const Mat& K)
{
    const Vec u0 = K * x0 + v0;
    Mat dx = m.basis_dx(0, x0, u0);
    Mat du = m.basis_du(0, x0, u0);
    for (int i = 1; i <= m.ntheta(); ++i) {
        dx += theta0(i - 1) * m.basis_dx(i, x0, u0);
        du += theta0(i - 1) * m.basis_du(i, x0, u0);
    }
    return {dx + du * K, du};
}

std::vector<Vec> param_disturbance_vertices(const BasisModel& m, const Vec& x0, const Vec& v0,
                                            const Vec& theta0, const VPolytope& Theta,
                                            const Mat& K)
{
    const Vec u0 = K * x0 + v0;
    std::vector<Vec> fi(m.ntheta());
    for (int i = 1; i <= m.ntheta(); ++i) fi[i - 1] = m.basis(i, x0, u0);
    std::vector<Vec> out;
    out.reserve(Theta.vertices.size());
    for (const Vec& th : Theta.vertices) {
        Vec d = Vec::Zero(m.nx());
        for (int i = 0; i < m.ntheta(); ++i) d += (th(i) - theta0(i)) * fi[i];
        out.push_back(std::move(d));
    }
    return out;
}

void check_basis_model(const BasisModel& m, int samples, double tol)
{
    auto cb = m.constant_basis_indices();
    for (int i = 0; i <= m.ntheta(); ++i) {
        if (std::find(cb.begin(), cb.end(), i) != cb.end()) continue;
        const Vec f00 = m.basis(i, Vec::Zero(m.nx()), Vec::Zero(m.nu()));
        if (f00.norm() > 1e-12)
            throw ModelError("basis " + std::to_string(i) + " violates f_i(0,0) = 0");
    }
    std::mt19937 rng(2024);
    std::normal_distribution<double> g;
    const double h = 1e-6;
    for (int s = 0; s < samples; ++s) {
        Vec x = Vec::NullaryExpr(m.nx(), [&] { return g(rng); });
        Vec u = Vec::NullaryExpr(m.nu(), [&] { return g(rng); });
        for (int i = 0; i <= m.ntheta(); ++i) {
            Mat dx = m.basis_dx(i, x, u);
            Mat du = m.basis_du(i, x, u);
            for (int c = 0; c < m.nx(); ++c) {
                Vec xp = x, xm = x;
                xp(c) += h;
                xm(c) -= h;
                Vec fd = (m.basis(i, xp, u) - m.basis(i, xm, u)) / (2.0 * h);
                if ((fd - dx.col(c)).norm() > tol * std::max(1.0, dx.col(c).norm()))
                    throw ModelError("basis_dx mismatch with finite differences");
            }
            for (int c = 0; c < m.nu(); ++c) {
                Vec up = u, um = u;
                up(c) += h;
                um(c) -= h;
                Vec fd = (m.basis(i, x, up) - m.basis(i, x, um)) / (2.0 * h);
                if ((fd - du.col(c)).norm() > tol * std::max(1.0, du.col(c).norm()))
                    throw ModelError("basis_du mismatch with finite differences");
            }
        }
    }
}

} // namespace etmpc
