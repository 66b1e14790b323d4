#include "ipm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <cstdio>
#include <cstdlib>

namespace etmpc::ipm {

namespace {
constexpr double kStepMin = 1e-7;
constexpr double kStepMax = 0.9999;
constexpr double kSafeguard = 500.0;
constexpr double kBringGamma = 0.99;
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

int svec_len(int m) { return m * (m + 1) / 2; }

Vec svec(const Mat& M)
{
    const int m = static_cast<int>(M.rows());
    Vec v(svec_len(m));
    const double rt2 = std::sqrt(2.0);
    int k = 0;
    for (int j = 0; j < m; ++j) {
        v(k++) = M(j, j);
        for (int i = j + 1; i < m; ++i) v(k++) = rt2 * 0.5 * (M(i, j) + M(j, i));
    }
    return v;
}

Mat smat(const Vec& v, int m)
{
    Mat M(m, m);
    const double irt2 = 1.0 / std::sqrt(2.0);
    int k = 0;
    for (int j = 0; j < m; ++j) {
        M(j, j) = v(k++);
        for (int i = j + 1; i < m; ++i) {
            M(i, j) = irt2 * v(k);
            M(j, i) = irt2 * v(k);
            ++k;
        }
    }
    return M;
}

namespace {

struct Layout {
    int l = 0;
    std::vector<int> q;
    std::vector<int> pm;
    std::vector<int> soc_off;
    std::vector<int> psd_off;
    int m = 0;       // total s-dimension
    int degree = 0;  // barrier degree

    Layout() = default;
    Layout(int l_, std::vector<int> q_, std::vector<int> pm_)
        : l(l_), q(std::move(q_)), pm(std::move(pm_))
    {
        int off = l;
        for (int d : q) {
            soc_off.push_back(off);
            off += d;
        }
        for (int mm : pm) {
            psd_off.push_back(off);
            off += svec_len(mm);
        }
        m = off;
        degree = l + static_cast<int>(q.size());
        for (int mm : pm) degree += mm;
    }
};

struct SocScaling {
    double eta = 1.0;
    double a = 1.0;  // leading entry of the unit-hyperbolic NT point
    Vec qv;          // trailing entries
};

struct PsdScaling {
    Mat R, Rti;
    Mat P, Pi;  // P = R R', Pi = Rti Rti'
    Vec lam;
};

// Nesterov-Todd scaling state and Jordan-algebra operations over the full
// cone product. All vector arguments use the [lp | soc... | psd(svec)...]
// layout.
class Cones {
public:
    explicit Cones(Layout lay) : lay_(std::move(lay))
    {
        lp_w2_ = Vec::Ones(lay_.l);
        soc_.resize(lay_.q.size());
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            soc_[i].eta = 1.0;
            soc_[i].a = 1.0;
            soc_[i].qv = Vec::Zero(lay_.q[i] - 1);
        }
        psd_.resize(lay_.pm.size());
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            psd_[i].R = Mat::Identity(mm, mm);
            psd_[i].Rti = Mat::Identity(mm, mm);
            psd_[i].P = Mat::Identity(mm, mm);
            psd_[i].Pi = Mat::Identity(mm, mm);
            psd_[i].lam = Vec::Ones(mm);
        }
        lambda_ = unit();
    }

    const Layout& layout() const { return lay_; }
    const Vec& lambda() const { return lambda_; }

    Vec unit() const
    {
        Vec e = Vec::Zero(lay_.m);
        e.head(lay_.l).setOnes();
        for (std::size_t i = 0; i < lay_.q.size(); ++i) e(lay_.soc_off[i]) = 1.0;
        for (std::size_t i = 0; i < lay_.pm.size(); ++i)
            e.segment(lay_.psd_off[i], svec_len(lay_.pm[i])) = svec(Mat::Identity(lay_.pm[i], lay_.pm[i]));
        return e;
    }

    bool update(const Vec& s, const Vec& z)
    {
        for (int i = 0; i < lay_.l; ++i) {
            if (s(i) <= 0.0 || z(i) <= 0.0) return false;
            lp_w2_(i) = s(i) / z(i);
        }
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], d = lay_.q[i];
            const double sres = s(off) * s(off) - s.segment(off + 1, d - 1).squaredNorm();
            const double zres = z(off) * z(off) - z.segment(off + 1, d - 1).squaredNorm();
            if (sres <= 0.0 || zres <= 0.0 || s(off) <= 0.0 || z(off) <= 0.0) return false;
            const double snorm = std::sqrt(sres), znorm = std::sqrt(zres);
            Vec sbar = s.segment(off, d) / snorm;
            Vec zbar = z.segment(off, d) / znorm;
            const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
            soc_[i].eta = std::sqrt(snorm / znorm);
            soc_[i].a = (0.5 / gamma) * (sbar(0) + zbar(0));
            soc_[i].qv = (0.5 / gamma) * (sbar.tail(d - 1) - zbar.tail(d - 1));
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            Mat S = smat(s.segment(lay_.psd_off[i], svec_len(mm)), mm);
            Mat Z = smat(z.segment(lay_.psd_off[i], svec_len(mm)), mm);
            Eigen::LLT<Mat> ls(S), lz(Z);
            if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
            Mat Ls = ls.matrixL();
            Mat Lz = lz.matrixL();
            Eigen::JacobiSVD<Mat> svd(Lz.transpose() * Ls, Eigen::ComputeFullU);
            Vec lam = svd.singularValues();
            if (lam.minCoeff() <= 0.0) return false;
            Mat U = svd.matrixU();
            Mat X = Lz.transpose().triangularView<Eigen::Upper>().solve(U);  // Lz^{-T} U
            psd_[i].R = X * lam.cwiseSqrt().asDiagonal();
            psd_[i].Rti = Lz * U * lam.cwiseSqrt().cwiseInverse().asDiagonal();
            psd_[i].P = psd_[i].R * psd_[i].R.transpose();
            psd_[i].Pi = psd_[i].Rti * psd_[i].Rti.transpose();
            psd_[i].lam = lam;
        }
        // lambda = W z (= W^{-T} s on the central manifold)
        lambda_ = apply_w(z);
        return true;
    }

    // Strict interiority check without touching the scaling state.
    bool interior(const Vec& s, const Vec& z) const
    {
        for (int i = 0; i < lay_.l; ++i)
            if (s(i) <= 0.0 || z(i) <= 0.0) return false;
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], d = lay_.q[i];
            if (s(off) <= 0.0 || z(off) <= 0.0) return false;
            if (s(off) * s(off) - s.segment(off + 1, d - 1).squaredNorm() <= 0.0) return false;
            if (z(off) * z(off) - z.segment(off + 1, d - 1).squaredNorm() <= 0.0) return false;
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            Mat S = smat(s.segment(lay_.psd_off[i], svec_len(mm)), mm);
            Mat Z = smat(z.segment(lay_.psd_off[i], svec_len(mm)), mm);
            if (Eigen::LLT<Mat>(S).info() != Eigen::Success) return false;
            if (Eigen::LLT<Mat>(Z).info() != Eigen::Success) return false;
        }
        return true;
    }

    enum class Op { W, WT, Winv, WinvT, Wsq, WsqInv };

    Vec apply(Op op, const Vec& v) const
    {
        Vec out(lay_.m);
        for (int i = 0; i < lay_.l; ++i) {
            const double w2 = lp_w2_(i);
            double f = 1.0;
            switch (op) {
                case Op::W:
                case Op::WT: f = std::sqrt(w2); break;
                case Op::Winv:
                case Op::WinvT: f = 1.0 / std::sqrt(w2); break;
                case Op::Wsq: f = w2; break;
                case Op::WsqInv: f = 1.0 / w2; break;
            }
            out(i) = f * v(i);
        }
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], d = lay_.q[i];
            Vec in = v.segment(off, d);
            switch (op) {
                case Op::W:
                case Op::WT: out.segment(off, d) = soc_apply(i, in, false); break;
                case Op::Winv:
                case Op::WinvT: out.segment(off, d) = soc_apply(i, in, true); break;
                case Op::Wsq: out.segment(off, d) = soc_apply(i, soc_apply(i, in, false), false); break;
                case Op::WsqInv: out.segment(off, d) = soc_apply(i, soc_apply(i, in, true), true); break;
            }
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            const int off = lay_.psd_off[i], len = svec_len(mm);
            Mat V = smat(v.segment(off, len), mm);
            Mat res;
            const PsdScaling& ps = psd_[i];
            switch (op) {
                case Op::W: res = ps.R.transpose() * V * ps.R; break;
                case Op::WT: res = ps.R * V * ps.R.transpose(); break;
                case Op::Winv: res = ps.Rti * V * ps.Rti.transpose(); break;
                case Op::WinvT: res = ps.Rti.transpose() * V * ps.Rti; break;
                case Op::Wsq: res = ps.P * V * ps.P; break;
                case Op::WsqInv: res = ps.Pi * V * ps.Pi; break;
            }
            out.segment(off, len) = svec(res);
        }
        return out;
    }

    Vec apply_w(const Vec& v) const { return apply(Op::W, v); }

    // Per-block (W'W)^{-1} applied to a block-local dense matrix, used when
    // forming the reduced KKT matrix.
    Mat block_wsqinv_lp(int row, const Mat& B) const { return B / lp_w2_(row); }
    Mat block_wsqinv_soc(int idx, const Mat& B) const
    {
        Mat out(B.rows(), B.cols());
        for (int c = 0; c < B.cols(); ++c)
            out.col(c) = soc_apply(idx, soc_apply(idx, B.col(c), true), true);
        return out;
    }
    Mat block_wsqinv_psd(int idx, const Mat& B) const
    {
        const int mm = lay_.pm[idx];
        Mat out(B.rows(), B.cols());
        for (int c = 0; c < B.cols(); ++c)
            out.col(c) = svec(psd_[idx].Pi * smat(B.col(c), mm) * psd_[idx].Pi);
        return out;
    }

    Vec jordan_prod(const Vec& u, const Vec& v) const
    {
        Vec out(lay_.m);
        out.head(lay_.l) = u.head(lay_.l).cwiseProduct(v.head(lay_.l));
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], d = lay_.q[i];
            out(off) = u.segment(off, d).dot(v.segment(off, d));
            out.segment(off + 1, d - 1) =
                u(off) * v.segment(off + 1, d - 1) + v(off) * u.segment(off + 1, d - 1);
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            const int off = lay_.psd_off[i], len = svec_len(mm);
            Mat U = smat(u.segment(off, len), mm);
            Mat V = smat(v.segment(off, len), mm);
            out.segment(off, len) = svec(0.5 * (U * V + V * U));
        }
        return out;
    }

    // lambda \ d  (inverse Jordan product by the scaled point)
    Vec lambda_div(const Vec& d) const
    {
        Vec out(lay_.m);
        out.head(lay_.l) = d.head(lay_.l).cwiseQuotient(lambda_.head(lay_.l));
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], dd = lay_.q[i];
            const double u0 = lambda_(off);
            Vec u1 = lambda_.segment(off + 1, dd - 1);
            const double rho = u0 * u0 - u1.squaredNorm();
            const double zeta = u1.dot(d.segment(off + 1, dd - 1));
            out(off) = (u0 * d(off) - zeta) / rho;
            const double factor = (zeta / u0 - d(off)) / rho;
            out.segment(off + 1, dd - 1) = factor * u1 + d.segment(off + 1, dd - 1) / u0;
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            const int off = lay_.psd_off[i], len = svec_len(mm);
            Mat D = smat(d.segment(off, len), mm);
            const Vec& lam = psd_[i].lam;
            Mat U(mm, mm);
            for (int r = 0; r < mm; ++r)
                for (int c = 0; c < mm; ++c) U(r, c) = 2.0 * D(r, c) / (lam(r) + lam(c));
            out.segment(off, len) = svec(U);
        }
        return out;
    }

    // Largest decrease rate of lambda + alpha*dir toward the cone boundary;
    // the admissible step is 1/rate (infinite when rate == 0).
    double boundary_rate(const Vec& dir) const
    {
        double rate = 0.0;
        for (int i = 0; i < lay_.l; ++i) rate = std::max(rate, -dir(i) / lambda_(i));
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], d = lay_.q[i];
            const double ln2 = lambda_(off) * lambda_(off) - lambda_.segment(off + 1, d - 1).squaredNorm();
            if (ln2 <= 0.0) continue;
            const double ln = std::sqrt(ln2);
            Vec lb = lambda_.segment(off, d) / ln;
            const double lb_d = lb(0) * dir(off) - lb.tail(d - 1).dot(dir.segment(off + 1, d - 1));
            const double factor = (lb_d + dir(off)) / (lb(0) + 1.0);
            Vec rho_tail = (dir.segment(off + 1, d - 1) - factor * lb.tail(d - 1)) / ln;
            rate = std::max(rate, rho_tail.norm() - lb_d / ln);
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            Mat D = smat(dir.segment(lay_.psd_off[i], svec_len(mm)), mm);
            Vec isq = psd_[i].lam.cwiseSqrt().cwiseInverse();
            Mat Dl = isq.asDiagonal() * D * isq.asDiagonal();
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Dl + Dl.transpose()), Eigen::EigenvaluesOnly);
            rate = std::max(rate, -es.eigenvalues().minCoeff());
        }
        return rate;
    }

    // Worst violation of cone membership for an arbitrary point.
    double cone_residual(const Vec& r) const
    {
        double alpha = -kInf;
        for (int i = 0; i < lay_.l; ++i) alpha = std::max(alpha, -r(i));
        for (std::size_t i = 0; i < lay_.q.size(); ++i) {
            const int off = lay_.soc_off[i], d = lay_.q[i];
            alpha = std::max(alpha, r.segment(off + 1, d - 1).norm() - r(off));
        }
        for (std::size_t i = 0; i < lay_.pm.size(); ++i) {
            const int mm = lay_.pm[i];
            Mat R = smat(r.segment(lay_.psd_off[i], svec_len(mm)), mm);
            Eigen::SelfAdjointEigenSolver<Mat> es(R, Eigen::EigenvaluesOnly);
            alpha = std::max(alpha, -es.eigenvalues().minCoeff());
        }
        return alpha;
    }

    Vec bring_to_cone(const Vec& r) const
    {
        double alpha = std::max(cone_residual(r), -kBringGamma);
        return r + (1.0 + alpha) * unit();
    }

private:
    Vec soc_apply(std::size_t idx, const Vec& in, bool inverse) const
    {
        const SocScaling& sc = soc_[idx];
        const int d = static_cast<int>(in.size());
        const double sgn = inverse ? -1.0 : 1.0;
        const double eta = inverse ? 1.0 / sc.eta : sc.eta;
        Vec out(d);
        const double zeta = sc.qv.dot(in.tail(d - 1));
        out(0) = eta * (sc.a * in(0) + sgn * zeta);
        out.tail(d - 1) =
            eta * (in.tail(d - 1) + (sgn * in(0) + zeta / (1.0 + sc.a)) * sc.qv);
        return out;
    }

    Layout lay_;
    Vec lp_w2_;
    std::vector<SocScaling> soc_;
    std::vector<PsdScaling> psd_;
    Vec lambda_;
};

// Block-sparse G and h with cone-aligned row blocks.
struct GMatrix {
    struct Entry {
        int kind;  // 0 = lp, 1 = soc, 2 = psd
        int idx;   // index within kind
        int off;   // row offset in the s vector
        const Block* blk;
    };
    std::vector<Entry> entries;
    Vec h;
    int m = 0;
    int n = 0;

    GMatrix(const Problem& p, const Layout& lay)
    {
        n = p.n;
        m = lay.m;
        h = Vec::Zero(m);
        int row = 0;
        for (std::size_t i = 0; i < p.lp.size(); ++i) {
            entries.push_back({0, static_cast<int>(i), row, &p.lp[i]});
            h.segment(row, p.lp[i].h.size()) = p.lp[i].h;
            row += static_cast<int>(p.lp[i].h.size());
        }
        for (std::size_t i = 0; i < p.soc.size(); ++i) {
            entries.push_back({1, static_cast<int>(i), row, &p.soc[i]});
            h.segment(row, p.soc[i].h.size()) = p.soc[i].h;
            row += static_cast<int>(p.soc[i].h.size());
        }
        for (std::size_t i = 0; i < p.psd.size(); ++i) {
            entries.push_back({2, static_cast<int>(i), row, &p.psd[i]});
            h.segment(row, p.psd[i].h.size()) = p.psd[i].h;
            row += static_cast<int>(p.psd[i].h.size());
        }
    }

    Vec multiply(const Vec& x) const  // G x
    {
        Vec out = Vec::Zero(m);
        for (const Entry& e : entries) {
            const Block& b = *e.blk;
            Vec xl(b.cols.size());
            for (std::size_t i = 0; i < b.cols.size(); ++i) xl(i) = x(b.cols[i]);
            out.segment(e.off, b.G.rows()) = b.G * xl;
        }
        return out;
    }

    Vec multiply_t(const Vec& z) const  // G' z
    {
        Vec out = Vec::Zero(n);
        for (const Entry& e : entries) {
            const Block& b = *e.blk;
            Vec t = b.G.transpose() * z.segment(e.off, b.G.rows());
            for (std::size_t i = 0; i < b.cols.size(); ++i) out(b.cols[i]) += t(i);
        }
        return out;
    }
};

class KktSolver {
public:
    KktSolver(const Problem& p, const GMatrix& g, const Cones& cones, const IpmSettings& st)
        : p_(p), g_(g), cones_(cones), st_(st), n_(p.n), np_(static_cast<int>(p.Aeq.rows()))
    {
    }

    bool factor()
    {
        Mat H = Mat::Zero(n_, n_);
        for (const GMatrix::Entry& e : g_.entries) {
            const Block& b = *e.blk;
            Mat T;
            switch (e.kind) {
                case 0: T = cones_.block_wsqinv_lp(e.idx, b.G); break;
                case 1: T = cones_.block_wsqinv_soc(e.idx, b.G); break;
                default: T = cones_.block_wsqinv_psd(e.idx, b.G); break;
            }
            Mat Hb = b.G.transpose() * T;
            for (std::size_t r = 0; r < b.cols.size(); ++r)
                for (std::size_t c = 0; c < b.cols.size(); ++c)
                    H(b.cols[r], b.cols[c]) += Hb(r, c);
        }
        // Schur-complement factorization of [H A'; A -dI]: both pieces SPD.
        // Regularization is relative per coordinate so iterative refinement
        // removes the bias regardless of the scale spread across variables.
        double reg = st_.static_reg;
        for (int attempt = 0; attempt < 6; ++attempt) {
            Mat Hr = H;
            for (int i = 0; i < n_; ++i) Hr(i, i) += reg * std::max(H(i, i), 1.0);
            llt_h_.compute(Hr);
            if (llt_h_.info() == Eigen::Success) {
                if (np_ == 0) return true;
                hinv_at_ = llt_h_.solve(p_.Aeq.transpose());
                Mat S = p_.Aeq * hinv_at_;
                for (int i = 0; i < np_; ++i) S(i, i) += reg * std::max(S(i, i), 1.0);
                llt_s_.compute(S);
                if (llt_s_.info() == Eigen::Success) return true;
            }
            reg *= 100.0;
        }
        return false;
    }

    // Solves the 3x3 KKT system [0 A' G'; A 0 0; G 0 -W'W] [dx;dy;dz] = [bx;by;bz]
    // by elimination, with iterative refinement against the unregularized system.
    void solve(const Vec& bx, const Vec& by, const Vec& bz, Vec& dx, Vec& dy, Vec& dz) const
    {
        dx = Vec::Zero(n_);
        dy = Vec::Zero(np_);
        dz = Vec::Zero(g_.m);
        Vec ex = bx, ey = by, ez = bz;
        double prev_err = std::numeric_limits<double>::infinity();
        for (int pass = 0; pass <= st_.refine_steps; ++pass) {
            Vec r1 = ex + g_.multiply_t(cones_.apply(Cones::Op::WsqInv, ez));
            Vec t = llt_h_.solve(r1);
            Vec ddy(np_);
            Vec ddx;
            if (np_ > 0) {
                ddy = llt_s_.solve(p_.Aeq * t - ey);
                ddx = t - hinv_at_ * ddy;
            } else {
                ddx = t;
            }
            Vec ddz = cones_.apply(Cones::Op::WsqInv, g_.multiply(ddx) - ez);
            dx += ddx;
            dy += ddy;
            dz += ddz;
            if (pass == st_.refine_steps) break;
            ex = bx - g_.multiply_t(dz);
            if (np_ > 0) ex -= p_.Aeq.transpose() * dy;
            ey = by;
            if (np_ > 0) ey -= p_.Aeq * dx;
            ez = bz - g_.multiply(dx) + cones_.apply(Cones::Op::Wsq, dz);
            const double err = std::max({ex.lpNorm<Eigen::Infinity>(), ey.size() ? ey.lpNorm<Eigen::Infinity>() : 0.0,
                                         ez.lpNorm<Eigen::Infinity>()});
            if (err < 1e-14 * (1.0 + bx.lpNorm<Eigen::Infinity>()) || err > 0.9 * prev_err) break;
            prev_err = err;
        }
    }

private:
    const Problem& p_;
    const GMatrix& g_;
    const Cones& cones_;
    const IpmSettings& st_;
    int n_, np_;
    Eigen::LLT<Mat> llt_h_;
    Eigen::LLT<Mat> llt_s_;
    Mat hinv_at_;
};

struct Iterate {
    Vec x, y, z, s;
    double tau = 1.0, kap = 1.0;
    double pres = kInf, dres = kInf, gap = kInf, mu = kInf;
    double score() const { return std::max(pres, dres) + std::max(gap, 0.0); }
};

} // namespace

IpmResult solve(const Problem& prob, const IpmSettings& st)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    Layout lay(prob.l, prob.q, prob.pm);
    Cones cones(lay);
    GMatrix G(prob, lay);
    const int n = prob.n;
    const int p = static_cast<int>(prob.Aeq.rows());
    const int m = lay.m;

    IpmResult res;
    res.x = Vec::Zero(n);

    const Vec& c = prob.c;
    const Vec& b = prob.beq;
    const Vec& h = G.h;

    const double resx0 = std::max(1.0, c.norm());
    const double resy0 = std::max(1.0, b.norm());
    const double resz0 = std::max(1.0, h.norm());

    KktSolver kkt(prob, G, cones, st);
    if (!kkt.factor()) {
        res.status = IpmStatus::Numerical;
        return res;
    }

    Vec dx1(n), dy1(p), dz1(m), dx2(n), dy2(p), dz2(m);
    auto by_dot = [&](const Vec& bb, const Vec& dy) { return p > 0 ? bb.dot(dy) : 0.0; };

    // init: primal from [0;b;h], dual from [-c;0;0]
    kkt.solve(Vec::Zero(n), b, h, dx1, dy1, dz1);
    Iterate w;
    w.x = dx1;
    w.s = cones.bring_to_cone(-dz1);
    kkt.solve(-c, Vec::Zero(p), Vec::Zero(m), dx2, dy2, dz2);
    w.y = dy2;
    w.z = cones.bring_to_cone(dz2);
    w.tau = 1.0;
    w.kap = 1.0;

    Iterate best = w;
    bool have_best = false;
    double pres_prev = kInf;
    double dres_prev = kInf;

    IpmStatus status = IpmStatus::MaxIters;
    std::optional<double> pinfres, dinfres;
    double hresx = 0, hresy = 0, hresz = 0, rt = 0;
    Vec rx, ry, rz;
    double relgap = kInf;
    double pcost = 0, dcost = 0, cx = 0, by_ = 0, hz = 0;

    auto compute_residuals = [&]() {
        rx = -G.multiply_t(w.z);
        if (p > 0) rx -= prob.Aeq.transpose() * w.y;
        hresx = rx.norm();
        rx -= w.tau * c;
        if (p > 0) {
            ry = prob.Aeq * w.x;
            hresy = ry.norm();
            ry -= w.tau * b;
        } else {
            ry = Vec();
            hresy = 0.0;
        }
        rz = w.s + G.multiply(w.x);
        hresz = rz.norm();
        rz -= w.tau * h;
        cx = c.dot(w.x);
        by_ = p > 0 ? b.dot(w.y) : 0.0;
        hz = h.dot(w.z);
        rt = w.kap + cx + by_ + hz;

        w.gap = w.s.dot(w.z);
        w.mu = (w.gap + w.kap * w.tau) / (lay.degree + 1);
        pcost = cx / w.tau;
        dcost = -(hz + by_) / w.tau;
        relgap = kInf;
        if (pcost < 0.0)
            relgap = w.gap / (-pcost);
        else if (dcost > 0.0)
            relgap = w.gap / dcost;
        const double nx = w.x.norm(), ns = w.s.norm(), ny = p > 0 ? w.y.norm() : 0.0, nz = w.z.norm();
        const double nry = p > 0 ? ry.norm() / std::max(resy0 + nx, 1.0) : 0.0;
        const double nrz = rz.norm() / std::max(resz0 + nx + ns, 1.0);
        w.pres = std::max(nry, nrz) / w.tau;
        w.dres = rx.norm() / std::max(resx0 + ny + nz, 1.0) / w.tau;
        pinfres.reset();
        dinfres.reset();
        if ((hz + by_) / std::max(ny + nz, 1.0) < -st.reltol)
            pinfres = hresx / std::max(ny + nz, 1.0);
        if (cx / std::max(nx, 1.0) < -st.reltol)
            dinfres = std::max(hresy / std::max(nx, 1.0), hresz / std::max(nx + ns, 1.0));
    };

    enum class Verdict { None, Optimal, Pinf, Dinf };
    auto check_exit = [&](bool reduced) {
        const double ft = reduced ? st.feastol_inacc : st.feastol;
        const double at = reduced ? st.abstol_inacc : st.abstol;
        const double rt_ = reduced ? st.reltol_inacc : st.reltol;
        if ((-cx > 0.0 || -by_ - hz >= -at) && w.pres < ft && w.dres < ft &&
            (w.gap < at || relgap < rt_))
            return Verdict::Optimal;
        if (dinfres && *dinfres < ft && w.tau < w.kap) return Verdict::Dinf;
        if ((pinfres && *pinfres < ft && w.tau < w.kap) ||
            (w.tau < ft && w.kap < ft && pinfres && *pinfres < ft))
            return Verdict::Pinf;
        return Verdict::None;
    };

    auto finish = [&](Verdict v, bool reduced) {
        switch (v) {
            case Verdict::Optimal:
                status = reduced ? IpmStatus::OptimalInaccurate : IpmStatus::Optimal;
                break;
            case Verdict::Pinf: status = IpmStatus::PrimalInfeasible; break;
            case Verdict::Dinf: status = IpmStatus::DualInfeasible; break;
            default: status = IpmStatus::Numerical; break;
        }
    };

    int iter = 0;
    for (iter = 0; iter <= st.max_iters; ++iter) {
        compute_residuals();

        if (st.time_limit > 0.0 &&
            std::chrono::duration<double>(clock::now() - t0).count() > st.time_limit) {
            status = IpmStatus::TimeLimit;
            break;
        }

        // safeguard against diverging steps (residual bounces below feastol are benign)
        if (iter > 0 &&
            ((w.pres > kSafeguard * pres_prev && w.pres > st.feastol) ||
             (w.dres > kSafeguard * dres_prev && w.dres > st.feastol) || w.gap < -st.abstol)) {
            if (have_best) {
                w = best;
                compute_residuals();
            }
            Verdict v = check_exit(true);
            finish(v, true);
            break;
        }
        pres_prev = w.pres;
        dres_prev = w.dres;

        Verdict v = check_exit(false);
        if (v != Verdict::None) {
            finish(v, false);
            break;
        }
        if (iter == st.max_iters) {
            if (have_best && best.score() < w.score()) {
                w = best;
                compute_residuals();
            }
            v = check_exit(true);
            if (v != Verdict::None)
                finish(v, true);
            else
                status = IpmStatus::MaxIters;
            break;
        }
        if (!std::isfinite(pcost)) {
            if (have_best) {
                w = best;
                compute_residuals();
            }
            v = check_exit(true);
            finish(v, true);
            break;
        }

        if (!have_best || w.score() < best.score()) {
            best = w;
            have_best = true;
        }

        if (std::getenv("ETMPC_IPM_DEBUG")) std::fprintf(stderr, "[ipm] iter %d pres=%.2e dres=%.2e gap=%.2e mu=%.2e tau=%g kap=%g\n", iter, w.pres, w.dres, w.gap, w.mu, w.tau, w.kap);
        if (!cones.update(w.s, w.z)) {
            if (std::getenv("ETMPC_IPM_DEBUG")) std::fprintf(stderr, "[ipm] iter %d: cone update failed\n", iter);
            if (have_best) {
                w = best;
                compute_residuals();
            }
            v = check_exit(true);
            finish(v, true);
            break;
        }
        if (!kkt.factor()) {
            status = IpmStatus::Numerical;
            break;
        }
        const Vec& lambda = cones.lambda();

        kkt.solve(-c, b, h, dx1, dy1, dz1);
        const double dtau_denom = w.kap / w.tau - (c.dot(dx1) + by_dot(b, dy1) + h.dot(dz1));

        // affine (predictor) direction
        kkt.solve(rx, p > 0 ? Vec(-ry) : Vec(), w.s - rz, dx2, dy2, dz2);
        const double dtau_aff =
            (rt - w.kap + c.dot(dx2) + by_dot(b, dy2) + h.dot(dz2)) / dtau_denom;
        Vec dzaff = dz2 + dtau_aff * dz1;
        Vec W_dzaff = cones.apply(Cones::Op::W, dzaff);
        Vec dsaff_byW = -W_dzaff - lambda;
        const double dkap_aff = -w.kap - (w.kap / w.tau) * dtau_aff;

        double rate = std::max(cones.boundary_rate(dsaff_byW), cones.boundary_rate(W_dzaff));
        if (dtau_aff < 0.0) rate = std::max(rate, -dtau_aff / w.tau);
        if (dkap_aff < 0.0) rate = std::max(rate, -dkap_aff / w.kap);
        const double alpha_aff = std::clamp(rate > 0.0 ? 1.0 / rate : 1.0 / kStepMin, kStepMin, kStepMax);

        const double sigma =
            std::clamp(std::pow(1.0 - alpha_aff, 3.0), st.sigma_min, st.sigma_max);

        // combined (corrector) direction
        Vec g = cones.jordan_prod(lambda, lambda) + cones.jordan_prod(dsaff_byW, W_dzaff) -
                sigma * w.mu * cones.unit();
        Vec lam_div_g = cones.lambda_div(g);
        const double oms = 1.0 - sigma;
        kkt.solve(oms * rx, p > 0 ? Vec(-oms * ry) : Vec(),
                  Vec(-oms * rz + cones.apply(Cones::Op::WT, lam_div_g)), dx2, dy2, dz2);
        const double bkap = w.kap * w.tau + dkap_aff * dtau_aff - sigma * w.mu;
        const double dtau = (oms * rt - bkap / w.tau + c.dot(dx2) + by_dot(b, dy2) + h.dot(dz2)) /
                            dtau_denom;
        dx2 += dtau * dx1;
        if (p > 0) dy2 += dtau * dy1;
        dz2 += dtau * dz1;
        Vec W_dz = cones.apply(Cones::Op::W, dz2);
        Vec ds_byW = -(lam_div_g + W_dz);
        const double dkap = -(bkap + w.kap * dtau) / w.tau;

        rate = std::max(cones.boundary_rate(ds_byW), cones.boundary_rate(W_dz));
        if (dtau < 0.0) rate = std::max(rate, -dtau / w.tau);
        if (dkap < 0.0) rate = std::max(rate, -dkap / w.kap);
        double alpha = std::clamp(rate > 0.0 ? 1.0 / rate : 1.0 / kStepMin, kStepMin, kStepMax);
        alpha *= st.step_scale;

        Vec ds = cones.apply(Cones::Op::WT, ds_byW);
        // numerical roundoff can push the unscaled step just outside the cone;
        // back off until strictly interior
        bool stepped = false;
        for (int bt = 0; bt < 40; ++bt) {
            Vec s_trial = w.s + alpha * ds;
            Vec z_trial = w.z + alpha * dz2;
            const double tau_trial = w.tau + alpha * dtau;
            const double kap_trial = w.kap + alpha * dkap;
            if (tau_trial > 0.0 && kap_trial > 0.0 && cones.interior(s_trial, z_trial)) {
                w.x += alpha * dx2;
                if (p > 0) w.y += alpha * dy2;
                w.z = std::move(z_trial);
                w.s = std::move(s_trial);
                w.tau = tau_trial;
                w.kap = kap_trial;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!stepped || !std::isfinite(w.tau)) {
            if (std::getenv("ETMPC_IPM_DEBUG")) std::fprintf(stderr, "[ipm] iter %d: step rejected (alpha=%g dtau=%g dkap=%g)\n", iter, alpha, dtau, dkap);
            status = IpmStatus::Numerical;
            break;
        }
    }

    res.iters = iter;
    res.pres = w.pres;
    res.dres = w.dres;
    res.gap = w.gap;
    switch (status) {
        case IpmStatus::Optimal:
        case IpmStatus::OptimalInaccurate:
            res.x = w.x / w.tau;
            res.s = w.s / w.tau;
            res.z = w.z / w.tau;
            res.y = p > 0 ? Vec(w.y / w.tau) : Vec();
            res.pobj = c.dot(res.x);
            res.dobj = -(h.dot(res.z) + (p > 0 ? b.dot(res.y) : 0.0));
            break;
        case IpmStatus::PrimalInfeasible: {
            const double scale = -(hz + by_);
            res.y = p > 0 ? Vec(w.y / scale) : Vec();
            res.z = w.z / scale;
            break;
        }
        case IpmStatus::DualInfeasible: {
            res.x = w.x / (-cx);
            res.s = w.s / (-cx);
            break;
        }
        default: break;
    }
    res.status = status;
    return res;
}

} // namespace etmpc::ipm
