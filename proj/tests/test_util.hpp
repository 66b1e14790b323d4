#pragma once

#include <algorithm>
#include <memory>
#include <random>

#include "etmpc/model.hpp"
#include "etmpc/types.hpp"

namespace etmpc::testutil {

inline Vec randn(std::mt19937& rng, int n)
{
    std::normal_distribution<double> g;
    return Vec::NullaryExpr(n, [&] { return g(rng); });
}

inline Mat randn_mat(std::mt19937& rng, int r, int c)
{
    std::normal_distribution<double> g;
    return Mat::NullaryExpr(r, c, [&] { return g(rng); });
}

inline Mat random_spd(std::mt19937& rng, int n, double cond_floor = 0.1)
{
    Mat A = randn_mat(rng, n, n);
    return Mat(A * A.transpose() + cond_floor * Mat::Identity(n, n));
}

/// Uniform sample in the ellipsoid {e : e'Ve <= beta^2}.
inline Vec sample_in_ellipsoid(std::mt19937& rng, const Mat& Vinv_sqrt, double beta)
{
    const int n = static_cast<int>(Vinv_sqrt.rows());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec dir = randn(rng, n);
    dir /= dir.norm();
    const double r = std::pow(u(rng), 1.0 / n);
    return beta * r * (Vinv_sqrt * dir);
}

/// Sample exactly on the boundary {e : e'Ve = beta^2}.
inline Vec sample_on_ellipsoid(std::mt19937& rng, const Mat& Vinv_sqrt, double beta)
{
    const int n = static_cast<int>(Vinv_sqrt.rows());
    Vec dir = randn(rng, n);
    dir /= dir.norm();
    return beta * (Vinv_sqrt * dir);
}

/// Deterministic quadratic-benchmark-style instance with the standard sets:
/// X full space, ||u||_inf <= 1, W = Bw * (+-0.01 corners), Theta0 a small
/// simplex, S the 0.5-simplex, Vset the full space.
inline ProblemData make_quadratic_pd(unsigned seed, int nx, int nu, int ntheta,
                                     double spectral_radius = 0.9, bool distinct_basis = false)
{
    std::mt19937 rng(seed);
    Mat A = randn_mat(rng, nx, nx);
    const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
    A *= spectral_radius / rho;
    Mat B = randn_mat(rng, nx, nu);
    std::vector<int> jidx(ntheta);
    for (int i = 0; i < ntheta; ++i) jidx[i] = static_cast<int>(rng() % nx);
    if (distinct_basis) {
        std::vector<int> perm(nx);
        for (int i = 0; i < nx; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < ntheta; ++i) jidx[i] = perm[i % nx];
    }

    ProblemData pd;
    pd.model = std::make_shared<QuadraticBasisModel>(A, B, jidx, 1.5);
    pd.X = HPolytope::full_space(nx);
    pd.U = HPolytope::inf_ball(nu, 1.0);

    Vec center = 0.01 * randn(rng, ntheta);
    const double a = 0.03 / ntheta;
    Vec offsets(ntheta + 1);
    offsets.head(ntheta) = Vec::Constant(ntheta, a) - center;
    offsets(ntheta) = a + center.sum();
    pd.Theta0_h = HPolytope::simplex(offsets);
    pd.Theta0_v = simplex_vertices(pd.Theta0_h);

    const int nw = 2;
    Mat Bw = randn_mat(rng, nx, nw);
    std::vector<Vec> wverts;
    for (int mask = 0; mask < (1 << nw); ++mask) {
        Vec wh(nw);
        for (int i = 0; i < nw; ++i) wh(i) = (mask >> i) & 1 ? 0.01 : -0.01;
        wverts.push_back(Vec(Bw * wh));
    }
    pd.W = VPolytope(wverts);

    pd.S_h = HPolytope::simplex(Vec::Constant(nx + 1, 0.5));
    pd.S_v = simplex_vertices(pd.S_h);
    pd.Vset_h = HPolytope::full_space(nu);
    pd.Q = Mat::Identity(nx, nx);
    pd.R = Mat::Identity(nu, nu);
    pd.N = 10;
    pd.Xhat = HPolytope::inf_ball(nx, 1.5);
    pd.Uhat = HPolytope::full_space(nu);
    return pd;
}

} // namespace etmpc::testutil
