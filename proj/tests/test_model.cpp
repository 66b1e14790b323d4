#include <doctest.h>

#include <cmath>
#include <random>

#include "etmpc/errors.hpp"
#include "etmpc/model.hpp"
#include "test_util.hpp"

using namespace etmpc;
using namespace etmpc::testutil;

TEST_SUITE_BEGIN("model");

namespace {

QuadraticBasisModel scalar_quadratic()
{
    Mat A(1, 1), B(1, 1);
    A << 0.5;
    B << 1.0;
    return QuadraticBasisModel(A, B, {0}, 1.5);
}

VPolytope interval(double lo, double hi)
{
    Vec a(1), b(1);
    a << lo;
    b << hi;
    return VPolytope({a, b});
}

} // namespace

TEST_CASE("eval_dynamics examples")
{
    std::mt19937 rng(1);
    Mat A = randn_mat(rng, 3, 3), B = randn_mat(rng, 3, 2);
    LinearModel lin(A, B, 2);
    Vec x = randn(rng, 3), u = randn(rng, 2);
    CHECK((eval_dynamics(lin, x, u, Vec::Zero(2)) - (A * x + B * u)).norm() <= 1e-14);

    auto q = scalar_quadratic();
    Vec x1(1), u1(1), th(1);
    x1 << 2.0;
    u1 << 0.0;
    th << 0.1;
    CHECK(eval_dynamics(q, x1, u1, th)(0) == doctest::Approx(1.4).epsilon(1e-14));

    Vec any_th(1);
    any_th << 0.7;
    CHECK(eval_dynamics(q, Vec::Zero(1), Vec::Zero(1), any_th).norm() == 0.0);
    CHECK_THROWS_AS(eval_dynamics(q, Vec::Zero(2), u1, th), std::invalid_argument);
}

TEST_CASE("eval_dynamics is affine in theta")
{
    std::mt19937 rng(2);
    Mat A = randn_mat(rng, 2, 2), B = randn_mat(rng, 2, 1);
    QuadraticBasisModel q(A, B, {0, 1}, 1.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        Vec x = randn(rng, 2), uu = randn(rng, 1);
        Vec t1 = randn(rng, 2), t2 = randn(rng, 2);
        const double al = u(rng);
        Vec lhs = eval_dynamics(q, x, uu, Vec(al * t1 + (1 - al) * t2));
        Vec rhs = al * eval_dynamics(q, x, uu, t1) + (1 - al) * eval_dynamics(q, x, uu, t2);
        CHECK((lhs - rhs).norm() <= 1e-13);
    }
}

TEST_CASE("closed_loop_jacobians")
{
    std::mt19937 rng(3);
    Mat A = randn_mat(rng, 3, 3), B = randn_mat(rng, 3, 2), K = randn_mat(rng, 2, 3);
    LinearModel lin(A, B, 1);
    for (int k = 0; k < 5; ++k) {
        auto [Phi, Bd] = closed_loop_jacobians(lin, randn(rng, 3), randn(rng, 2), Vec::Zero(1), K);
        CHECK((Phi - (A + B * K)).norm() <= 1e-14);
        CHECK((Bd - B).norm() <= 1e-14);
    }

    auto q = scalar_quadratic();
    Mat Ks(1, 1);
    Ks << -0.2;
    Vec th0 = Vec::Zero(1);
    auto [Phi, Bd] = closed_loop_jacobians(q, randn(rng, 1), randn(rng, 1), th0, Ks);
    CHECK(Phi(0, 0) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(Bd(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("jacobians agree with central finite differences")
{
    std::mt19937 rng(4);
    Mat A = randn_mat(rng, 3, 3), B = randn_mat(rng, 3, 2), K = randn_mat(rng, 2, 3);
    QuadraticBasisModel q(A, B, {0, 2, 1}, 1.5);
    CHECK_NOTHROW(check_basis_model(q));
    const double h = 1e-6;
    for (int s = 0; s < 10; ++s) {
        Vec x0 = randn(rng, 3), v0 = randn(rng, 2), th = 0.1 * randn(rng, 3);
        auto [Phi, Bd] = closed_loop_jacobians(q, x0, v0, th, K);
        for (int c = 0; c < 3; ++c) {
            Vec e = Vec::Zero(3);
            e(c) = h;
            Vec fd = (eval_closed_loop(q, x0 + e, v0, th, K) -
                      eval_closed_loop(q, x0 - e, v0, th, K)) /
                     (2 * h);
            CHECK((fd - Phi.col(c)).norm() <= 1e-6 * std::max(1.0, Phi.col(c).norm()));
        }
        for (int c = 0; c < 2; ++c) {
            Vec e = Vec::Zero(2);
            e(c) = h;
            Vec fd = (eval_closed_loop(q, x0, v0 + e, th, K) -
                      eval_closed_loop(q, x0, v0 - e, th, K)) /
                     (2 * h);
            CHECK((fd - Bd.col(c)).norm() <= 1e-6 * std::max(1.0, Bd.col(c).norm()));
        }
    }
}

TEST_CASE("param_disturbance_vertices")
{
    auto q = scalar_quadratic();
    Mat K = Mat::Zero(1, 1);
    Vec th0 = Vec::Zero(1);

    auto z = param_disturbance_vertices(q, Vec::Ones(1), Vec::Zero(1), th0,
                                        VPolytope::point(th0), K);
    REQUIRE(z.size() == 1);
    CHECK(z[0].norm() == 0.0);

    auto d = param_disturbance_vertices(q, Vec::Ones(1), Vec::Zero(1), th0,
                                        interval(-0.1, 0.1), K);
    REQUIRE(d.size() == 2);
    CHECK(d[0](0) == doctest::Approx(-0.1));
    CHECK(d[1](0) == doctest::Approx(0.1));
}

TEST_CASE("zero-order error is exactly representable in the vertex hull")
{
    std::mt19937 rng(5);
    Mat A = randn_mat(rng, 2, 2), B = randn_mat(rng, 2, 1), K = randn_mat(rng, 1, 2);
    QuadraticBasisModel q(A, B, {1, 0}, 1.5);
    // random simplex Theta
    Vec t1 = 0.1 * randn(rng, 2), t2 = 0.1 * randn(rng, 2), t3 = 0.1 * randn(rng, 2);
    VPolytope Theta({t1, t2, t3});
    Vec th0 = (t1 + t2 + t3) / 3.0;
    Vec x0 = randn(rng, 2), v0 = randn(rng, 1);
    auto dverts = param_disturbance_vertices(q, x0, v0, th0, Theta, K);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        Vec w(3);
        w << u(rng), u(rng), u(rng);
        w /= w.sum();
        Vec th = w(0) * t1 + w(1) * t2 + w(2) * t3;
        Vec delta = eval_closed_loop(q, x0, v0, th, K) - eval_closed_loop(q, x0, v0, th0, K);
        CHECK(in_convex_hull(dverts, delta, 1e-7));
    }
}

TEST_CASE("jacobian_extreme_set: linear model reduces to a single zero pair")
{
    std::mt19937 rng(6);
    LinearModel lin(randn_mat(rng, 2, 2), randn_mat(rng, 2, 1), 1);
    auto cds = lin.jacobian_extreme_set(Vec::Zero(2), Vec::Zero(1), Vec::Zero(1),
                                        VPolytope({Vec::Zero(2)}), nullptr,
                                        VPolytope({Vec::Zero(1)}), Mat::Zero(1, 2));
    REQUIRE(cds.size() == 1);
    CHECK(cds[0].C.norm() == 0.0);
    CHECK(cds[0].D.norm() == 0.0);
}

TEST_CASE("jacobian_extreme_set: scalar quadratic corner evaluation")
{
    auto q = scalar_quadratic();
    Mat K = Mat::Zero(1, 1);
    auto cds = q.jacobian_extreme_set(Vec::Ones(1), Vec::Zero(1), Vec::Zero(1),
                                      interval(-0.5, 0.5), nullptr, interval(-0.1, 0.1), K);
    REQUIRE(cds.size() == 4);
    std::vector<double> vals;
    for (const auto& cd : cds) {
        vals.push_back(cd.C(0, 0));
        CHECK(cd.D.norm() == 0.0);
    }
    std::sort(vals.begin(), vals.end());
    CHECK(vals[0] == doctest::Approx(-0.3));
    CHECK(vals[1] == doctest::Approx(-0.1));
    CHECK(vals[2] == doctest::Approx(0.1));
    CHECK(vals[3] == doctest::Approx(0.3));
}

TEST_CASE("jacobian_extreme_set soundness by sampling")
{
    std::mt19937 rng(7);
    Mat A = randn_mat(rng, 2, 2), B = randn_mat(rng, 2, 1), K = randn_mat(rng, 1, 2);
    QuadraticBasisModel q(A, B, {0, 1}, 1.5);
    Vec x0 = randn(rng, 2), v0 = randn(rng, 1);
    Vec t1 = 0.1 * randn(rng, 2), t2 = 0.1 * randn(rng, 2), t3 = 0.1 * randn(rng, 2);
    VPolytope Theta({t1, t2, t3});
    Vec th0 = (t1 + t2 + t3) / 3.0;
    Vec slo = Vec::Constant(2, -0.4), shi = Vec::Constant(2, 0.4);
    VPolytope S = simplex_vertices(HPolytope::box(slo, shi));
    auto [Phi, Bd] = closed_loop_jacobians(q, x0, v0, th0, K);
    auto cds = q.jacobian_extreme_set(x0, v0, th0, S, nullptr, Theta, K);

    // flatten C matrices for hull membership
    std::vector<Vec> cverts;
    for (const auto& cd : cds) cverts.push_back(Vec(Eigen::Map<const Vec>(cd.C.data(), 4)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        Vec s(2), wmix(3);
        s << slo(0) + u(rng) * 0.8, slo(1) + u(rng) * 0.8;
        wmix << u(rng), u(rng), u(rng);
        wmix /= wmix.sum();
        Vec th = wmix(0) * t1 + wmix(1) * t2 + wmix(2) * t3;
        Vec xs = x0 + s;
        Mat dev = q.basis_dx(0, xs, Vec::Zero(1));
        for (int i = 1; i <= 2; ++i) dev += th(i - 1) * q.basis_dx(i, xs, Vec::Zero(1));
        dev += q.basis_du(0, xs, Vec::Zero(1)) * K;  // du constant across bases
        dev -= Phi;
        CHECK(in_convex_hull(cverts, Vec(Eigen::Map<const Vec>(dev.data(), 4)), 1e-7));
    }
}

TEST_CASE("mean-value containment of the first-order error")
{
    std::mt19937 rng(8);
    Mat A = randn_mat(rng, 2, 2), B = randn_mat(rng, 2, 1), K = randn_mat(rng, 1, 2);
    QuadraticBasisModel q(A, B, {1, 1}, 1.5);
    Vec t1 = 0.05 * randn(rng, 2), t2 = 0.05 * randn(rng, 2), t3 = 0.05 * randn(rng, 2);
    VPolytope Theta({t1, t2, t3});
    Vec th0 = (t1 + t2 + t3) / 3.0;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int outer = 0; outer < 4; ++outer) {
        Vec x0 = randn(rng, 2), v0 = randn(rng, 1);
        Vec slo = Vec::Constant(2, -0.3), shi = Vec::Constant(2, 0.3);
        VPolytope S = simplex_vertices(HPolytope::box(slo, shi));
        VPolytope Vset = simplex_vertices(HPolytope::box(Vec::Constant(1, -0.2), Vec::Constant(1, 0.2)));
        auto [Phi, Bd] = closed_loop_jacobians(q, x0, v0, th0, K);
        auto cds = q.jacobian_extreme_set(x0, v0, th0, S, &Vset, Theta, K);
        std::uniform_real_distribution<double> mix(0.0, 1.0);
        for (int k = 0; k < 50; ++k) {
            Vec s(2), vv(1), wmix(3);
            s << 0.3 * u(rng), 0.3 * u(rng);
            vv << 0.2 * u(rng);
            wmix << mix(rng), mix(rng), mix(rng);
            wmix /= wmix.sum();
            Vec th = wmix(0) * t1 + wmix(1) * t2 + wmix(2) * t3;
            Vec delta1 = eval_closed_loop(q, x0 + s, v0 + vv, th, K) -
                         eval_closed_loop(q, x0, v0, th, K) - Phi * s - Bd * vv;
            std::vector<Vec> pts;
            for (const auto& cd : cds) pts.push_back(Vec(cd.C * s + cd.D * vv));
            CHECK(in_convex_hull(pts, delta1, 1e-7));
        }
    }
}

TEST_CASE("interval fallback bounds a smooth non-polynomial basis")
{
    // f1(x) = sin(x) with conservative Jacobian range [-1, 1]
    struct SinModel : BasisModel {
        SinModel() : BasisModel(1, 1, 1, 1.0) {}
        Vec basis(int i, const Vec& x, const Vec& u) const override
        {
            Vec out(1);
            out(0) = i == 0 ? 0.5 * x(0) + u(0) : std::sin(x(0));
            return out;
        }
        Mat basis_dx(int i, const Vec& x, const Vec&) const override
        {
            Mat out(1, 1);
            out(0, 0) = i == 0 ? 0.5 : std::cos(x(0));
            return out;
        }
        Mat basis_du(int i, const Vec&, const Vec&) const override
        {
            Mat out(1, 1);
            out(0, 0) = i == 0 ? 1.0 : 0.0;
            return out;
        }
        void jacobian_box_bounds(int i, const Vec&, const Vec&, const Vec&, const Vec&,
                                 Mat& dx_lo, Mat& dx_hi, Mat& du_lo, Mat& du_hi) const override
        {
            dx_lo = Mat(1, 1);
            dx_hi = Mat(1, 1);
            du_lo = Mat(1, 1);
            du_hi = Mat(1, 1);
            if (i == 0) {
                dx_lo(0, 0) = dx_hi(0, 0) = 0.5;
                du_lo(0, 0) = du_hi(0, 0) = 1.0;
            } else {
                dx_lo(0, 0) = -1.0;
                dx_hi(0, 0) = 1.0;
                du_lo(0, 0) = du_hi(0, 0) = 0.0;
            }
        }
    } m;
    Mat K(1, 1);
    K << -0.1;
    Vec x0 = Vec::Ones(1), v0 = Vec::Zero(1), th0 = Vec::Constant(1, 0.05);
    auto cds = m.jacobian_extreme_set(x0, v0, th0, interval(-0.5, 0.5), nullptr,
                                      interval(-0.1, 0.1), K);
    CHECK(cds.size() >= 2);
    auto [Phi, Bd] = closed_loop_jacobians(m, x0, v0, th0, K);
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double clo = 1e300, chi = -1e300;
    for (const auto& cd : cds) {
        clo = std::min(clo, cd.C(0, 0));
        chi = std::max(chi, cd.C(0, 0));
    }
    for (int k = 0; k < 300; ++k) {
        const double s = 0.5 * u(rng), th = 0.1 * u(rng);
        Mat dev(1, 1);
        dev(0, 0) = 0.5 + th * std::cos(x0(0) + s) + 1.0 * K(0, 0) - Phi(0, 0);
        CHECK(dev(0, 0) >= clo - 1e-9);
        CHECK(dev(0, 0) <= chi + 1e-9);
    }
}

TEST_CASE("model without interval hooks reports the bound failure")
{
    struct Opaque : BasisModel {
        Opaque() : BasisModel(1, 1, 1, 1.0) {}
        Vec basis(int i, const Vec& x, const Vec& u) const override
        {
            Vec out(1);
            out(0) = i == 0 ? x(0) + u(0) : x(0) * x(0) * x(0);
            return out;
        }
        Mat basis_dx(int i, const Vec& x, const Vec&) const override
        {
            Mat out(1, 1);
            out(0, 0) = i == 0 ? 1.0 : 3.0 * x(0) * x(0);
            return out;
        }
        Mat basis_du(int i, const Vec&, const Vec&) const override
        {
            Mat out(1, 1);
            out(0, 0) = i == 0 ? 1.0 : 0.0;
            return out;
        }
    } m;
    CHECK_THROWS_AS(m.jacobian_extreme_set(Vec::Zero(1), Vec::Zero(1), Vec::Zero(1),
                                           interval(-1, 1), nullptr, interval(-1, 1),
                                           Mat::Zero(1, 1)),
                    ModelError);
}

TEST_CASE("ProblemData validation")
{
    std::mt19937 rng(10);
    ProblemData pd;
    Mat A(1, 1), B(1, 1);
    A << 0.5;
    B << 1.0;
    pd.model = std::make_shared<QuadraticBasisModel>(A, B, std::vector<int>{0}, 1.5);
    pd.X = HPolytope::full_space(1);
    pd.U = HPolytope::inf_ball(1, 1.0);
    pd.Theta0_h = HPolytope::simplex(Vec::Constant(2, 0.1));
    pd.Theta0_v = simplex_vertices(pd.Theta0_h);
    pd.W = VPolytope({Vec::Constant(1, -0.01), Vec::Constant(1, 0.01)});
    pd.S_h = HPolytope::simplex(Vec::Constant(2, 0.5));
    pd.S_v = simplex_vertices(pd.S_h);
    pd.Vset_h = HPolytope::full_space(1);
    pd.Q = Mat::Identity(1, 1);
    pd.R = Mat::Identity(1, 1);
    pd.N = 10;
    pd.Xhat = HPolytope::inf_ball(1, 1.5);
    pd.Uhat = HPolytope::full_space(1);
    CHECK_NOTHROW(pd.validate());

    ProblemData bad = pd;
    bad.N = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = pd;
    bad.Q = -Mat::Identity(1, 1);
    CHECK_THROWS_AS(bad.validate(), NotPositiveDefinite);
}

TEST_SUITE_END();
