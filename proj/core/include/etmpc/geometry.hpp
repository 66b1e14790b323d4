#pragma once

#include <vector>

#include "etmpc/types.hpp"

namespace etmpc {

/// {x : H x <= h}. Zero rows represent the full space.
struct HPolytope {
    Mat H;
    Vec h;

    HPolytope() = default;
    HPolytope(Mat H_, Vec h_);

    int dim() const { return static_cast<int>(H.cols()); }
    int rows() const { return static_cast<int>(H.rows()); }
    bool is_full_space() const { return rows() == 0; }

    static HPolytope full_space(int n);
    static HPolytope inf_ball(int n, double radius);          // ||x||_inf <= radius
    static HPolytope box(const Vec& lo, const Vec& hi);       // lo <= x <= hi
    /// [-I; 1'] theta <= offsets (the estimator's fixed facet template)
    static HPolytope simplex(const Vec& offsets);
};

/// co{vertices}
struct VPolytope {
    std::vector<Vec> vertices;

    VPolytope() = default;
    explicit VPolytope(std::vector<Vec> v);

    int dim() const { return vertices.empty() ? 0 : static_cast<int>(vertices[0].size()); }
    int count() const { return static_cast<int>(vertices.size()); }

    static VPolytope point(const Vec& x) { return VPolytope({x}); }
    /// Componentwise bounding box of the vertex set.
    void bounding_box(Vec& lo, Vec& hi) const;
};

/// {e : e' V e <= beta2}
struct Ellipsoid {
    Mat V;
    double beta2 = 0.0;

    Ellipsoid() = default;
    Ellipsoid(Mat V_, double beta2_);
};

/// Shape matrix with cached factorizations: Cholesky, V^{1/2} and V^{-1/2}
/// (symmetric eigendecomposition, computed once and reused in every
/// tightening row).
class VMetric {
public:
    VMetric() = default;
    explicit VMetric(const Mat& V);

    const Mat& matrix() const { return V_; }
    const Mat& sqrt() const { return sqrt_; }
    const Mat& inv_sqrt() const { return inv_sqrt_; }
    Mat inverse() const { return inv_sqrt_ * inv_sqrt_; }
    int dim() const { return static_cast<int>(V_.rows()); }

    double norm(const Vec& x) const;                  // ||x||_V
    double dual_row_norm(const Vec& H_row) const;     // ||V^{-1/2} H_row'||
    /// Slack of [H]_r z + beta ||V^{-1/2} [H]_r'|| <= h_r.
    double tighten(const Vec& H_row, double h_row, const Vec& z, double beta) const;

private:
    Mat V_, sqrt_, inv_sqrt_;
};

/// (x' V x)^{1/2}; throws on dimension mismatch or indefinite V.
double v_norm(const Vec& x, const Mat& V);

/// Slack of the robustly tightened halfspace: h_row - H_row.z - beta*||V^{-1/2} H_row'||.
/// Nonnegative iff {z} + E(V, beta^2) lies inside the halfspace.
double tighten_halfspace(const Vec& H_row, double h_row, const Vec& z, const Mat& V, double beta);

/// Closed-form vertices for the supported facet templates: the simplex
/// [-I; 1'] (n+1 vertices) and the box [I; -I] / [-I; I] (2^n corners).
VPolytope simplex_vertices(const HPolytope& hp);

bool contains_point(const HPolytope& hp, const Vec& x, double tol = 1e-9);

/// LP feasibility probe (Chebyshev-style relaxation through the conic backend).
bool is_nonempty(const HPolytope& hp, double tol = 1e-9);

/// Membership of x in co{vertices} decided by LP.
bool in_convex_hull(const std::vector<Vec>& vertices, const Vec& x, double tol = 1e-9);

} // namespace etmpc
