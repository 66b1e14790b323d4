#pragma once

#include <vector>

#include "etmpc/geometry.hpp"
#include "etmpc/model.hpp"

namespace etmpc {

/// One-step ellipsoidal contraction certificate: with lambda from
/// compute_lambda, every disturbance vertex w and every Jacobian-deviation
/// vertex satisfy ||(Phi+C)e + w||_V <= (lambda beta^2 + sigma^2)^{1/2} for all
/// e with ||e||_V <= beta.
struct TubeCertificate {
    double lambda = 0.0;
    double sigma = 0.0;
    Mat V;
};

/// Psi = (V^{-1} - w w' / sigma^2)^{-1}; throws SigmaTooSmall when the inverse
/// loses positive definiteness (the disturbance set is too large for sigma).
Mat psi_matrix(const Mat& V, const Vec& w, double sigma);
Mat psi_matrix(const VMetric& V, const Vec& w, double sigma);

/// lambda = max_{j,r} ||(Phi + C^j) V^{-1/2}||^2_{Psi^r} with
/// ||M||^2_Psi = lambda_max(M' Psi M).
double compute_lambda(const Mat& Phi, const std::vector<CDPair>& cd_pairs, const VMetric& V,
                      const std::vector<Vec>& w_vertices, double sigma);

/// (lambda beta^2 + sigma^2)^{1/2} + cz_dv_delta0_norm — the reference
/// right-hand side of the tube recursion for checking optimized sequences.
double beta_rhs(const TubeCertificate& cert, double beta, double cz_dv_delta0_norm);

} // namespace etmpc
