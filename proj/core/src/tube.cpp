#include "etmpc/tube.hpp"

#include <cmath>

#include "etmpc/errors.hpp"

namespace etmpc {

Mat psi_matrix(const VMetric& V, const Vec& w, double sigma)
{
    if (w.size() != V.dim()) throw std::invalid_argument("psi_matrix: dimension mismatch");
    if (w.norm() == 0.0) return V.matrix();
    if (sigma <= 0.0) throw SigmaTooSmall("psi_matrix: sigma must be positive when w != 0");
    Mat M = V.inverse() - (w * w.transpose()) / (sigma * sigma);
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success)
        throw SigmaTooSmall("psi_matrix: V^{-1} - w w'/sigma^2 is not positive definite");
    return llt.solve(Mat::Identity(V.dim(), V.dim()));
}

Mat psi_matrix(const Mat& V, const Vec& w, double sigma)
{
    return psi_matrix(VMetric(V), w, sigma);
}

double compute_lambda(const Mat& Phi, const std::vector<CDPair>& cd_pairs, const VMetric& V,
                      const std::vector<Vec>& w_vertices, double sigma)
{
    if (cd_pairs.empty() || w_vertices.empty())
        throw std::invalid_argument("compute_lambda: empty vertex lists");
    std::vector<Mat> psis;
    psis.reserve(w_vertices.size());
    for (const Vec& w : w_vertices) psis.push_back(psi_matrix(V, w, sigma));

    double lambda = 0.0;
    for (const CDPair& cd : cd_pairs) {
        const Mat M = (Phi + cd.C) * V.inv_sqrt();
        for (const Mat& psi : psis) {
            Mat Q = M.transpose() * psi * M;
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Q + Q.transpose()),
                                                  Eigen::EigenvaluesOnly);
            lambda = std::max(lambda, es.eigenvalues().maxCoeff());
        }
    }
    return std::max(lambda, 0.0);
}

double beta_rhs(const TubeCertificate& cert, double beta, double cz_dv_delta0_norm)
{
    if (beta < 0.0) throw std::invalid_argument("beta_rhs: negative beta");
    return std::sqrt(cert.lambda * beta * beta + cert.sigma * cert.sigma) + cz_dv_delta0_norm;
}

} // namespace etmpc
