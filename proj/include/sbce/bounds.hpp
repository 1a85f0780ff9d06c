// SPDX-License-Identifier: Apache-2.0
//
// sbce - semi-blind MMSE channel estimation for massive MIMO
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SBCE_BOUNDS_HPP
#define SBCE_BOUNDS_HPP

#include "sbce/common.hpp"
#include "sbce/subspace.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>

namespace sbce {

/// Closed-form MSE of the four estimators under perfect subspace knowledge,
/// for an i.i.d. Rayleigh prior. Values are full-vector MSEs (divide by M
/// for NMSE). proj <= min(plain, ml, sub) always.
struct IidMseTable {
    double plain;
    double ml;
    double proj;
    double sub;
};

/// Pilot-only LMMSE MSE, sum_i rho_i s / (rho_i + s).
inline double mse_plain_closed_form(double noise_var, const VecR& rho) {
    return (rho.array() * noise_var / (rho.array() + noise_var)).sum();
}

/// Subspace ML MSE, J * sigma^2 (prior independent).
inline double mse_ml_closed_form(int J, double noise_var) {
    return static_cast<double>(J) * noise_var;
}

/// Projected LMMSE MSE, sum_i rho_i s / ((M/J) rho_i + s).
inline double mse_proj_closed_form(int M, int J, double noise_var, const VecR& rho) {
    const double ratio = static_cast<double>(M) / static_cast<double>(J);
    return (rho.array() * noise_var / (ratio * rho.array() + noise_var)).sum();
}

/// Subspace LMMSE MSE, derived for the identity spectrum only:
/// sigma^2 (M sigma^2 + J) / (1 + sigma^2)^2. Other spectra are rejected.
inline double mse_sub_closed_form_iid(int M, int J, double noise_var, const VecR& rho) {
    if (rho.size() != M || !((rho.array() - 1.0).abs() < 1e-12).all())
        throw config_error(
            "mse_sub_closed_form_iid: subspace closed form is only available for an identity spectrum");
    const double s = noise_var;
    return s * (static_cast<double>(M) * s + static_cast<double>(J)) / ((1.0 + s) * (1.0 + s));
}

/// All four closed forms for a given prior spectrum. The subspace entry is
/// only derived for rho = 1; requesting the table with any other spectrum
/// raises the unsupported-case error.
inline IidMseTable mse_closed_forms(int M, int J, double noise_var, const VecR& rho) {
    if (rho.size() != M)
        throw config_error("mse_closed_forms: spectrum length must equal M");
    IidMseTable t;
    t.plain = mse_plain_closed_form(noise_var, rho);
    t.ml = mse_ml_closed_form(J, noise_var);
    t.proj = mse_proj_closed_form(M, J, noise_var, rho);
    t.sub = mse_sub_closed_form_iid(M, J, noise_var, rho);
    return t;
}

inline IidMseTable iid_mse_table(int M, int J, double noise_var) {
    return mse_closed_forms(M, J, noise_var, VecR::Ones(M));
}

/// Large-system limits (N -> inf, M/N -> alpha): the projected LMMSE MSE
/// tends to J sigma^2, below the deterministic CRB limit (1+alpha) J sigma^2.
struct Theorem1Limits {
    double lim_mse_proj;
    double crb_det_limit;
};

inline Theorem1Limits theorem1_asymptotics(int J, double noise_var, double alpha) {
    if (!(alpha > 0.0))
        throw config_error("theorem1_asymptotics: alpha must be > 0");
    Theorem1Limits lims;
    lims.lim_mse_proj = static_cast<double>(J) * noise_var;
    lims.crb_det_limit = (1.0 + alpha) * lims.lim_mse_proj;
    return lims;
}

/// Upper-left M x M block of the deterministic Bayesian CRB for i.i.d.
/// Rayleigh fading, and its trace (the per-user MSE lower bound).
struct BcrbDeterministic {
    MatC block;
    double trace;
};

namespace detail {

inline MatC kron(const MatC& A, const MatC& B) {
    MatC out(A.rows() * B.rows(), A.cols() * B.cols());
    for (long i = 0; i < A.rows(); ++i)
        for (long j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

} // namespace detail

/// sigma^2 ((X* X^T) kron P_H_perp + (P* P^T) kron P_H + sigma^2 I)^{-1},
/// where X (J x N) holds pilots and payload symbols, P is its first
/// n_pilots columns and P_H the channel subspace projector. The returned
/// block is the upper-left M x M part, corresponding to the first user.
inline BcrbDeterministic bcrb_deterministic_iid(const MatC& X, int n_pilots, const MatC& projector,
                                                double noise_var) {
    const int J = static_cast<int>(X.rows());
    const int M = static_cast<int>(projector.rows());
    if (projector.cols() != M || n_pilots < 1 || n_pilots > X.cols())
        throw config_error("bcrb_deterministic_iid: inconsistent dimensions");
    if (!(noise_var > 0.0))
        throw config_error("bcrb_deterministic_iid: noise_var must be > 0");

    const MatC P = X.leftCols(n_pilots);
    const MatC proj_perp = MatC::Identity(M, M) - projector;
    MatC info = detail::kron((X.conjugate() * X.transpose()).eval(), proj_perp) +
                detail::kron((P.conjugate() * P.transpose()).eval(), projector);
    info.diagonal().array() += noise_var;

    // Hermitian PD by construction; only the first M columns of the inverse
    // are needed for the upper-left block.
    Eigen::LLT<MatC> llt(0.5 * (info + info.adjoint().eval()));
    if (llt.info() != Eigen::Success)
        throw numerical_error("bcrb_deterministic_iid: information matrix not positive definite");
    MatC rhs = MatC::Zero(static_cast<long>(J) * M, M);
    rhs.topRows(M).setIdentity();

    BcrbDeterministic out;
    out.block = noise_var * llt.solve(rhs).topRows(M);
    out.trace = out.block.real().trace();
    return out;
}

/// Lower bound on the probability that the projected LMMSE estimates from
/// the estimated and the true subspace differ (in expected squared norm
/// over symbols and noise) by at most epsilon, given N snapshots. Evaluated
/// for the first user's channel. The bound can be arbitrarily negative (it
/// is vacuous then); it tends to 1 as N or epsilon grow.
inline double theorem2_bound(const MatC& H, double noise_var, long N, double epsilon,
                             const MatC& filter) {
    const int M = static_cast<int>(H.rows());
    const int J = static_cast<int>(H.cols());
    if (J < 1 || J > M || filter.rows() != M || filter.cols() != M)
        throw config_error("theorem2_bound: inconsistent dimensions");
    if (!(epsilon > 0.0) || N < 1)
        throw config_error("theorem2_bound: need epsilon > 0 and N >= 1");

    Eigen::JacobiSVD<MatC> svd_H(H, Eigen::ComputeThinU);
    const VecR lambda = svd_H.singularValues().array().square(); // eigenvalues of H H^H
    if (lambda(J - 1) <= 1e-12 * lambda(0))
        throw numerical_error("theorem2_bound: channel matrix is rank deficient, bound undefined");

    // Coordinates of the first user's channel in the singular basis.
    const VecC s = svd_H.matrixU().adjoint() * H.col(0);
    const double s_max_sq = s.cwiseAbs().maxCoeff() * s.cwiseAbs().maxCoeff();

    const double trace_cov_y =
        lambda.sum() / static_cast<double>(J) + static_cast<double>(M) * noise_var;
    const double k_sq = noise_var * (noise_var + trace_cov_y);

    Eigen::JacobiSVD<MatC> svd_W(filter);
    const double w_max = svd_W.singularValues()(0);
    const double lambda_max_WHW = w_max * w_max;

    const double sum_term = ((s_max_sq + 2.0 * noise_var) / lambda.array().square()).sum();
    const double deficit = 4.0 * k_sq * static_cast<double>(M - J) * lambda_max_WHW * sum_term /
                           (static_cast<double>(J) * static_cast<double>(J) *
                            static_cast<double>(N) * epsilon);
    return 1.0 - deficit;
}

} // namespace sbce

#endif
