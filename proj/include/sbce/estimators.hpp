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

#ifndef SBCE_ESTIMATORS_HPP
#define SBCE_ESTIMATORS_HPP

#include "sbce/channel_model.hpp"
#include "sbce/subspace.hpp"
#include "sbce/txrx.hpp"

#include <Eigen/Cholesky>
#include <functional>
#include <string>

namespace sbce {

/// Zero-mean circular Gaussian channel prior h ~ CN(mean, covariance).
/// The mean defaults to zero; the Gaussian estimators below assume it.
struct GaussianPrior {
    MatC covariance;
    VecC mean; // empty means zero

    static GaussianPrior identity(int M) {
        GaussianPrior p;
        p.covariance = MatC::Identity(M, M);
        return p;
    }

    void validate() const {
        const long M = covariance.rows();
        if (covariance.cols() != M || M < 1)
            throw config_error("GaussianPrior: covariance must be square");
        const double scale = std::max(covariance.cwiseAbs().maxCoeff(), 1e-300);
        if ((covariance - covariance.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw numerical_error("GaussianPrior: covariance is not Hermitian");
        Eigen::SelfAdjointEigenSolver<MatC> eig(covariance, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
            throw numerical_error("GaussianPrior: covariance is indefinite");
    }
};

/// Estimates for all users of one block plus per-user squared errors,
/// as reported by the experiment harness.
struct EstimateReport {
    MatC estimates; ///< M x J
    std::string estimator_label;
    VecR per_user_se; ///< ||h_j - h^_j||^2 per user
};

/// Precomputed LMMSE filter W = C (C + noise_var I)^{-1}. The same filter
/// serves the plain estimator (applied to y_p, noise_var = effective pilot
/// noise) and the projected estimator (applied to VV^H y_p with the reduced
/// noise variance); precomputing it once per scenario is what makes the
/// projected variant cheap at runtime.
struct LmmseFilter {
    MatC W;

    static LmmseFilter make(const GaussianPrior& prior, double noise_var) {
        if (!(noise_var > 0.0))
            throw config_error("LmmseFilter: noise_var must be > 0");
        const long M = prior.covariance.rows();
        MatC regularized = prior.covariance + noise_var * MatC::Identity(M, M);
        Eigen::LLT<MatC> llt(regularized);
        if (llt.info() != Eigen::Success)
            throw numerical_error("LmmseFilter: C + noise_var I is not positive definite");
        LmmseFilter f;
        // W = C (C + s I)^{-1}; solve on the right via the Hermitian factor.
        f.W = llt.solve(prior.covariance).adjoint();
        return f;
    }

    VecC apply(const VecC& y) const { return W * y; }
};

/// Least squares from the decorrelated pilot observation: h^ = y_p.
inline VecC ls_estimate(const VecC& pilot_obs) { return pilot_obs; }

/// Subspace maximum likelihood: h^ = V V^H y_p.
inline VecC ml_subspace_estimate(const VecC& pilot_obs, const SubspaceEstimate& sub) {
    if (pilot_obs.size() != sub.basis.rows())
        throw config_error("ml_subspace_estimate: dimension mismatch");
    return sub.basis * (sub.basis.adjoint() * pilot_obs);
}

/// Pilot-only LMMSE h^ = C (C + noise_var I)^{-1} y_p for a Gaussian prior.
/// noise_var is the variance on the decorrelated pilot observation.
inline VecC lmmse_plain(const VecC& pilot_obs, const GaussianPrior& prior, double noise_var) {
    if (pilot_obs.size() != prior.covariance.rows())
        throw config_error("lmmse_plain: dimension mismatch");
    const LmmseFilter f = LmmseFilter::make(prior, noise_var);
    if (prior.mean.size() == 0)
        return f.apply(pilot_obs);
    return prior.mean + f.apply(pilot_obs - prior.mean);
}

/// Reduced-space quantities of the subspace LMMSE for one subspace: the
/// prior compression V^H C V and its regularized factorization. Shared by
/// all users of a coherence block.
struct SubspaceLmmseContext {
    MatC basis;
    MatC reduced; ///< V^H C V
    Eigen::LDLT<MatC> solver;

    SubspaceLmmseContext(const GaussianPrior& prior, const SubspaceEstimate& sub,
                         double noise_var)
        : basis(sub.basis) {
        if (prior.covariance.rows() != sub.basis.rows())
            throw config_error("lmmse_subspace: dimension mismatch");
        const int J = sub.dim();
        reduced = sub.basis.adjoint() * (prior.covariance * sub.basis);
        reduced = 0.5 * (reduced + reduced.adjoint().eval());
        solver.compute(reduced + noise_var * MatC::Identity(J, J));
        if (solver.info() != Eigen::Success)
            throw numerical_error("lmmse_subspace: reduced system is not positive definite");
    }

    VecC estimate(const VecC& pilot_obs) const {
        const VecC coords = basis.adjoint() * pilot_obs;
        return basis * (reduced * solver.solve(coords)).eval();
    }
};

/// Subspace LMMSE: solve in the J-dimensional coordinates with prior
/// V^H C V, lift back with V. Estimate lies in range(V).
inline VecC lmmse_subspace(const VecC& pilot_obs, const SubspaceEstimate& sub,
                           const GaussianPrior& prior, double noise_var) {
    if (pilot_obs.size() != sub.basis.rows())
        throw config_error("lmmse_subspace: dimension mismatch");
    return SubspaceLmmseContext(prior, sub, noise_var).estimate(pilot_obs);
}

/// Projected LMMSE: filter the projected observation VV^H y_p in the full
/// space with the reduced noise covariance noise_var * (J/M) I.
inline VecC lmmse_projected(const VecC& pilot_obs, const SubspaceEstimate& sub,
                            const GaussianPrior& prior, double noise_var, int M, int J) {
    if (pilot_obs.size() != M || sub.basis.rows() != M || sub.dim() != J ||
        prior.covariance.rows() != M)
        throw config_error("lmmse_projected: dimension mismatch");
    const double reduced_noise = noise_var * static_cast<double>(J) / static_cast<double>(M);
    const LmmseFilter f = LmmseFilter::make(prior, reduced_noise);
    return f.apply(sub.basis * (sub.basis.adjoint() * pilot_obs));
}

/// Global sample covariance of a training set, C_s = (1/T) sum h h^H.
inline GaussianPrior sample_cov_prior(const ChannelDataset& dataset) {
    if (dataset.size() < 1)
        throw config_error("sample_cov_prior: empty dataset");
    GaussianPrior prior;
    MatC cov = (dataset.samples * dataset.samples.adjoint()) / static_cast<double>(dataset.size());
    prior.covariance = 0.5 * (cov + cov.adjoint().eval());
    return prior;
}

/// Result of the iterative joint maximum-likelihood baseline.
struct EmResult {
    MatC channels; ///< M x J, last iterate
    int iterations = 0;
    bool converged = false;
};

namespace detail {

/// Complete-data M-step: H minimizing the expected quadratic mismatch given
/// pilot observations, posterior payload means x^ and a shared per-snapshot
/// posterior covariance. With posterior_cov = 0 and x^ = D this is exactly
/// the least-squares solution Y [P, D]^+.
inline MatC em_mstep(const MatC& pilot_rx, const MatC& payload_rx, const MatC& pilots,
                     const MatC& payload_mean, const MatC& posterior_cov) {
    const long n_payload = payload_rx.cols();
    MatC gram = pilots * pilots.adjoint();
    MatC cross = pilot_rx * pilots.adjoint();
    if (n_payload > 0) {
        gram += payload_mean * payload_mean.adjoint() + static_cast<double>(n_payload) * posterior_cov;
        cross += payload_rx * payload_mean.adjoint();
    }
    Eigen::LDLT<MatC> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
        throw numerical_error("em_joint_ml: singular M-step system");
    return ldlt.solve(cross.adjoint()).adjoint();
}

} // namespace detail

/// Semi-blind joint ML baseline: EM alternation treating the payload
/// symbols as CN(0, I/J) latent variables. E-step: Gaussian posterior of
/// x(n) given the current H; M-step: quadratic minimization over H covering
/// pilot and payload terms. Stops on a Frobenius-relative change below tol
/// or after max_iter iterations; the last iterate is returned either way.
///
/// Initialized from the blind subspace estimate (dominant eigenpairs of the
/// received sample covariance, scaled to the implied channel power). The
/// initial column rotation is therefore arbitrary; the pilot term must
/// recover it, which it can no longer do once the payload term dominates at
/// large N. The estimator is non-monotone in the snapshot count.
inline EmResult em_joint_ml(const ReceivedBlock& block, double noise_var, int max_iter = 500,
                            double tol = 1e-6) {
    const int M = static_cast<int>(block.received.rows());
    const int N = static_cast<int>(block.received.cols());
    const int J = static_cast<int>(block.pilots.rows());
    const int N_p = static_cast<int>(block.pilots.cols());
    if (N < N_p)
        throw config_error("em_joint_ml: inconsistent block");
    const int N_d = N - N_p;
    const MatC pilot_rx = block.received.leftCols(N_p);
    const MatC payload_rx = block.received.rightCols(N_d);

    EmResult result;
    {
        const SubspaceEstimate sub = estimate_subspace(block.received, J);
        VecR scales(J);
        for (int j = 0; j < J; ++j)
            scales(j) = std::sqrt(
                std::max(static_cast<double>(J) * (sub.eigenvalues(j) - noise_var), 0.0));
        result.channels = sub.basis * scales.asDiagonal();
    }
    const double inv_J = 1.0 / static_cast<double>(J);

    for (int it = 0; it < max_iter; ++it) {
        MatC payload_mean(J, N_d);
        MatC posterior_cov = MatC::Zero(J, J);
        if (N_d > 0) {
            // Posterior of x ~ CN(0, I/J) given y = Hx + n.
            const MatC& H = result.channels;
            MatC cov_y = inv_J * (H * H.adjoint()) + noise_var * MatC::Identity(M, M);
            Eigen::LLT<MatC> llt(cov_y);
            if (llt.info() != Eigen::Success)
                throw numerical_error("em_joint_ml: observation covariance not positive definite");
            const MatC G = llt.solve(H); // C_y^{-1} H
            payload_mean = inv_J * (G.adjoint() * payload_rx);
            posterior_cov =
                inv_J * (MatC::Identity(J, J) - inv_J * (H.adjoint() * G));
        }
        MatC next = detail::em_mstep(pilot_rx, payload_rx, block.pilots, payload_mean, posterior_cov);
        const double denom = std::max(result.channels.norm(), 1e-300);
        const double change = (next - result.channels).norm() / denom;
        result.channels = std::move(next);
        result.iterations = it + 1;
        if (change < tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

/// Per-user pilot estimator: maps a decorrelated pilot observation and its
/// noise variance to a channel estimate.
using PilotEstimator = std::function<VecC(const VecC&, double)>;

/// Two-stage decision-directed scheme: estimate from pilots, LMMSE-equalize
/// and demap the payload, then re-estimate treating the decoded symbols as
/// additional pilots. Requires a discrete constellation.
inline MatC decision_directed(const PilotEstimator& estimator, const ReceivedBlock& block,
                              Constellation constellation, double noise_var) {
    if (constellation == Constellation::Gaussian)
        throw config_error("decision_directed: needs a discrete constellation");
    const int M = static_cast<int>(block.received.rows());
    const int N = static_cast<int>(block.received.cols());
    const int J = static_cast<int>(block.pilots.rows());
    const int N_p = static_cast<int>(block.pilots.cols());
    const int N_d = N - N_p;
    const double eff_noise = noise_var * static_cast<double>(J) / static_cast<double>(N_p);

    // Stage 1: pilot-only estimates.
    const MatC pilot_obs = decorrelate_pilots(block);
    MatC stage1(M, J);
    for (int j = 0; j < J; ++j)
        stage1.col(j) = estimator(pilot_obs.col(j), eff_noise);

    // LMMSE equalization of the payload under x ~ CN(0, I/J), in the dual
    // J x J form (H^H H + J sigma^2 I)^{-1} H^H y, then symbol decisions.
    MatC decided(J, N_d);
    if (N_d > 0) {
        const std::vector<cplx> points = constellation_points(constellation, J);
        MatC gram = stage1.adjoint() * stage1 +
                    static_cast<double>(J) * noise_var * MatC::Identity(J, J);
        Eigen::LDLT<MatC> ldlt(gram);
        if (ldlt.info() != Eigen::Success)
            throw numerical_error("decision_directed: equalizer system is singular");
        const MatC equalized = ldlt.solve(stage1.adjoint() * block.received.rightCols(N_d));
        for (int n = 0; n < N_d; ++n)
            for (int j = 0; j < J; ++j)
                decided(j, n) = demap_symbol(equalized(j, n), points);
    }

    // Stage 2: treat [P, D^] as the pilot matrix and re-estimate.
    MatC X(J, N);
    X.leftCols(N_p) = block.pilots;
    X.rightCols(N_d) = decided;
    MatC gram2 = X * X.adjoint();
    Eigen::LDLT<MatC> ldlt2(gram2);
    if (ldlt2.info() != Eigen::Success)
        throw numerical_error("decision_directed: decoded symbol matrix is rank deficient");
    const MatC full_obs = ldlt2.solve((block.received * X.adjoint()).adjoint()).adjoint();
    const MatC gram2_inv = ldlt2.solve(MatC::Identity(J, J));

    MatC stage2(M, J);
    for (int j = 0; j < J; ++j) {
        const double user_noise = noise_var * std::max(gram2_inv(j, j).real(), 0.0);
        stage2.col(j) = estimator(full_obs.col(j), std::max(user_noise, 1e-300));
    }
    return stage2;
}

} // namespace sbce

#endif
