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

#ifndef SBCE_SUBSPACE_HPP
#define SBCE_SUBSPACE_HPP

#include "sbce/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <utility>

namespace sbce {

/// Orthonormal basis of the estimated J-dimensional signal subspace plus
/// the eigenvalues it was extracted from, sorted descending. When the J-th
/// and (J+1)-th eigenvalues tie, the subspace is not unique; the estimate
/// is still returned (solver order breaks the tie) with degenerate_tie set.
struct SubspaceEstimate {
    MatC basis;        ///< V, M x J, V^H V = I_J
    VecR eigenvalues;  ///< descending, length J
    bool degenerate_tie = false;

    int dim() const { return static_cast<int>(basis.cols()); }

    /// Orthogonal projector V V^H onto the subspace.
    MatC projector() const { return basis * basis.adjoint(); }
};

/// Sample covariance (1/N) Y Y^H of the received snapshots.
inline MatC sample_covariance(const MatC& Y) {
    if (Y.cols() < 1 || Y.rows() < 1)
        throw config_error("sample_covariance: empty input");
    MatC cov = (Y * Y.adjoint()) / static_cast<double>(Y.cols());
    return 0.5 * (cov + cov.adjoint().eval());
}

namespace detail {

/// Fix each column's global phase so its largest-magnitude entry is real
/// positive. Projectors are phase invariant, this is for reproducibility.
inline void fix_column_phases(MatC& V) {
    for (long c = 0; c < V.cols(); ++c) {
        long idx = 0;
        V.col(c).cwiseAbs().maxCoeff(&idx);
        const cplx pivot = V(idx, c);
        const double mag = std::abs(pivot);
        if (mag > 0.0)
            V.col(c) *= std::conj(pivot) / mag;
    }
}

} // namespace detail

/// Signal subspace estimate: the J dominant eigenvectors of the sample
/// covariance of all received snapshots.
inline SubspaceEstimate estimate_subspace(const MatC& Y, int J) {
    const int M = static_cast<int>(Y.rows());
    const int N = static_cast<int>(Y.cols());
    if (J < 1 || J > M)
        throw config_error("estimate_subspace: need 1 <= J <= M");
    if (N < J)
        throw config_error("estimate_subspace: need at least J snapshots");

    Eigen::SelfAdjointEigenSolver<MatC> eig(sample_covariance(Y));
    if (eig.info() != Eigen::Success)
        throw numerical_error("estimate_subspace: eigendecomposition failed");

    // Eigen sorts ascending; take the trailing J columns in reverse.
    SubspaceEstimate est;
    est.basis.resize(M, J);
    est.eigenvalues.resize(J);
    for (int c = 0; c < J; ++c) {
        est.basis.col(c) = eig.eigenvectors().col(M - 1 - c);
        est.eigenvalues(c) = eig.eigenvalues()(M - 1 - c);
    }
    detail::fix_column_phases(est.basis);

    if (J < M) {
        const double gap = est.eigenvalues(J - 1) - eig.eigenvalues()(M - 1 - J);
        const double scale = std::max(est.eigenvalues(0), 1e-300);
        est.degenerate_tie = gap <= 1e-12 * scale;
    }
    return est;
}

/// Genie subspace: the left singular vectors of the true channel matrix.
/// Stored eigenvalues are those of H H^H (squared singular values).
inline SubspaceEstimate perfect_subspace(const MatC& H) {
    const int J = static_cast<int>(H.cols());
    if (J < 1 || J > H.rows())
        throw config_error("perfect_subspace: need 1 <= J <= M");

    Eigen::JacobiSVD<MatC> svd(H, Eigen::ComputeThinU);
    if (svd.singularValues()(J - 1) <= 1e-12 * svd.singularValues()(0))
        throw numerical_error("perfect_subspace: channel matrix is rank deficient");

    SubspaceEstimate est;
    est.basis = svd.matrixU();
    est.eigenvalues = svd.singularValues().array().square();
    detail::fix_column_phases(est.basis);
    return est;
}

/// Subspace coordinates y' = V^H y and the projected vector VV^H y = V y'.
inline std::pair<VecC, VecC> project(const SubspaceEstimate& sub, const VecC& y) {
    if (y.size() != sub.basis.rows())
        throw config_error("project: dimension mismatch");
    VecC coords = sub.basis.adjoint() * y;
    VecC projected = sub.basis * coords;
    return {std::move(coords), std::move(projected)};
}

} // namespace sbce

#endif
