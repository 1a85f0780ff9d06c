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

#ifndef SBCE_CHANNEL_MODEL_HPP
#define SBCE_CHANNEL_MODEL_HPP

#include "sbce/common.hpp"
#include "sbce/io.hpp"
#include "sbce/rng.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <utility>

namespace sbce {

/// Parameters of the cluster-based spatial channel model for a uniform
/// linear array with half-wavelength spacing. Channel vectors are drawn
/// conditionally Gaussian: per sample a set of propagation clusters is
/// drawn, the angular power density (a weighted sum of Laplace densities)
/// is integrated against the steering outer product to obtain the sample
/// covariance, and the channel is a complex Gaussian draw from it.
struct SpatialModelParams {
    int num_antennas = 64;          ///< M, array size
    int num_clusters = 3;           ///< propagation clusters per sample
    double angular_spread_deg = 2.0; ///< per-cluster angular spread (std dev)
    int angle_grid_points = 0;      ///< quadrature nodes; 0 means 8 * M

    int grid_points() const { return angle_grid_points > 0 ? angle_grid_points : 8 * num_antennas; }

    void validate() const {
        if (num_antennas < 1)
            throw config_error("spatial model: num_antennas must be >= 1");
        if (num_clusters < 1)
            throw config_error("spatial model: num_clusters must be >= 1");
        if (!(angular_spread_deg > 0.0))
            throw config_error("spatial model: angular_spread_deg must be > 0");
        if (grid_points() < 4 * num_antennas)
            throw config_error("spatial model: angle_grid_points must be >= 4 * num_antennas");
    }
};

/// One realization of cluster central angles (radians, in [0, 2pi)) and
/// their power weights (nonnegative, summing to 1).
struct ClusterDraw {
    VecR angles;
    VecR weights;
};

/// Set of channel vectors used to fit priors, stored column-wise (M x T).
struct ChannelDataset {
    MatC samples;
    std::string model_tag;

    int antennas() const { return static_cast<int>(samples.rows()); }
    long size() const { return static_cast<long>(samples.cols()); }
};

/// Array response of an M-element half-wavelength ULA towards angle
/// `angle` (radians): entry m is exp(-j*pi*m*sin(angle)) / sqrt(M).
/// Unit Euclidean norm for every angle.
inline VecC steering_vector(double angle, int M) {
    if (M < 1)
        throw config_error("steering_vector: M must be >= 1");
    VecC a(M);
    const double s = std::sin(angle);
    const double scale = 1.0 / std::sqrt(static_cast<double>(M));
    for (int m = 0; m < M; ++m) {
        const double phase = -pi * static_cast<double>(m) * s;
        a(m) = scale * cplx(std::cos(phase), std::sin(phase));
    }
    return a;
}

/// Draw cluster angles uniformly over [0, 2pi) and power weights as
/// normalized squared magnitudes of independent zero-mean complex Gaussian
/// path gains (equivalently Dirichlet(1,...,1) distributed).
inline ClusterDraw draw_clusters(const SpatialModelParams& params, Rng& rng) {
    params.validate();
    ClusterDraw d;
    d.angles.resize(params.num_clusters);
    d.weights.resize(params.num_clusters);
    double total = 0.0;
    for (int c = 0; c < params.num_clusters; ++c) {
        d.angles(c) = 2.0 * pi * rng.uniform();
        const cplx gain = rng.complex_gaussian();
        d.weights(c) = std::norm(gain);
        total += d.weights(c);
    }
    if (!(total > 0.0))
        throw numerical_error("spatial model: all cluster gains underflowed to zero");
    d.weights /= total;
    return d;
}

namespace detail {

/// Wrap an angle difference into (-pi, pi].
inline double wrap_angle(double x) {
    x = std::fmod(x + pi, 2.0 * pi);
    if (x < 0.0)
        x += 2.0 * pi;
    return x - pi;
}

} // namespace detail

/// Integrate density(angle) * a(angle) a(angle)^H over [-pi, pi] with a
/// uniform trapezoidal rule, clip negative eigenvalues introduced by the
/// discretization at zero and rescale so that trace = M.
inline MatC angular_covariance(const std::function<double(double)>& density, int M, int grid_points) {
    if (M < 1 || grid_points < 2)
        throw config_error("angular_covariance: need M >= 1 and grid_points >= 2");
    const int G = grid_points;
    const double step = 2.0 * pi / static_cast<double>(G - 1);

    // Accumulate as B * B^H with sqrt-weighted steering columns so the raw
    // quadrature result is PSD by construction.
    MatC weighted(M, G);
    for (int i = 0; i < G; ++i) {
        const double angle = -pi + step * static_cast<double>(i);
        double w = step * density(angle);
        if (i == 0 || i == G - 1)
            w *= 0.5;
        weighted.col(i) = std::sqrt(std::max(w, 0.0)) * steering_vector(angle, M);
    }
    MatC cov = weighted * weighted.adjoint();
    cov = 0.5 * (cov + cov.adjoint().eval());

    const double raw_trace = cov.real().trace();
    if (!(raw_trace > 0.0))
        throw numerical_error("angular_covariance: density is degenerate (zero mass on the grid)");

    Eigen::SelfAdjointEigenSolver<MatC> eig(cov);
    if (eig.info() != Eigen::Success)
        throw numerical_error("angular_covariance: eigendecomposition failed");
    VecR lam = eig.eigenvalues().cwiseMax(0.0);
    const double lam_sum = lam.sum();
    if (!(lam_sum > 0.0))
        throw numerical_error("angular_covariance: covariance collapsed to zero");
    lam *= static_cast<double>(M) / lam_sum;
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().adjoint();
}

/// Spatial covariance for one cluster realization: a weighted sum of
/// Laplace angular densities, periodically wrapped, integrated against the
/// steering outer product. Trace-normalized to M.
inline MatC spatial_covariance(const SpatialModelParams& params, const ClusterDraw& clusters) {
    params.validate();
    if (clusters.angles.size() != clusters.weights.size() || clusters.angles.size() == 0)
        throw config_error("spatial_covariance: inconsistent cluster draw");
    if (!(clusters.weights.sum() > 0.0))
        throw numerical_error("spatial_covariance: cluster weights sum to zero");

    const double spread_rad = params.angular_spread_deg * pi / 180.0;
    const double b = spread_rad / std::sqrt(2.0); // Laplace scale with std dev = spread
    const int C = static_cast<int>(clusters.angles.size());

    auto density = [&](double angle) {
        double g = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = detail::wrap_angle(angle - clusters.angles(c));
            g += clusters.weights(c) / (2.0 * b) * std::exp(-std::abs(d) / b);
        }
        return g;
    };
    return angular_covariance(density, params.num_antennas, params.grid_points());
}

/// Draw h ~ CN(0, cov) through a Hermitian factorization. Cholesky when the
/// matrix is positive definite, eigendecomposition otherwise; eigenvalues
/// below -1e-10 * trace signal an indefinite input and raise an error.
inline VecC draw_channel(const MatC& cov, Rng& rng) {
    const int M = static_cast<int>(cov.rows());
    if (cov.cols() != M || M < 1)
        throw config_error("draw_channel: covariance must be square");

    VecC white(M);
    for (int m = 0; m < M; ++m)
        white(m) = rng.complex_gaussian();

    Eigen::LLT<MatC> llt(cov);
    if (llt.info() == Eigen::Success)
        return llt.matrixL() * white;

    Eigen::SelfAdjointEigenSolver<MatC> eig(cov);
    if (eig.info() != Eigen::Success)
        throw numerical_error("draw_channel: factorization failed");
    const double trace = std::max(cov.real().trace(), 0.0);
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(trace, 1.0))
        throw numerical_error("draw_channel: covariance is indefinite");
    VecR lam = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * lam.cwiseSqrt().asDiagonal() * white;
}

/// Uncorrelated Rayleigh fading: h ~ CN(0, I_M).
inline VecC draw_rayleigh_iid(int M, Rng& rng) {
    if (M < 1)
        throw config_error("draw_rayleigh_iid: M must be >= 1");
    VecC h(M);
    for (int m = 0; m < M; ++m)
        h(m) = rng.complex_gaussian();
    return h;
}

/// Draw one spatial-model channel: fresh clusters, fresh covariance, one
/// Gaussian sample. Returns the channel only; use spatial_covariance for
/// the matrix itself.
inline VecC draw_spatial_channel(const SpatialModelParams& params, Rng& rng) {
    const ClusterDraw clusters = draw_clusters(params, rng);
    return draw_channel(spatial_covariance(params, clusters), rng);
}

// Dataset file format: magic "CHDS", u32 version (= 1), u32 M, u64 T,
// then T*M complex samples as interleaved little-endian float64 (re, im),
// sample-major. No padding.

inline void save_dataset(const std::string& path, const ChannelDataset& ds) {
    if (ds.size() == 0)
        throw io_error("save_dataset: refusing to write an empty dataset");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("save_dataset: cannot open '" + path + "' for writing");
    detail::write_magic(os, "CHDS");
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(ds.antennas()));
    detail::write_u64(os, static_cast<std::uint64_t>(ds.size()));
    for (long t = 0; t < ds.size(); ++t)
        for (int m = 0; m < ds.antennas(); ++m)
            detail::write_c128(os, ds.samples(m, t));
    if (!os)
        throw io_error("save_dataset: write to '" + path + "' failed");
}

inline ChannelDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("load_dataset: cannot open '" + path + "'");
    detail::check_magic(is, "CHDS", "channel dataset");
    const std::uint32_t version = detail::read_u32(is, "dataset version");
    if (version != 1u)
        throw io_error("load_dataset: unsupported dataset version " + std::to_string(version));
    const std::uint32_t M = detail::read_u32(is, "dataset antenna count");
    const std::uint64_t T = detail::read_u64(is, "dataset sample count");
    if (M == 0 || T == 0)
        throw io_error("load_dataset: empty dataset");
    ChannelDataset ds;
    ds.samples.resize(M, static_cast<long>(T));
    for (std::uint64_t t = 0; t < T; ++t)
        for (std::uint32_t m = 0; m < M; ++m)
            ds.samples(m, static_cast<long>(t)) = detail::read_c128(is, "dataset sample");
    return ds;
}

} // namespace sbce

#endif
