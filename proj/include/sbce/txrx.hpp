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

#ifndef SBCE_TXRX_HPP
#define SBCE_TXRX_HPP

#include "sbce/common.hpp"
#include "sbce/rng.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace sbce {

enum class Constellation { Gaussian, Qpsk, Qam16 };

inline std::string to_string(Constellation c) {
    switch (c) {
    case Constellation::Gaussian: return "gaussian";
    case Constellation::Qpsk: return "qpsk";
    case Constellation::Qam16: return "16qam";
    }
    return "?";
}

inline Constellation parse_constellation(const std::string& s) {
    if (s == "gaussian")
        return Constellation::Gaussian;
    if (s == "qpsk")
        return Constellation::Qpsk;
    if (s == "16qam" || s == "qam16")
        return Constellation::Qam16;
    throw config_error("unknown constellation '" + s + "'");
}

/// Uplink scenario: J single-antenna users, M base-station antennas, N
/// snapshots per coherence interval of which the first N_p are pilots.
/// Symbols have per-user power 1/J; SNR is 1/noise_var since channels are
/// normalized to E[||h||^2] = M.
struct ScenarioConfig {
    int num_antennas = 64;  ///< M
    int num_users = 8;      ///< J
    int num_snapshots = 200; ///< N
    int num_pilots = 8;     ///< N_p (defaults to J)
    double noise_var = 1.0; ///< sigma^2
    Constellation constellation = Constellation::Gaussian;
    std::uint64_t seed = 0;

    /// Noise variance seen on the decorrelated pilot observation,
    /// sigma^2 * J / N_p.
    double eff_noise_var() const {
        return noise_var * static_cast<double>(num_users) / static_cast<double>(num_pilots);
    }

    void validate() const {
        if (num_antennas < 1 || num_users < 1)
            throw config_error("scenario: antennas and users must be >= 1");
        if (num_users > num_antennas)
            throw config_error("scenario: users must not exceed antennas");
        if (num_pilots < num_users)
            throw config_error("scenario: pilots must be >= users");
        if (num_snapshots < num_pilots)
            throw config_error("scenario: snapshots must be >= pilots");
        if (!(noise_var > 0.0))
            throw config_error("scenario: noise_var must be > 0");
    }
};

/// Everything produced by one transmission: received symbols, the pilot and
/// payload matrices that generated them, and the true channels (kept for
/// scoring only, never visible to estimators).
struct ReceivedBlock {
    MatC received;      ///< Y, M x N
    MatC pilots;        ///< P, J x N_p
    MatC payload;       ///< D, J x (N - N_p)
    MatC true_channels; ///< H, M x J
};

/// Orthogonal pilots: the first J rows of the N_p-point DFT matrix, scaled
/// so that P P^H = (N_p / J) I_J and every column has unit norm.
inline MatC make_pilots(int J, int N_p) {
    if (J < 1 || N_p < J)
        throw config_error("make_pilots: need N_p >= J >= 1");
    MatC P(J, N_p);
    const double scale = 1.0 / std::sqrt(static_cast<double>(J));
    for (int a = 0; a < J; ++a)
        for (int b = 0; b < N_p; ++b) {
            const double phase = -2.0 * pi * static_cast<double>(a) * static_cast<double>(b) /
                                 static_cast<double>(N_p);
            P(a, b) = scale * cplx(std::cos(phase), std::sin(phase));
        }
    return P;
}

/// Finite constellations with per-symbol power 1/J. Gaussian symbols have
/// no finite point set and are rejected.
inline std::vector<cplx> constellation_points(Constellation c, int J) {
    std::vector<cplx> pts;
    switch (c) {
    case Constellation::Qpsk: {
        const double s = 1.0 / std::sqrt(2.0 * J);
        for (double re : {1.0, -1.0})
            for (double im : {1.0, -1.0})
                pts.emplace_back(s * re, s * im);
        break;
    }
    case Constellation::Qam16: {
        // {-3,-1,1,3}^2 grid, mean power 10 before scaling.
        const double s = 1.0 / std::sqrt(10.0 * J);
        for (double re : {-3.0, -1.0, 1.0, 3.0})
            for (double im : {-3.0, -1.0, 1.0, 3.0})
                pts.emplace_back(s * re, s * im);
        break;
    }
    case Constellation::Gaussian:
        throw config_error("constellation_points: Gaussian symbols have no finite point set");
    }
    return pts;
}

/// Nearest constellation point by Euclidean distance; ties broken by the
/// lowest point index.
inline cplx demap_symbol(cplx x, const std::vector<cplx>& points) {
    int best = 0;
    double best_d = std::norm(x - points[0]);
    for (int i = 1; i < static_cast<int>(points.size()); ++i) {
        const double d = std::norm(x - points[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return points[best];
}

/// Payload symbol matrix, J x (N - N_p), entries with power 1/J each so
/// that E[x x^H] = I_J / J per snapshot.
inline MatC draw_symbols(const ScenarioConfig& config, Rng& rng) {
    config.validate();
    const int J = config.num_users;
    const int N_d = config.num_snapshots - config.num_pilots;
    MatC D(J, N_d);
    if (config.constellation == Constellation::Gaussian) {
        const double s = 1.0 / std::sqrt(static_cast<double>(J));
        for (int n = 0; n < N_d; ++n)
            for (int j = 0; j < J; ++j)
                D(j, n) = s * rng.complex_gaussian();
    } else {
        const std::vector<cplx> pts = constellation_points(config.constellation, J);
        for (int n = 0; n < N_d; ++n)
            for (int j = 0; j < J; ++j)
                D(j, n) = pts[rng.below(pts.size())];
    }
    return D;
}

/// Simulate one coherence interval: Y = H [P, D] + noise with i.i.d.
/// CN(0, sigma^2) noise entries.
inline ReceivedBlock transmit(const MatC& H, const ScenarioConfig& config, Rng& rng) {
    config.validate();
    if (H.rows() != config.num_antennas || H.cols() != config.num_users)
        throw config_error("transmit: channel matrix does not match the scenario dimensions");

    ReceivedBlock block;
    block.true_channels = H;
    block.pilots = make_pilots(config.num_users, config.num_pilots);
    block.payload = draw_symbols(config, rng);

    MatC X(config.num_users, config.num_snapshots);
    X.leftCols(config.num_pilots) = block.pilots;
    X.rightCols(config.num_snapshots - config.num_pilots) = block.payload;

    block.received = H * X;
    const double noise_std = std::sqrt(config.noise_var);
    for (long n = 0; n < block.received.cols(); ++n)
        for (long m = 0; m < block.received.rows(); ++m)
            block.received(m, n) += noise_std * rng.complex_gaussian();
    return block;
}

/// Decorrelate the pilot part: Y_p = Y'_p P^+ with P^+ = P^H (P P^H)^{-1}.
/// Column j is user j's pilot observation y_p = h_j + n with noise variance
/// sigma^2 * J / N_p per entry.
inline MatC decorrelate_pilots(const ReceivedBlock& block) {
    const int J = static_cast<int>(block.pilots.rows());
    const int N_p = static_cast<int>(block.pilots.cols());
    if (N_p < J || block.received.cols() < N_p)
        throw config_error("decorrelate_pilots: inconsistent block");

    const MatC gram = block.pilots * block.pilots.adjoint();
    Eigen::LDLT<MatC> ldlt(gram);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().real().array() <= 1e-12 * gram.real().trace() / J).any())
        throw numerical_error("decorrelate_pilots: pilot matrix is rank deficient");

    // Y'_p P^H (P P^H)^{-1}, evaluated as a solve against the Gram matrix.
    const MatC lifted = block.received.leftCols(N_p) * block.pilots.adjoint();
    return ldlt.solve(lifted.adjoint()).adjoint();
}

} // namespace sbce

#endif
