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

#ifndef SBCE_GMM_HPP
#define SBCE_GMM_HPP

#include "sbce/channel_model.hpp"
#include "sbce/estimators.hpp"
#include "sbce/io.hpp"
#include "sbce/rng.hpp"
#include "sbce/subspace.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>
#include <vector>

namespace sbce {

/// Zero-mean complex Gaussian mixture fitted to channel data. Component
/// means are pinned at zero; the model is fully described by the mixing
/// weights and the component covariances.
struct GmmPrior {
    VecR weights;                 ///< K nonnegative, summing to 1
    std::vector<MatC> covariances; ///< K Hermitian PSD M x M

    int components() const { return static_cast<int>(weights.size()); }
    int antennas() const {
        return covariances.empty() ? 0 : static_cast<int>(covariances.front().rows());
    }

    void validate() const {
        if (components() < 1 || static_cast<int>(covariances.size()) != components())
            throw config_error("GmmPrior: inconsistent component count");
        if (std::abs(weights.sum() - 1.0) > 1e-10 || weights.minCoeff() < 0.0)
            throw config_error("GmmPrior: weights must be a probability vector");
        for (const MatC& C : covariances)
            if (C.rows() != antennas() || C.cols() != antennas())
                throw config_error("GmmPrior: component dimension mismatch");
    }
};

/// Posterior component probabilities for one observation. underflow_fallback
/// marks the degenerate case where no component produced a finite density
/// and a uniform vector was substituted.
struct Responsibilities {
    VecR probs;
    bool underflow_fallback = false;
};

namespace detail {

/// log N_C(y; 0, S) given the lower Cholesky factor of S.
inline double log_density_chol(const Eigen::LLT<MatC>& llt, const VecC& y) {
    const long M = y.size();
    const VecC white = llt.matrixL().solve(y);
    double log_det = 0.0;
    for (long i = 0; i < M; ++i)
        log_det += 2.0 * std::log(llt.matrixL()(i, i).real());
    return -static_cast<double>(M) * std::log(pi) - log_det - white.squaredNorm();
}

/// Normalize log responsibilities with max subtraction; returns the uniform
/// fallback when every entry is non-finite.
inline Responsibilities normalize_log_probs(VecR log_probs) {
    const int K = static_cast<int>(log_probs.size());
    Responsibilities out;
    double top = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k)
        if (std::isfinite(log_probs(k)))
            top = std::max(top, log_probs(k));
    if (!std::isfinite(top)) {
        out.probs = VecR::Constant(K, 1.0 / K);
        out.underflow_fallback = true;
        return out;
    }
    out.probs.resize(K);
    for (int k = 0; k < K; ++k)
        out.probs(k) = std::isfinite(log_probs(k)) ? std::exp(log_probs(k) - top) : 0.0;
    out.probs /= out.probs.sum();
    return out;
}

} // namespace detail

/// Posterior p(k | y) with component covariances C_k + noise_cov, evaluated
/// in the log domain.
inline Responsibilities responsibilities(const GmmPrior& prior, const VecC& observation,
                                         const MatC& noise_cov) {
    const int K = prior.components();
    const int M = prior.antennas();
    if (observation.size() != M || noise_cov.rows() != M || noise_cov.cols() != M)
        throw config_error("responsibilities: dimension mismatch");

    VecR log_probs(K);
    for (int k = 0; k < K; ++k) {
        if (prior.weights(k) <= 0.0) {
            log_probs(k) = -std::numeric_limits<double>::infinity();
            continue;
        }
        Eigen::LLT<MatC> llt(prior.covariances[k] + noise_cov);
        log_probs(k) = llt.info() == Eigen::Success
                           ? std::log(prior.weights(k)) + detail::log_density_chol(llt, observation)
                           : -std::numeric_limits<double>::infinity();
    }
    return detail::normalize_log_probs(std::move(log_probs));
}

/// Precomputed per-component LMMSE filters and density factors for a fixed
/// isotropic noise level. Serves both the pilot-only estimator (noise_var =
/// effective pilot noise) and the projected estimator (noise_var reduced by
/// J/M); the filters do not depend on the subspace, so one bank is shared
/// across all trials of a sweep point.
class GmmFilterBank {
  public:
    GmmFilterBank(const GmmPrior& prior, double noise_var) : noise_var_(noise_var) {
        if (!(noise_var > 0.0))
            throw config_error("GmmFilterBank: noise_var must be > 0");
        const int K = prior.components();
        const int M = prior.antennas();
        filters_.reserve(K);
        chol_.reserve(K);
        log_weights_.resize(K);
        for (int k = 0; k < K; ++k) {
            MatC S = prior.covariances[k] + noise_var * MatC::Identity(M, M);
            Eigen::LLT<MatC> llt(S);
            if (llt.info() != Eigen::Success)
                throw numerical_error("GmmFilterBank: component covariance is not PSD");
            filters_.push_back(llt.solve(prior.covariances[k]).adjoint());
            chol_.push_back(std::move(llt));
            log_weights_(k) =
                prior.weights(k) > 0.0 ? std::log(prior.weights(k))
                                       : -std::numeric_limits<double>::infinity();
        }
    }

    Responsibilities responsibilities(const VecC& y) const {
        const int K = static_cast<int>(filters_.size());
        VecR log_probs(K);
        for (int k = 0; k < K; ++k)
            log_probs(k) = log_weights_(k) + detail::log_density_chol(chol_[k], y);
        return detail::normalize_log_probs(std::move(log_probs));
    }

    /// Responsibility-weighted sum of per-component LMMSE estimates.
    VecC estimate(const VecC& y) const {
        const Responsibilities resp = responsibilities(y);
        VecC out = VecC::Zero(y.size());
        for (int k = 0; k < static_cast<int>(filters_.size()); ++k)
            if (resp.probs(k) > 0.0)
                out += resp.probs(k) * (filters_[k] * y);
        return out;
    }

    double noise_var() const { return noise_var_; }

  private:
    std::vector<MatC> filters_;
    std::vector<Eigen::LLT<MatC>> chol_;
    VecR log_weights_;
    double noise_var_;
};

/// Per-subspace context for the subspace GMM estimator. The reduced
/// matrices V^H C_k V depend on the subspace, so this is rebuilt per
/// coherence block and shared by the users inside it.
class GmmSubspaceContext {
  public:
    GmmSubspaceContext(const GmmPrior& prior, const SubspaceEstimate& sub, double noise_var)
        : basis_(sub.basis) {
        const int K = prior.components();
        const int J = sub.dim();
        if (prior.antennas() != sub.basis.rows())
            throw config_error("GmmSubspaceContext: dimension mismatch");
        reduced_.reserve(K);
        chol_.reserve(K);
        log_weights_.resize(K);
        for (int k = 0; k < K; ++k) {
            const MatC CV = prior.covariances[k] * sub.basis;
            MatC B = sub.basis.adjoint() * CV;
            B = 0.5 * (B + B.adjoint().eval());
            Eigen::LLT<MatC> llt(B + noise_var * MatC::Identity(J, J));
            if (llt.info() != Eigen::Success)
                throw numerical_error("GmmSubspaceContext: reduced covariance is not PSD");
            reduced_.push_back(std::move(B));
            chol_.push_back(std::move(llt));
            log_weights_(k) =
                prior.weights(k) > 0.0 ? std::log(prior.weights(k))
                                       : -std::numeric_limits<double>::infinity();
        }
    }

    /// Estimate from the pilot observation of one user: responsibilities
    /// and per-component filters both act on y' = V^H y_p.
    VecC estimate(const VecC& pilot_obs) const {
        const VecC coords = basis_.adjoint() * pilot_obs;
        VecR log_probs(static_cast<int>(reduced_.size()));
        for (int k = 0; k < static_cast<int>(reduced_.size()); ++k)
            log_probs(k) = log_weights_(k) + detail::log_density_chol(chol_[k], coords);
        const Responsibilities resp = detail::normalize_log_probs(std::move(log_probs));

        VecC combined = VecC::Zero(coords.size());
        for (int k = 0; k < static_cast<int>(reduced_.size()); ++k)
            if (resp.probs(k) > 0.0)
                combined += resp.probs(k) * (reduced_[k] * chol_[k].solve(coords));
        return basis_ * combined;
    }

  private:
    MatC basis_;
    std::vector<MatC> reduced_;
    std::vector<Eigen::LLT<MatC>> chol_;
    VecR log_weights_;
};

/// Subspace GMM estimator: per-component subspace LMMSE combined with
/// responsibilities evaluated in the subspace coordinates.
inline VecC gmm_subspace_estimate(const VecC& pilot_obs, const SubspaceEstimate& sub,
                                  const GmmPrior& prior, double noise_var) {
    if (pilot_obs.size() != sub.basis.rows())
        throw config_error("gmm_subspace_estimate: dimension mismatch");
    return GmmSubspaceContext(prior, sub, noise_var).estimate(pilot_obs);
}

/// Projected GMM estimator: per-component projected LMMSE on VV^H y_p with
/// the reduced noise covariance noise_var * (J/M) I.
inline VecC gmm_projected_estimate(const VecC& pilot_obs, const SubspaceEstimate& sub,
                                   const GmmPrior& prior, double noise_var, int M, int J) {
    if (pilot_obs.size() != M || sub.basis.rows() != M || sub.dim() != J)
        throw config_error("gmm_projected_estimate: dimension mismatch");
    const double reduced_noise = noise_var * static_cast<double>(J) / static_cast<double>(M);
    const GmmFilterBank bank(prior, reduced_noise);
    return bank.estimate(sub.basis * (sub.basis.adjoint() * pilot_obs));
}

/// Pilot-only GMM estimator on the raw pilot observation.
inline VecC gmm_pilot_estimate(const VecC& pilot_obs, const GmmPrior& prior, double eff_noise_var) {
    if (pilot_obs.size() != prior.antennas())
        throw config_error("gmm_pilot_estimate: dimension mismatch");
    return GmmFilterBank(prior, eff_noise_var).estimate(pilot_obs);
}

namespace detail {

/// Run f(k) for k in [0, n) on up to `threads` workers. Each index writes
/// disjoint state, so scheduling does not affect the result.
template <class F> inline void parallel_over(int n, int threads, F&& f) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int k = 0; k < n; ++k)
            f(k);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int k = next.fetch_add(1);
            if (k >= n)
                break;
            f(k);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
}

/// k-means++ on the sample energies ||h_t||^2: seeding plus a few Lloyd
/// rounds, returning a hard assignment used to seed the EM responsibilities.
inline std::vector<int> kmeanspp_energy_init(const VecR& energy, int K, Rng& rng) {
    const long T = energy.size();
    std::vector<double> centers;
    centers.reserve(K);
    centers.push_back(energy(static_cast<long>(rng.below(T))));
    VecR dist2 = (energy.array() - centers[0]).square();
    while (static_cast<int>(centers.size()) < K) {
        const double total = dist2.sum();
        double pick = rng.uniform() * total;
        long chosen = T - 1;
        for (long t = 0; t < T; ++t) {
            pick -= dist2(t);
            if (pick <= 0.0) {
                chosen = t;
                break;
            }
        }
        centers.push_back(energy(chosen));
        dist2 = dist2.cwiseMin((energy.array() - centers.back()).square().matrix());
    }

    std::vector<int> assign(T, 0);
    for (int round = 0; round < 10; ++round) {
        for (long t = 0; t < T; ++t) {
            int best = 0;
            double best_d = std::abs(energy(t) - centers[0]);
            for (int k = 1; k < K; ++k) {
                const double d = std::abs(energy(t) - centers[k]);
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            assign[t] = best;
        }
        for (int k = 0; k < K; ++k) {
            double sum = 0.0;
            long count = 0;
            for (long t = 0; t < T; ++t)
                if (assign[t] == k) {
                    sum += energy(t);
                    ++count;
                }
            if (count > 0)
                centers[k] = sum / static_cast<double>(count);
        }
    }
    return assign;
}

} // namespace detail

/// Fit a zero-mean complex GMM with the EM algorithm. Responsibilities are
/// seeded from k-means++ on the sample energies; each M-step applies
/// diagonal loading of 1e-6 * trace(C_k)/M to keep components invertible.
/// A component whose weight collapses below 1e-8 is re-seeded once from the
/// global statistics; a second collapse aborts the fit.
inline GmmPrior fit_gmm(const ChannelDataset& dataset, int K, int max_iter, double tol, Rng& rng,
                        std::vector<double>* loglik_trace = nullptr, int threads = 1) {
    const long T = dataset.size();
    const int M = dataset.antennas();
    if (K < 1 || T < K)
        throw config_error("fit_gmm: need at least K samples");
    const MatC& S = dataset.samples;

    GmmPrior prior;
    prior.weights = VecR::Zero(K);
    prior.covariances.assign(K, MatC::Zero(M, M));

    // Hard initial responsibilities from the energy clustering.
    MatR resp = MatR::Zero(T, K);
    {
        const VecR energy = S.colwise().squaredNorm().real().transpose();
        const std::vector<int> assign = detail::kmeanspp_energy_init(energy, K, rng);
        for (long t = 0; t < T; ++t)
            resp(t, assign[t]) = 1.0;
    }

    bool reseeded_once = false;

    auto m_step = [&]() {
        VecR counts = resp.colwise().sum();
        for (int k = 0; k < K; ++k) {
            if (counts(k) / static_cast<double>(T) < 1e-8) {
                if (reseeded_once)
                    throw numerical_error("fit_gmm: component collapsed twice");
                reseeded_once = true;
                // Re-seed with uniform responsibilities; the covariance
                // update below then lands on the global sample covariance.
                counts(k) = 1.0;
                resp.col(k).setConstant(1.0 / static_cast<double>(T));
            }
        }
        detail::parallel_over(K, threads, [&](int k) {
            const VecR w = resp.col(k).cwiseSqrt();
            const MatC weighted = S * w.asDiagonal();
            MatC C = (weighted * weighted.adjoint()) / counts(k);
            C = 0.5 * (C + C.adjoint().eval());
            const double loading = 1e-6 * C.real().trace() / static_cast<double>(M);
            C.diagonal().array() += loading;
            prior.covariances[k] = std::move(C);
        });
        prior.weights = counts / counts.sum();
    };
    m_step();

    double prev_loglik = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        // E-step, vectorized per component over the whole dataset.
        MatR log_probs(T, K);
        std::atomic<bool> chol_failed{false};
        detail::parallel_over(K, threads, [&](int k) {
            Eigen::LLT<MatC> llt(prior.covariances[k]);
            if (llt.info() != Eigen::Success) {
                chol_failed = true;
                return;
            }
            double log_det = 0.0;
            for (int i = 0; i < M; ++i)
                log_det += 2.0 * std::log(llt.matrixL()(i, i).real());
            const MatC white = llt.matrixL().solve(S);
            const double log_w = prior.weights(k) > 0.0
                                     ? std::log(prior.weights(k))
                                     : -std::numeric_limits<double>::infinity();
            log_probs.col(k) =
                (-white.colwise().squaredNorm().real().transpose().array() - log_det -
                 M * std::log(pi) + log_w)
                    .matrix();
        });
        if (chol_failed)
            throw numerical_error("fit_gmm: component covariance lost positive definiteness");
        double loglik = 0.0;
        for (long t = 0; t < T; ++t) {
            const double top = log_probs.row(t).maxCoeff();
            const double denom = (log_probs.row(t).array() - top).exp().sum();
            loglik += top + std::log(denom);
            resp.row(t) = (log_probs.row(t).array() - top - std::log(denom)).exp();
        }
        m_step();

        if (loglik_trace)
            loglik_trace->push_back(loglik);
        const double rel_change = std::abs(loglik - prev_loglik) /
                                  std::max(std::abs(loglik), 1.0);
        prev_loglik = loglik;
        if (it > 0 && rel_change < tol)
            break;
    }
    prior.validate();
    return prior;
}

// Prior file format: magic "GMMP", u32 version (= 1), u32 M, u32 K, then K
// weights (float64) and K row-major M x M complex covariances, all
// little-endian.

inline void save_gmm(const std::string& path, const GmmPrior& prior) {
    prior.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("save_gmm: cannot open '" + path + "' for writing");
    detail::write_magic(os, "GMMP");
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(prior.antennas()));
    detail::write_u32(os, static_cast<std::uint32_t>(prior.components()));
    for (int k = 0; k < prior.components(); ++k)
        detail::write_f64(os, prior.weights(k));
    for (int k = 0; k < prior.components(); ++k)
        for (int i = 0; i < prior.antennas(); ++i)
            for (int j = 0; j < prior.antennas(); ++j)
                detail::write_c128(os, prior.covariances[k](i, j));
    if (!os)
        throw io_error("save_gmm: write to '" + path + "' failed");
}

inline GmmPrior load_gmm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("load_gmm: cannot open '" + path + "'");
    detail::check_magic(is, "GMMP", "GMM prior");
    const std::uint32_t version = detail::read_u32(is, "GMM version");
    if (version != 1u)
        throw io_error("load_gmm: unsupported version " + std::to_string(version));
    const std::uint32_t M = detail::read_u32(is, "GMM antenna count");
    const std::uint32_t K = detail::read_u32(is, "GMM component count");
    if (M == 0 || K == 0)
        throw io_error("load_gmm: empty prior");
    GmmPrior prior;
    prior.weights.resize(K);
    for (std::uint32_t k = 0; k < K; ++k)
        prior.weights(k) = detail::read_f64(is, "GMM weight");
    prior.covariances.assign(K, MatC(M, M));
    for (std::uint32_t k = 0; k < K; ++k)
        for (std::uint32_t i = 0; i < M; ++i)
            for (std::uint32_t j = 0; j < M; ++j)
                prior.covariances[k](i, j) = detail::read_c128(is, "GMM covariance entry");
    prior.validate();
    return prior;
}

} // namespace sbce

#endif
