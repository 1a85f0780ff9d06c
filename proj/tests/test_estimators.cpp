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

#include <catch2/catch_amalgamated.hpp>

#include "sbce/channel_model.hpp"
#include "sbce/estimators.hpp"
#include "sbce/subspace.hpp"
#include "sbce/txrx.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace sbce;

namespace {

struct MonteCarlo {
    double ml = 0.0, plain = 0.0, sub = 0.0, proj = 0.0;
    double ml_se = 0.0, plain_se = 0.0, sub_se = 0.0, proj_se = 0.0;
};

/// Per-user NMSE of the four Gaussian-prior estimators with a perfect
/// subspace, i.i.d. Rayleigh channels.
MonteCarlo run_iid_perfect(int M, int J, double noise_var, int trials, std::uint64_t seed) {
    const GaussianPrior prior = GaussianPrior::identity(M);
    const LmmseFilter plain_filter = LmmseFilter::make(prior, noise_var);
    const LmmseFilter proj_filter =
        LmmseFilter::make(prior, noise_var * static_cast<double>(J) / static_cast<double>(M));
    const double noise_std = std::sqrt(noise_var);

    VecR ml(trials), plain(trials), sub(trials), proj(trials);
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::stream(seed, t);
        MatC H(M, J);
        for (int j = 0; j < J; ++j)
            H.col(j) = draw_rayleigh_iid(M, rng);
        const SubspaceEstimate V = perfect_subspace(H);
        MatC Yp = H;
        for (int j = 0; j < J; ++j)
            for (int m = 0; m < M; ++m)
                Yp(m, j) += noise_std * rng.complex_gaussian();

        double e_ml = 0.0, e_plain = 0.0, e_sub = 0.0, e_proj = 0.0;
        const SubspaceLmmseContext sub_ctx(prior, V, noise_var);
        for (int j = 0; j < J; ++j) {
            const VecC y = Yp.col(j);
            const VecC h = H.col(j);
            e_ml += (ml_subspace_estimate(y, V) - h).squaredNorm();
            e_plain += (plain_filter.apply(y) - h).squaredNorm();
            e_sub += (sub_ctx.estimate(y) - h).squaredNorm();
            e_proj += (proj_filter.apply(V.basis * (V.basis.adjoint() * y)) - h).squaredNorm();
        }
        const double denom = static_cast<double>(M) * J;
        ml(t) = e_ml / denom;
        plain(t) = e_plain / denom;
        sub(t) = e_sub / denom;
        proj(t) = e_proj / denom;
    }
    auto mean_se = [&](const VecR& v, double& mean, double& se) {
        mean = v.mean();
        se = std::sqrt((v.array() - mean).square().sum() / (trials - 1.0) / trials);
    };
    MonteCarlo mc;
    mean_se(ml, mc.ml, mc.ml_se);
    mean_se(plain, mc.plain, mc.plain_se);
    mean_se(sub, mc.sub, mc.sub_se);
    mean_se(proj, mc.proj, mc.proj_se);
    return mc;
}

} // namespace

TEST_CASE("least squares is the identity on the pilot observation") {
    Rng rng(3);
    const VecC y = oracles::random_matrix(6, 1, rng);
    REQUIRE(ls_estimate(y) == y);

    // MSE at unit effective noise equals M.
    const int M = 16, trials = 10000;
    double mse = 0.0;
    for (int t = 0; t < trials; ++t) {
        const VecC h = draw_rayleigh_iid(M, rng);
        VecC y_p = h;
        for (int m = 0; m < M; ++m)
            y_p(m) += rng.complex_gaussian();
        mse += (ls_estimate(y_p) - h).squaredNorm() / trials;
    }
    REQUIRE(mse == Catch::Approx(static_cast<double>(M)).epsilon(0.03));
}

TEST_CASE("subspace ML estimator") {
    Rng rng(5);

    SECTION("exact recovery inside the subspace") {
        const MatC H = oracles::random_matrix(12, 3, rng);
        const SubspaceEstimate V = perfect_subspace(H);
        const VecC h = H.col(0);
        REQUIRE((ml_subspace_estimate(h, V) - h).norm() < 1e-10);
    }

    SECTION("full-dimensional subspace reduces to least squares") {
        const MatC H = oracles::random_matrix(5, 5, rng);
        const SubspaceEstimate V = perfect_subspace(H);
        const VecC y = oracles::random_matrix(5, 1, rng);
        REQUIRE((ml_subspace_estimate(y, V) - y).norm() < 1e-10);
    }

    SECTION("dimension mismatch") {
        const MatC H = oracles::random_matrix(6, 2, rng);
        REQUIRE_THROWS_AS(ml_subspace_estimate(VecC::Zero(5), perfect_subspace(H)),
                          config_error);
    }
}

TEST_CASE("closed-form NMSE fixed point at M=64, J=8, unit noise") {
    const MonteCarlo mc = run_iid_perfect(64, 8, 1.0, 10000, 1001);
    REQUIRE(mc.ml == Catch::Approx(0.125).epsilon(0.02));
    REQUIRE(mc.plain == Catch::Approx(0.5).epsilon(0.02));
    REQUIRE(mc.sub == Catch::Approx(0.28125).epsilon(0.02));
    REQUIRE(mc.proj == Catch::Approx(8.0 / 72.0).epsilon(0.02));
}

TEST_CASE("projected LMMSE at sigma^2 = 0.1") {
    const MonteCarlo mc = run_iid_perfect(64, 8, 0.1, 10000, 1003);
    REQUIRE(mc.proj == Catch::Approx(0.8 / 64.8).epsilon(0.03));
}

TEST_CASE("plain LMMSE edge cases") {
    Rng rng(7);
    const int M = 6;
    const VecC y = oracles::random_matrix(M, 1, rng);

    GaussianPrior prior;
    prior.covariance = oracles::random_psd(M, rng) + MatC::Identity(M, M);
    REQUIRE((lmmse_plain(y, prior, 1e-12) - y).norm() < 1e-8 * y.norm());

    prior.covariance = MatC::Zero(M, M);
    REQUIRE(lmmse_plain(y, prior, 0.5).norm() == 0.0);
}

TEST_CASE("subspace and projected LMMSE coincide with plain when J = M") {
    Rng rng(9);
    const int M = 6;
    const MatC H = oracles::random_matrix(M, M, rng);
    const SubspaceEstimate V = perfect_subspace(H);
    GaussianPrior prior;
    prior.covariance = oracles::random_psd(M, rng);
    const VecC y = oracles::random_matrix(M, 1, rng);
    const double noise_var = 0.8;

    const VecC plain = lmmse_plain(y, prior, noise_var);
    REQUIRE((lmmse_subspace(y, V, prior, noise_var) - plain).norm() < 1e-10);
    REQUIRE((lmmse_projected(y, V, prior, noise_var, M, M) - plain).norm() < 1e-10);
}

TEST_CASE("subspace LMMSE approaches the ML estimate as noise vanishes") {
    Rng rng(11);
    const MatC H = oracles::random_matrix(10, 3, rng);
    const SubspaceEstimate V = perfect_subspace(H);
    GaussianPrior prior;
    prior.covariance = oracles::random_psd(10, rng) + MatC::Identity(10, 10);
    const VecC y = oracles::random_matrix(10, 1, rng);
    const VecC ml = ml_subspace_estimate(y, V);
    REQUIRE((lmmse_subspace(y, V, prior, 1e-12) - ml).norm() < 1e-7 * ml.norm());
}

TEST_CASE("projected LMMSE leaves the channel intact in the noiseless limit") {
    Rng rng(13);
    const int M = 8, J = 2;
    const MatC H = oracles::random_matrix(M, J, rng);
    const SubspaceEstimate V = perfect_subspace(H);
    GaussianPrior prior;
    prior.covariance = oracles::random_psd(M, rng) + MatC::Identity(M, M);
    const VecC h = H.col(0);
    REQUIRE((lmmse_projected(h, V, prior, 1e-12, M, J) - h).norm() < 1e-8 * h.norm());
}

TEST_CASE("MSE ordering: projected below plain, ML and subspace") {
    for (double noise_var : {10.0, 1.0, 0.1}) {
        const MonteCarlo mc = run_iid_perfect(16, 4, noise_var, 10000, 2000 + int(noise_var * 10));
        REQUIRE(mc.proj <= mc.plain + 3.0 * (mc.proj_se + mc.plain_se));
        REQUIRE(mc.proj <= mc.ml + 3.0 * (mc.proj_se + mc.ml_se));
        REQUIRE(mc.proj <= mc.sub + 3.0 * (mc.proj_se + mc.sub_se));
    }
}

TEST_CASE("every LMMSE variant is linear in the observation") {
    Rng rng(17);
    const int M = 8, J = 3;
    const MatC H = oracles::random_matrix(M, J, rng);
    const SubspaceEstimate V = perfect_subspace(H);
    GaussianPrior prior;
    prior.covariance = oracles::random_psd(M, rng);
    const double noise_var = 0.6;
    const VecC y = oracles::random_matrix(M, 1, rng);
    const cplx alpha = rng.complex_gaussian();

    auto check_linear = [&](auto&& f) {
        const VecC a = f(VecC(alpha * y));
        const VecC b = alpha * f(y);
        REQUIRE((a - b).norm() <= 1e-12 * std::max(1.0, b.norm()));
    };
    check_linear([&](const VecC& v) { return ls_estimate(v); });
    check_linear([&](const VecC& v) { return ml_subspace_estimate(v, V); });
    check_linear([&](const VecC& v) { return lmmse_plain(v, prior, noise_var); });
    check_linear([&](const VecC& v) { return lmmse_subspace(v, V, prior, noise_var); });
    check_linear([&](const VecC& v) { return lmmse_projected(v, V, prior, noise_var, M, J); });
}

TEST_CASE("cached filter paths equal the one-shot operations") {
    Rng rng(19);
    const int M = 8, J = 3;
    const MatC H = oracles::random_matrix(M, J, rng);
    const SubspaceEstimate V = perfect_subspace(H);
    GaussianPrior prior;
    prior.covariance = oracles::random_psd(M, rng);
    const double noise_var = 0.7;
    const VecC y = oracles::random_matrix(M, 1, rng);

    const LmmseFilter plain = LmmseFilter::make(prior, noise_var);
    REQUIRE((plain.apply(y) - lmmse_plain(y, prior, noise_var)).norm() < 1e-13);

    const SubspaceLmmseContext sc(prior, V, noise_var);
    REQUIRE((sc.estimate(y) - lmmse_subspace(y, V, prior, noise_var)).norm() < 1e-13);
}

TEST_CASE("sample covariance prior") {
    Rng rng(23);

    const VecC h = oracles::random_matrix(5, 1, rng);
    ChannelDataset single;
    single.samples = h;
    REQUIRE((sample_cov_prior(single).covariance - h * h.adjoint()).norm() < 1e-14);

    ChannelDataset big;
    const int M = 16;
    const long T = 150000;
    big.samples.resize(M, T);
    for (long t = 0; t < T; ++t)
        big.samples.col(t) = draw_rayleigh_iid(M, rng);
    const GaussianPrior prior = sample_cov_prior(big);
    REQUIRE((prior.covariance - MatC::Identity(M, M)).norm() <
            0.05 * MatC::Identity(M, M).norm());

    ChannelDataset repeated;
    repeated.samples.resize(5, 10);
    for (int t = 0; t < 10; ++t)
        repeated.samples.col(t) = h;
    Eigen::SelfAdjointEigenSolver<MatC> eig(sample_cov_prior(repeated).covariance);
    int rank = 0;
    for (int i = 0; i < 5; ++i)
        if (eig.eigenvalues()(i) > 1e-10 * eig.eigenvalues().maxCoeff())
            ++rank;
    REQUIRE(rank == 1);

    ChannelDataset empty;
    empty.samples.resize(4, 0);
    REQUIRE_THROWS_AS(sample_cov_prior(empty), config_error);
}

TEST_CASE("EM M-step with known payload is the least-squares solution") {
    Rng rng(29);
    const int M = 6, J = 2, N = 12;
    ScenarioConfig sc;
    sc.num_antennas = M;
    sc.num_users = J;
    sc.num_pilots = J;
    sc.num_snapshots = N;
    sc.noise_var = 1e-300;
    const MatC H = oracles::random_matrix(M, J, rng);
    const ReceivedBlock block = transmit(H, sc, rng);

    MatC X(J, N);
    X.leftCols(J) = block.pilots;
    X.rightCols(N - J) = block.payload;
    const MatC mstep = detail::em_mstep(block.received.leftCols(J),
                                        block.received.rightCols(N - J), block.pilots,
                                        block.payload, MatC::Zero(J, J));
    // Noiseless Y = H X with full row-rank X: the normal equations return H.
    REQUIRE((mstep - H).norm() < 1e-9 * H.norm());
}

TEST_CASE("EM with pilots only reduces to least squares after one iteration") {
    Rng rng(31);
    const int M = 8, J = 3;
    ScenarioConfig sc;
    sc.num_antennas = M;
    sc.num_users = J;
    sc.num_pilots = J;
    sc.num_snapshots = J;
    sc.noise_var = 0.5;
    const MatC H = oracles::random_matrix(M, J, rng);
    const ReceivedBlock block = transmit(H, sc, rng);
    const EmResult one = em_joint_ml(block, sc.noise_var, 1, 1e-6);
    REQUIRE((one.channels - decorrelate_pilots(block)).norm() < 1e-10);
    const EmResult full = em_joint_ml(block, sc.noise_var);
    REQUIRE(full.converged);
    REQUIRE((full.channels - decorrelate_pilots(block)).norm() < 1e-10);
}

namespace {

/// Observed-data log-likelihood of the semi-blind model: exact pilot
/// term plus the Gaussian-marginal payload term.
double observed_loglik(const ReceivedBlock& block, const MatC& H, double noise_var) {
    const int M = static_cast<int>(block.received.rows());
    const int N = static_cast<int>(block.received.cols());
    const int N_p = static_cast<int>(block.pilots.cols());
    const int J = static_cast<int>(block.pilots.rows());
    double ll = 0.0;
    for (int n = 0; n < N_p; ++n) {
        const VecC r = block.received.col(n) - H * block.pilots.col(n);
        ll += -M * std::log(pi * noise_var) - r.squaredNorm() / noise_var;
    }
    MatC cov_y = (H * H.adjoint()) / static_cast<double>(J) +
                 noise_var * MatC::Identity(M, M);
    Eigen::LLT<MatC> llt(cov_y);
    double log_det = 0.0;
    for (int i = 0; i < M; ++i)
        log_det += 2.0 * std::log(llt.matrixL()(i, i).real());
    for (int n = N_p; n < N; ++n) {
        const VecC white = llt.matrixL().solve(block.received.col(n));
        ll += -M * std::log(pi) - log_det - white.squaredNorm();
    }
    return ll;
}

} // namespace

TEST_CASE("EM iterations do not decrease the observed-data likelihood") {
    Rng rng(37);
    const int M = 4, J = 2, N = 20;
    ScenarioConfig sc;
    sc.num_antennas = M;
    sc.num_users = J;
    sc.num_pilots = J;
    sc.num_snapshots = N;
    sc.noise_var = 1.0;
    const MatC H = oracles::random_matrix(M, J, rng);
    const ReceivedBlock block = transmit(H, sc, rng);

    double prev = -std::numeric_limits<double>::infinity();
    for (int iters = 1; iters <= 25; ++iters) {
        const EmResult r = em_joint_ml(block, sc.noise_var, iters, 0.0);
        const double ll = observed_loglik(block, r.channels, sc.noise_var);
        REQUIRE(ll >= prev - 1e-9 * std::abs(prev));
        prev = ll;
    }
}

TEST_CASE("EM reports non-convergence with the last iterate") {
    Rng rng(41);
    const int M = 16, J = 4, N = 100;
    ScenarioConfig sc;
    sc.num_antennas = M;
    sc.num_users = J;
    sc.num_pilots = J;
    sc.num_snapshots = N;
    sc.noise_var = 1.0;
    const MatC H = oracles::random_matrix(M, J, rng);
    const ReceivedBlock block = transmit(H, sc, rng);
    const EmResult r = em_joint_ml(block, sc.noise_var, 3, 0.0);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.iterations == 3);
    REQUIRE(r.channels.allFinite());
}

TEST_CASE("decision-directed re-estimation") {
    Rng rng(43);
    const int M = 8, J = 2, N = 30;
    auto ls = [](const VecC& y, double) { return y; };

    SECTION("noiseless stage two is exact") {
        ScenarioConfig sc;
        sc.num_antennas = M;
        sc.num_users = J;
        sc.num_pilots = J;
        sc.num_snapshots = N;
        sc.noise_var = 1e-300;
        sc.constellation = Constellation::Qpsk;
        const MatC H = oracles::random_matrix(M, J, rng);
        const ReceivedBlock block = transmit(H, sc, rng);
        const MatC out = decision_directed(ls, block, Constellation::Qpsk, sc.noise_var);
        REQUIRE((out - H).norm() < 1e-8 * H.norm());
    }

    SECTION("correct decisions equal full-pilot re-estimation") {
        ScenarioConfig sc;
        sc.num_antennas = M;
        sc.num_users = J;
        sc.num_pilots = J;
        sc.num_snapshots = N;
        sc.noise_var = 0.01; // high SNR: all decisions correct w.h.p.
        sc.constellation = Constellation::Qpsk;
        const MatC H = oracles::random_matrix(M, J, rng);
        const ReceivedBlock block = transmit(H, sc, rng);
        const MatC out = decision_directed(ls, block, Constellation::Qpsk, sc.noise_var);

        // Manual full-pilot decorrelation with the true payload.
        MatC X(J, N);
        X.leftCols(J) = block.pilots;
        X.rightCols(N - J) = block.payload;
        Eigen::LDLT<MatC> ldlt(X * X.adjoint());
        const MatC full = ldlt.solve((block.received * X.adjoint()).adjoint()).adjoint();
        REQUIRE((out - full).norm() < 1e-10 * full.norm());
        REQUIRE((out - H).norm() / H.norm() < 0.2);
    }

    SECTION("gaussian payload is rejected") {
        ScenarioConfig sc;
        sc.num_antennas = M;
        sc.num_users = J;
        sc.num_pilots = J;
        sc.num_snapshots = N;
        sc.noise_var = 1.0;
        const MatC H = oracles::random_matrix(M, J, rng);
        const ReceivedBlock block = transmit(H, sc, rng);
        REQUIRE_THROWS_AS(decision_directed(ls, block, Constellation::Gaussian, 1.0),
                          config_error);
    }
}

TEST_CASE("gaussian prior validation") {
    Rng rng(47);
    GaussianPrior prior;
    prior.covariance = oracles::random_matrix(4, 4, rng); // not Hermitian
    REQUIRE_THROWS_AS(prior.validate(), numerical_error);
    prior.covariance = MatC::Identity(4, 4);
    prior.covariance(2, 2) = -1.0;
    REQUIRE_THROWS_AS(prior.validate(), numerical_error);
    prior = GaussianPrior::identity(4);
    REQUIRE_NOTHROW(prior.validate());
}
