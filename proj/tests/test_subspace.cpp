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
#include "sbce/subspace.hpp"
#include "sbce/txrx.hpp"
#include "support/oracles.hpp"

using namespace sbce;

TEST_CASE("sample covariance equals the naive accumulation") {
    Rng rng(31);

    const VecC y = oracles::random_matrix(5, 1, rng);
    REQUIRE((sample_covariance(y) - y * y.adjoint()).norm() < 1e-14);

    const MatC Y = oracles::random_matrix(8, 50, rng);
    REQUIRE((sample_covariance(Y) - oracles::naive_sample_covariance(Y)).norm() < 1e-12);

    REQUIRE_THROWS_AS(sample_covariance(MatC(4, 0)), config_error);
}

TEST_CASE("dominant eigenvectors recover structured subspaces") {
    SECTION("diagonal spectrum") {
        MatC Y = MatC::Zero(4, 4);
        Y(0, 0) = 2.0 * std::sqrt(3.0);
        Y(1, 1) = 2.0 * std::sqrt(2.0);
        Y(2, 2) = 2.0;
        const SubspaceEstimate sub = estimate_subspace(Y, 2); // C = diag(3,2,1,0)
        REQUIRE(sub.eigenvalues(0) == Catch::Approx(3.0));
        REQUIRE(sub.eigenvalues(1) == Catch::Approx(2.0));
        MatC target = MatC::Zero(4, 4);
        target(0, 0) = target(1, 1) = 1.0;
        REQUIRE((sub.projector() - target).norm() < 1e-12);
    }

    SECTION("noiseless factorization is recovered exactly") {
        Rng rng(33);
        const MatC H = oracles::random_matrix(16, 3, rng);
        const MatC X = oracles::random_matrix(3, 40, rng);
        const SubspaceEstimate sub = estimate_subspace(H * X, 3);
        REQUIRE(((MatC::Identity(16, 16) - sub.projector()) * H).norm() < 1e-8);
    }

    SECTION("alignment under noise at 0 dB") {
        Rng rng(35);
        const int M = 64, J = 8, N = 200;
        ScenarioConfig sc;
        sc.num_antennas = M;
        sc.num_users = J;
        sc.num_pilots = J;
        sc.num_snapshots = N;
        sc.noise_var = 1.0;
        double alignment = 0.0;
        const int trials = 100;
        for (int t = 0; t < trials; ++t) {
            MatC H(M, J);
            for (int j = 0; j < J; ++j)
                H.col(j) = draw_rayleigh_iid(M, rng);
            const ReceivedBlock block = transmit(H, sc, rng);
            const SubspaceEstimate est = estimate_subspace(block.received, J);
            const SubspaceEstimate truth = perfect_subspace(H);
            alignment +=
                (est.projector() * truth.projector()).real().trace() / static_cast<double>(J);
        }
        REQUIRE(alignment / trials >= 0.9);
    }

    SECTION("argument validation") {
        Rng rng(37);
        const MatC Y = oracles::random_matrix(4, 8, rng);
        REQUIRE_THROWS_AS(estimate_subspace(Y, 5), config_error);
        REQUIRE_THROWS_AS(estimate_subspace(oracles::random_matrix(4, 2, rng), 3), config_error);
    }
}

TEST_CASE("projector invariants hold for estimated subspaces") {
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        const MatC Y = oracles::random_matrix(10, 30, rng);
        const SubspaceEstimate sub = estimate_subspace(Y, 4);
        REQUIRE((sub.basis.adjoint() * sub.basis - MatC::Identity(4, 4)).norm() < 1e-10);
        const MatC P = sub.projector();
        REQUIRE((P * P - P).norm() < 1e-10);
        REQUIRE((P - P.adjoint()).norm() < 1e-10);
        for (int j = 0; j + 1 < 4; ++j)
            REQUIRE(sub.eigenvalues(j) >= sub.eigenvalues(j + 1));
    }
}

TEST_CASE("subspace estimate is invariant to right-unitary factors") {
    Rng rng(43);
    for (int i = 0; i < 5; ++i) {
        const MatC Y = oracles::random_matrix(5, 20, rng);
        Eigen::HouseholderQR<MatC> qr(oracles::random_matrix(20, 20, rng));
        const MatC U = qr.householderQ();
        const SubspaceEstimate a = estimate_subspace(Y, 2);
        const SubspaceEstimate b = estimate_subspace(Y * U, 2);
        REQUIRE((a.projector() - b.projector()).norm() < 1e-8);
    }
}

TEST_CASE("eigenvalues match a characteristic-polynomial oracle on 4x4") {
    Rng rng(47);
    for (int i = 0; i < 10; ++i) {
        const MatC Y = oracles::random_matrix(4, 12, rng);
        const SubspaceEstimate sub = estimate_subspace(Y, 4);
        const VecR oracle = oracles::hermitian_eigenvalues_charpoly(sample_covariance(Y));
        REQUIRE((sub.eigenvalues - oracle).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("phase fixing makes the basis reproducible") {
    Rng rng(53);
    const MatC Y = oracles::random_matrix(6, 25, rng);
    const SubspaceEstimate a = estimate_subspace(Y, 3);
    const SubspaceEstimate b = estimate_subspace(Y, 3);
    REQUIRE(a.basis == b.basis);
    for (int c = 0; c < 3; ++c) {
        long idx = 0;
        a.basis.col(c).cwiseAbs().maxCoeff(&idx);
        REQUIRE(a.basis(idx, c).imag() == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(a.basis(idx, c).real() > 0.0);
    }
}

TEST_CASE("degenerate eigenvalue ties are flagged") {
    MatC Y = MatC::Identity(4, 4) * 2.0; // C = I, fourfold tie
    const SubspaceEstimate sub = estimate_subspace(Y, 2);
    REQUIRE(sub.degenerate_tie);

    MatC Y2 = MatC::Zero(4, 4);
    Y2(0, 0) = 4.0;
    Y2(1, 1) = 2.0;
    const SubspaceEstimate sub2 = estimate_subspace(Y2, 2);
    REQUIRE_FALSE(sub2.degenerate_tie);
}

TEST_CASE("perfect subspace from the true channel matrix") {
    Rng rng(59);

    SECTION("orthogonal columns are reproduced") {
        MatC H = MatC::Zero(6, 2);
        H(0, 0) = 2.0;
        H(3, 1) = cplx(0.0, 1.5);
        const SubspaceEstimate sub = perfect_subspace(H);
        REQUIRE((sub.projector() * H - H).norm() < 1e-12);
    }

    SECTION("single user projector") {
        const VecC h = oracles::random_matrix(5, 1, rng);
        const SubspaceEstimate sub = perfect_subspace(h);
        const MatC expected = h * h.adjoint() / h.squaredNorm();
        REQUIRE((sub.projector() - expected).norm() < 1e-12);
    }

    SECTION("projector idempotent for random H") {
        const MatC H = oracles::random_matrix(8, 3, rng);
        const MatC P = perfect_subspace(H).projector();
        REQUIRE((P * P - P).norm() < 1e-12);
    }

    SECTION("rank deficiency rejected") {
        MatC H(6, 2);
        H.col(0) = oracles::random_matrix(6, 1, rng);
        H.col(1) = 2.0 * H.col(0);
        REQUIRE_THROWS_AS(perfect_subspace(H), numerical_error);
    }
}

TEST_CASE("projection splits coordinates and projected vector") {
    Rng rng(61);
    const MatC Y = oracles::random_matrix(8, 20, rng);
    const SubspaceEstimate sub = estimate_subspace(Y, 3);

    const VecC inside = sub.basis * oracles::random_matrix(3, 1, rng);
    auto [coords_in, proj_in] = project(sub, inside);
    REQUIRE((proj_in - inside).norm() < 1e-10);
    REQUIRE((sub.basis * coords_in - inside).norm() < 1e-10);

    VecC ortho = oracles::random_matrix(8, 1, rng);
    ortho -= sub.projector() * ortho;
    auto [coords_out, proj_out] = project(sub, ortho);
    REQUIRE(proj_out.norm() < 1e-10 * ortho.norm());
    REQUIRE(coords_out.norm() < 1e-10 * ortho.norm());

    for (int i = 0; i < 1000; ++i) {
        const VecC y = oracles::random_matrix(8, 1, rng);
        auto [coords, projected] = project(sub, y);
        REQUIRE(projected.norm() <= y.norm() * (1.0 + 1e-12));
    }

    REQUIRE_THROWS_AS(project(sub, VecC::Zero(7)), config_error);
}
