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

#ifndef SBCE_RNG_HPP
#define SBCE_RNG_HPP

#include "sbce/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace sbce {

namespace detail {

// splitmix64, the standard 64-bit finalizer/stream mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

/// Deterministic random source. All samplers are implemented on top of the
/// raw 64-bit engine output, so equal seeds give bit-identical draws on any
/// platform. Independent streams for parallel work are derived from
/// (seed, stream index) with a counter-based splitmix64 mix; see stream().
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        // Expand the seed into the full engine state via splitmix64.
        std::uint64_t s = seed;
        std::seed_seq seq{detail::splitmix64(s), detail::splitmix64(s),
                          detail::splitmix64(s), detail::splitmix64(s)};
        engine_.seed(seq);
    }

    /// Derive the `stream_id`-th independent stream of a master seed.
    /// Trials running in parallel each take stream(seed, trial_index).
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        std::uint64_t s = seed;
        std::uint64_t a = detail::splitmix64(s);
        s = stream_id ^ 0xd1b54a32d192ed03ull;
        std::uint64_t b = detail::splitmix64(s);
        return Rng(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard real normal N(0, 1), Box-Muller with one cached spare.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * pi * uniform();
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    /// Circularly symmetric complex normal CN(0, 1), i.e. E[|x|^2] = 1.
    cplx complex_gaussian() {
        double u1 = uniform();
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        const double r = std::sqrt(-std::log(u1));
        const double phi = 2.0 * pi * uniform();
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here; n is tiny against 2^64.
        return engine_() % n;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace sbce

#endif
