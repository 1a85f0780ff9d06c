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

#ifndef SBCE_BENCH_HPP
#define SBCE_BENCH_HPP

#include "sbce/channel_model.hpp"
#include "sbce/config.hpp"
#include "sbce/estimators.hpp"
#include "sbce/gmm.hpp"
#include "sbce/subspace.hpp"
#include "sbce/txrx.hpp"
#include "sbce/vae.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sbce {

enum class ChannelModelKind { Iid, Spatial };
enum class SubspaceMode { Estimated, Perfect };

/// Full description of one Monte Carlo experiment: scenario, channel model,
/// swept axis, estimator labels and prior files.
struct ExperimentSpec {
    ScenarioConfig scenario;
    ChannelModelKind channel_model = ChannelModelKind::Iid;
    SpatialModelParams spatial;
    SubspaceMode subspace_mode = SubspaceMode::Estimated;
    std::string sweep_axis = "snr_db"; ///< snr_db | snapshots | users | antennas
    std::vector<double> sweep_values = {0.0};
    std::vector<std::string> estimators = {"ls"};
    long trials = 1000;
    bool pilots_follow_users = true; ///< keep N_p = J when sweeping users
    std::string gmm_path, vae_path, scov_dataset_path;
    int threads = 0;          ///< 0 = hardware concurrency
    bool measure_time = true; ///< false makes repeated runs byte-identical
    std::string resolved_config; ///< embedded into the CSV as a comment

    void validate() const {
        scenario.validate();
        if (sweep_values.empty())
            throw config_error("experiment: sweep value list is empty");
        if (sweep_values.size() > 1) {
            const bool increasing = sweep_values[1] > sweep_values[0];
            for (size_t i = 1; i < sweep_values.size(); ++i) {
                const double prev = sweep_values[i - 1], cur = sweep_values[i];
                if ((increasing && cur <= prev) || (!increasing && cur >= prev))
                    throw config_error("experiment: sweep values must be strictly monotone");
            }
        }
        if (estimators.empty())
            throw config_error("experiment: no estimators requested");
        if (trials < 1)
            throw config_error("experiment: trials must be >= 1");
        if (sweep_axis != "snr_db" && sweep_axis != "snapshots" && sweep_axis != "users" &&
            sweep_axis != "antennas")
            throw config_error("experiment: unknown sweep axis '" + sweep_axis + "'");
    }
};

struct SweepRow {
    double axis_value;
    std::string estimator;
    double nmse;
    double std_error;
    long trials;
    double seconds;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepRow> rows;
    std::string resolved_config;
};

namespace detail {

/// Deterministic pairwise sum, independent of the accumulation order used
/// to fill the buffer.
inline double pairwise_sum(const double* data, long n) {
    if (n <= 8) {
        double s = 0.0;
        for (long i = 0; i < n; ++i)
            s += data[i];
        return s;
    }
    const long half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline ScenarioConfig apply_axis(const ExperimentSpec& spec, double value) {
    ScenarioConfig s = spec.scenario;
    if (spec.sweep_axis == "snr_db") {
        s.noise_var = std::pow(10.0, -value / 10.0);
    } else if (spec.sweep_axis == "snapshots") {
        s.num_snapshots = static_cast<int>(value);
    } else if (spec.sweep_axis == "users") {
        s.num_users = static_cast<int>(value);
        if (spec.pilots_follow_users)
            s.num_pilots = s.num_users;
        if (s.num_snapshots < s.num_pilots)
            s.num_snapshots = s.num_pilots;
    } else if (spec.sweep_axis == "antennas") {
        s.num_antennas = static_cast<int>(value);
    }
    s.validate();
    return s;
}

} // namespace detail

/// Everything estimators may consume in one trial. All estimators of a
/// trial see the same block, the same decorrelated pilots and the same
/// subspace estimate.
struct TrialData {
    const ReceivedBlock& block;
    const MatC& pilot_obs;
    const SubspaceEstimate& subspace;
    const ScenarioConfig& scenario;
};

/// Per-sweep-point shared state: resolved scenario plus the filters and
/// banks that do not depend on the trial. Immutable during the trial loop.
struct SweepPointContext {
    ScenarioConfig scenario;
    GaussianPrior identity_prior;
    std::optional<GaussianPrior> scov_prior;
    const GmmPrior* gmm = nullptr;
    const VaePrior* vae = nullptr;
    std::optional<LmmseFilter> plain_identity, proj_identity;
    std::optional<LmmseFilter> plain_scov, proj_scov;
    std::optional<GmmFilterBank> gmm_pilot_bank, gmm_proj_bank;
};

using EstimatorFn = std::function<MatC(const TrialData&, const SweepPointContext&)>;

namespace detail {

inline MatC columnwise(const TrialData& td, const std::function<VecC(const VecC&)>& per_user) {
    MatC out(td.pilot_obs.rows(), td.pilot_obs.cols());
    for (long j = 0; j < td.pilot_obs.cols(); ++j)
        out.col(j) = per_user(td.pilot_obs.col(j));
    return out;
}

} // namespace detail

inline bool estimator_needs_gmm(const std::string& label) {
    return label.rfind("gmm-", 0) == 0 || label == "dd-gmm";
}
inline bool estimator_needs_vae(const std::string& label) {
    return label.rfind("vae-", 0) == 0 || label == "dd-vae";
}
inline bool estimator_needs_scov(const std::string& label) {
    return label.rfind("scov-", 0) == 0;
}

/// All registered estimator labels, resolvable by make_estimator_registry.
inline std::vector<std::string> registered_estimators() {
    return {"oracle",   "ls",       "ml",        "plain",    "sub",     "proj",
            "scov-plain", "scov-sub", "scov-proj", "gmm-pilot", "gmm-sub", "gmm-proj",
            "vae-pilot", "vae-sub",  "vae-proj",  "em-ml",    "dd-ls",   "dd-gmm"};
}

inline EstimatorFn make_estimator(const std::string& label) {
    if (label == "oracle")
        return [](const TrialData& td, const SweepPointContext&) { return td.block.true_channels; };
    if (label == "ls")
        return [](const TrialData& td, const SweepPointContext&) { return td.pilot_obs; };
    if (label == "ml")
        return [](const TrialData& td, const SweepPointContext&) {
            return MatC(td.subspace.basis * (td.subspace.basis.adjoint() * td.pilot_obs));
        };
    if (label == "plain")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return MatC(ctx.plain_identity->W * td.pilot_obs);
        };
    if (label == "sub")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            const SubspaceLmmseContext sc(ctx.identity_prior, td.subspace,
                                          td.scenario.eff_noise_var());
            return detail::columnwise(td, [&](const VecC& y) { return sc.estimate(y); });
        };
    if (label == "proj")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            const MatC projected = td.subspace.basis * (td.subspace.basis.adjoint() * td.pilot_obs);
            return MatC(ctx.proj_identity->W * projected);
        };
    if (label == "scov-plain")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return MatC(ctx.plain_scov->W * td.pilot_obs);
        };
    if (label == "scov-sub")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            const SubspaceLmmseContext sc(*ctx.scov_prior, td.subspace,
                                          td.scenario.eff_noise_var());
            return detail::columnwise(td, [&](const VecC& y) { return sc.estimate(y); });
        };
    if (label == "scov-proj")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            const MatC projected = td.subspace.basis * (td.subspace.basis.adjoint() * td.pilot_obs);
            return MatC(ctx.proj_scov->W * projected);
        };
    if (label == "gmm-pilot")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return detail::columnwise(
                td, [&](const VecC& y) { return ctx.gmm_pilot_bank->estimate(y); });
        };
    if (label == "gmm-sub")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            const GmmSubspaceContext gc(*ctx.gmm, td.subspace, td.scenario.eff_noise_var());
            return detail::columnwise(td, [&](const VecC& y) { return gc.estimate(y); });
        };
    if (label == "gmm-proj")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return detail::columnwise(td, [&](const VecC& y) {
                const VecC projected =
                    td.subspace.basis * (td.subspace.basis.adjoint() * y);
                return ctx.gmm_proj_bank->estimate(projected);
            });
        };
    if (label == "vae-pilot")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return detail::columnwise(td, [&](const VecC& y) {
                return vae_pilot_estimate(y, *ctx.vae, td.scenario.eff_noise_var());
            });
        };
    if (label == "vae-sub")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return detail::columnwise(td, [&](const VecC& y) {
                return vae_subspace_estimate(y, td.subspace, *ctx.vae,
                                             td.scenario.eff_noise_var());
            });
        };
    if (label == "vae-proj")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            return detail::columnwise(td, [&](const VecC& y) {
                return vae_projected_estimate(y, td.subspace, *ctx.vae,
                                              td.scenario.eff_noise_var(),
                                              td.scenario.num_antennas, td.scenario.num_users);
            });
        };
    if (label == "em-ml")
        return [](const TrialData& td, const SweepPointContext&) {
            return em_joint_ml(td.block, td.scenario.noise_var).channels;
        };
    if (label == "dd-ls")
        return [](const TrialData& td, const SweepPointContext&) {
            return decision_directed([](const VecC& y, double) { return y; }, td.block,
                                     td.scenario.constellation, td.scenario.noise_var);
        };
    if (label == "dd-gmm")
        return [](const TrialData& td, const SweepPointContext& ctx) {
            const GmmPrior* gmm = ctx.gmm;
            return decision_directed(
                [gmm](const VecC& y, double noise) { return gmm_pilot_estimate(y, *gmm, noise); },
                td.block, td.scenario.constellation, td.scenario.noise_var);
        };
    throw config_error("unknown estimator label '" + label + "'");
}

/// Load priors, resolve estimator labels, run the sweep. Every trial draws
/// channels, transmits one block, estimates the subspace once and feeds the
/// identical data to every estimator. Trials are independent workers with
/// per-trial RNG streams; the accumulation is keyed on the trial index so
/// serial and parallel runs produce identical results.
inline SweepResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();

    std::optional<GmmPrior> gmm;
    std::optional<VaePrior> vae;
    std::optional<GaussianPrior> scov;
    for (const std::string& label : spec.estimators) {
        (void)make_estimator(label); // resolvable check up front
        if (estimator_needs_gmm(label) && !gmm) {
            if (spec.gmm_path.empty())
                throw config_error("estimator '" + label + "' needs a GMM prior file");
            gmm = load_gmm(spec.gmm_path);
        }
        if (estimator_needs_vae(label) && !vae) {
            if (spec.vae_path.empty())
                throw config_error("estimator '" + label + "' needs a VAE prior file");
            vae = load_vae(spec.vae_path);
        }
        if (estimator_needs_scov(label) && !scov) {
            if (spec.scov_dataset_path.empty())
                throw config_error("estimator '" + label + "' needs a training dataset file");
            scov = sample_cov_prior(load_dataset(spec.scov_dataset_path));
        }
    }

    std::vector<EstimatorFn> fns;
    fns.reserve(spec.estimators.size());
    for (const std::string& label : spec.estimators)
        fns.push_back(make_estimator(label));

    SweepResult result;
    result.axis = spec.sweep_axis;
    result.resolved_config = spec.resolved_config;

    const int n_est = static_cast<int>(spec.estimators.size());
    const long L = spec.trials;
    int n_threads = spec.threads > 0 ? spec.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(L)));

    for (size_t vi = 0; vi < spec.sweep_values.size(); ++vi) {
        const double value = spec.sweep_values[vi];
        SweepPointContext ctx;
        ctx.scenario = detail::apply_axis(spec, value);
        const int M = ctx.scenario.num_antennas;
        const int J = ctx.scenario.num_users;
        const double eff_noise = ctx.scenario.eff_noise_var();
        const double proj_noise = eff_noise * static_cast<double>(J) / static_cast<double>(M);

        ctx.identity_prior = GaussianPrior::identity(M);
        ctx.plain_identity = LmmseFilter::make(ctx.identity_prior, eff_noise);
        ctx.proj_identity = LmmseFilter::make(ctx.identity_prior, proj_noise);
        if (scov) {
            if (scov->covariance.rows() != M)
                throw config_error("sample-covariance prior dimension does not match M");
            ctx.scov_prior = scov;
            ctx.plain_scov = LmmseFilter::make(*scov, eff_noise);
            ctx.proj_scov = LmmseFilter::make(*scov, proj_noise);
        }
        if (gmm) {
            if (gmm->antennas() != M)
                throw config_error("GMM prior dimension does not match M");
            ctx.gmm = &*gmm;
            ctx.gmm_pilot_bank.emplace(*gmm, eff_noise);
            ctx.gmm_proj_bank.emplace(*gmm, proj_noise);
        }
        if (vae) {
            if (vae->antennas() != M)
                throw config_error("VAE prior dimension does not match M");
            ctx.vae = &*vae;
        }
        SpatialModelParams spatial_here = spec.spatial;
        spatial_here.num_antennas = M;
        if (spec.channel_model == ChannelModelKind::Spatial)
            spatial_here.validate();

        std::vector<VecR> per_trial(n_est, VecR::Zero(L));
        std::vector<double> est_seconds(n_est, 0.0);
        std::atomic<long> next_trial{0};
        std::mutex seconds_mutex;

        auto worker = [&]() {
            std::vector<double> local_seconds(n_est, 0.0);
            while (true) {
                const long t = next_trial.fetch_add(1);
                if (t >= L)
                    break;
                Rng rng = Rng::stream(spec.scenario.seed,
                                      (static_cast<std::uint64_t>(vi) << 40) |
                                          static_cast<std::uint64_t>(t));

                MatC H(M, J);
                if (spec.channel_model == ChannelModelKind::Iid) {
                    for (int j = 0; j < J; ++j)
                        H.col(j) = draw_rayleigh_iid(M, rng);
                } else {
                    for (int j = 0; j < J; ++j)
                        H.col(j) = draw_spatial_channel(spatial_here, rng);
                }

                const ReceivedBlock block = transmit(H, ctx.scenario, rng);
                const SubspaceEstimate sub = spec.subspace_mode == SubspaceMode::Perfect
                                                 ? perfect_subspace(H)
                                                 : estimate_subspace(block.received, J);
                const MatC pilot_obs = decorrelate_pilots(block);
                const TrialData td{block, pilot_obs, sub, ctx.scenario};

                for (int e = 0; e < n_est; ++e) {
                    const auto t0 = std::chrono::steady_clock::now();
                    const MatC estimate = fns[e](td, ctx);
                    if (spec.measure_time) {
                        const auto t1 = std::chrono::steady_clock::now();
                        local_seconds[e] += std::chrono::duration<double>(t1 - t0).count();
                    }
                    per_trial[e](t) = (estimate - H).squaredNorm() /
                                      (static_cast<double>(M) * static_cast<double>(J));
                }
            }
            if (spec.measure_time) {
                std::lock_guard<std::mutex> lock(seconds_mutex);
                for (int e = 0; e < n_est; ++e)
                    est_seconds[e] += local_seconds[e];
            }
        };

        if (n_threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(n_threads);
            for (int w = 0; w < n_threads; ++w)
                pool.emplace_back(worker);
            for (auto& th : pool)
                th.join();
        }

        for (int e = 0; e < n_est; ++e) {
            const double mean = detail::pairwise_sum(per_trial[e].data(), L) / static_cast<double>(L);
            double var = 0.0;
            if (L > 1) {
                VecR centered = per_trial[e].array() - mean;
                VecR sq = centered.array().square();
                var = detail::pairwise_sum(sq.data(), L) / static_cast<double>(L - 1);
            }
            SweepRow row;
            row.axis_value = value;
            row.estimator = spec.estimators[e];
            row.nmse = mean;
            row.std_error = L > 1 ? std::sqrt(var / static_cast<double>(L)) : 0.0;
            row.trials = L;
            row.seconds = spec.measure_time ? est_seconds[e] : 0.0;
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

/// CSV with header `axis,value,estimator,nmse,stderr,trials,seconds`,
/// 12 significant digits, resolved config embedded as '#' comment lines.
inline void emit_csv(const SweepResult& result, std::ostream& os) {
    if (!result.resolved_config.empty()) {
        std::istringstream cfg(result.resolved_config);
        std::string line;
        while (std::getline(cfg, line))
            os << "# " << line << "\n";
    }
    os << "axis,value,estimator,nmse,stderr,trials,seconds\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    for (const SweepRow& row : result.rows) {
        os << result.axis << ',' << fmt(row.axis_value) << ',' << row.estimator << ','
           << fmt(row.nmse) << ',' << fmt(row.std_error) << ',' << row.trials << ','
           << fmt(row.seconds) << "\n";
    }
}

inline void emit_csv(const SweepResult& result, const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw io_error("emit_csv: cannot open '" + path + "' for writing");
    emit_csv(result, os);
    if (!os)
        throw io_error("emit_csv: write to '" + path + "' failed");
}

/// Build an ExperimentSpec from a parsed config file; the full resolved
/// configuration is re-serialized into spec.resolved_config.
inline ExperimentSpec experiment_from_config(const ConfigFile& cfg) {
    ExperimentSpec spec;
    spec.scenario.num_antennas = static_cast<int>(cfg.get_int_or("scenario", "antennas", 64));
    spec.scenario.num_users = static_cast<int>(cfg.get_int_or("scenario", "users", 8));
    spec.scenario.num_snapshots = static_cast<int>(cfg.get_int_or("scenario", "snapshots", 200));
    const long pilots = cfg.get_int_or("scenario", "pilots", 0);
    spec.pilots_follow_users = pilots == 0;
    spec.scenario.num_pilots =
        pilots > 0 ? static_cast<int>(pilots) : spec.scenario.num_users;
    spec.scenario.noise_var = cfg.get_double_or("scenario", "noise_var", 1.0);
    spec.scenario.constellation =
        parse_constellation(cfg.get_string_or("scenario", "constellation", "gaussian"));
    spec.scenario.seed = cfg.get_u64_or("scenario", "seed", 1);

    const std::string model = cfg.get_string_or("scenario", "channel_model", "iid");
    if (model == "iid")
        spec.channel_model = ChannelModelKind::Iid;
    else if (model == "spatial")
        spec.channel_model = ChannelModelKind::Spatial;
    else
        throw config_error("unknown channel_model '" + model + "'");
    spec.spatial.num_antennas = spec.scenario.num_antennas;
    spec.spatial.num_clusters = static_cast<int>(cfg.get_int_or("scenario", "clusters", 3));
    spec.spatial.angular_spread_deg = cfg.get_double_or("scenario", "angular_spread_deg", 2.0);
    spec.spatial.angle_grid_points =
        static_cast<int>(cfg.get_int_or("scenario", "angle_grid_points", 0));

    const std::string subspace = cfg.get_string_or("scenario", "subspace", "estimated");
    if (subspace == "estimated")
        spec.subspace_mode = SubspaceMode::Estimated;
    else if (subspace == "perfect")
        spec.subspace_mode = SubspaceMode::Perfect;
    else
        throw config_error("unknown subspace mode '" + subspace + "'");

    spec.trials = cfg.get_int_or("scenario", "trials", 1000);
    spec.sweep_axis = cfg.get_string_or("sweep", "axis", "snr_db");
    if (cfg.has("sweep", "values"))
        spec.sweep_values = cfg.get_double_list("sweep", "values");
    spec.estimators = cfg.get_string_list("estimators", "labels");
    spec.gmm_path = cfg.get_string_or("priors", "gmm", "");
    spec.vae_path = cfg.get_string_or("priors", "vae", "");
    spec.scov_dataset_path = cfg.get_string_or("priors", "scov_dataset", "");
    spec.resolved_config = cfg.dump();
    spec.validate();
    return spec;
}

} // namespace sbce

#endif
