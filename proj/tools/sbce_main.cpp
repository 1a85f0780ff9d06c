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
//
// Benchmark CLI. Verbs:
//   gen-dataset  draw channel realizations and persist them (.chds)
//   fit-prior    fit a GMM or VAE prior on a dataset (.gmmp / .vaep)
//   run          Monte Carlo NMSE sweep, emitting CSV
//
// Exit codes: 0 success, 2 config error, 3 IO error, 4 numerical failure.

#include "sbce/bench.hpp"
#include "sbce/channel_model.hpp"
#include "sbce/config.hpp"
#include "sbce/gmm.hpp"
#include "sbce/vae.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required) {
    cmd->add_option("--config", args.config_path, "configuration file")->required();
    auto* out = cmd->add_option("--out", args.out_path, "output file path");
    if (out_required)
        out->required();
    cmd->add_option("--seed", args.seed, "override the seed from the config");
    cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
}

std::uint64_t resolve_seed(const sbce::ConfigFile& cfg, const std::string& section,
                           const CommonArgs& args) {
    if (args.seed)
        return *args.seed;
    return cfg.get_u64_or(section, "seed", 1);
}

int run_gen_dataset(const CommonArgs& args) {
    const sbce::ConfigFile cfg = sbce::ConfigFile::load(args.config_path);
    const std::string model = cfg.get_string_or("dataset", "model", "spatial");
    const int M = static_cast<int>(cfg.get_int_or("dataset", "antennas", 64));
    const long T = cfg.get_int_or("dataset", "samples", 10000);
    if (T < 1)
        throw sbce::config_error("[dataset] samples must be >= 1");
    const std::uint64_t seed = resolve_seed(cfg, "dataset", args);

    sbce::SpatialModelParams params;
    if (model == "spatial") {
        params.num_antennas = M;
        params.num_clusters = static_cast<int>(cfg.get_int_or("dataset", "clusters", 3));
        params.angular_spread_deg = cfg.get_double_or("dataset", "angular_spread_deg", 2.0);
        params.angle_grid_points =
            static_cast<int>(cfg.get_int_or("dataset", "angle_grid_points", 0));
        params.validate();
    } else if (model != "iid") {
        throw sbce::config_error("[dataset] model must be iid or spatial");
    }

    sbce::ChannelDataset ds;
    ds.samples.resize(M, T);
    ds.model_tag = model;
    // One RNG stream per sample: the dataset is identical for any thread count.
    int threads = args.threads > 0 ? args.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1)
        threads = 1;
    if (static_cast<long>(threads) > T)
        threads = static_cast<int>(T);
    std::atomic<long> next{0};
    auto worker = [&]() {
        while (true) {
            const long t = next.fetch_add(1);
            if (t >= T)
                break;
            sbce::Rng rng = sbce::Rng::stream(seed, static_cast<std::uint64_t>(t));
            ds.samples.col(t) = model == "iid" ? sbce::draw_rayleigh_iid(M, rng)
                                               : sbce::draw_spatial_channel(params, rng);
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    sbce::save_dataset(args.out_path, ds);
    std::cout << "wrote " << T << " samples (M=" << M << ", model=" << model << ") to "
              << args.out_path << "\n";
    return 0;
}

int run_fit_prior(const CommonArgs& args) {
    const sbce::ConfigFile cfg = sbce::ConfigFile::load(args.config_path);
    const std::string kind = cfg.get_string("fit", "kind");
    const std::string dataset_path = cfg.get_string("fit", "dataset");
    const sbce::ChannelDataset ds = sbce::load_dataset(dataset_path);
    sbce::Rng rng(resolve_seed(cfg, "fit", args));

    if (kind == "gmm") {
        const int K = static_cast<int>(cfg.get_int_or("fit", "components", 64));
        const int max_iter = static_cast<int>(cfg.get_int_or("fit", "max_iter", 100));
        const double tol = cfg.get_double_or("fit", "tol", 1e-6);
        std::vector<double> loglik;
        const int threads = args.threads > 0
                                ? args.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
        const sbce::GmmPrior prior = sbce::fit_gmm(ds, K, max_iter, tol, rng, &loglik, threads);
        sbce::save_gmm(args.out_path, prior);
        std::cout << "fitted GMM (K=" << K << ", M=" << ds.antennas() << ") in "
                  << loglik.size() << " EM iterations\n";
        for (size_t i = 0; i < loglik.size(); ++i)
            std::cout << "  iter " << i + 1 << "  loglik " << loglik[i] << "\n";
        std::cout << "wrote " << args.out_path << "\n";
        return 0;
    }
    if (kind == "vae") {
        sbce::VaeTrainConfig train;
        train.layout.antennas = ds.antennas();
        train.layout.latent_dim = static_cast<int>(cfg.get_int_or("fit", "latent_dim", 32));
        if (cfg.has("fit", "encoder_widths")) {
            train.layout.encoder_widths.clear();
            for (double w : cfg.get_double_list("fit", "encoder_widths"))
                train.layout.encoder_widths.push_back(static_cast<int>(w));
        }
        if (cfg.has("fit", "decoder_widths")) {
            train.layout.decoder_widths.clear();
            for (double w : cfg.get_double_list("fit", "decoder_widths"))
                train.layout.decoder_widths.push_back(static_cast<int>(w));
        }
        train.epochs = static_cast<int>(cfg.get_int_or("fit", "epochs", 50));
        train.batch_size = static_cast<int>(cfg.get_int_or("fit", "batch_size", 128));
        train.learning_rate = cfg.get_double_or("fit", "learning_rate", 1e-3);
        train.snr_db_min = cfg.get_double_or("fit", "snr_db_min", -10.0);
        train.snr_db_max = cfg.get_double_or("fit", "snr_db_max", 20.0);
        train.num_users = static_cast<int>(cfg.get_int_or("fit", "users", 8));
        std::vector<double> elbo_trace;
        const sbce::VaePrior prior = sbce::train_vae(ds, train, rng, &elbo_trace);
        sbce::save_vae(args.out_path, prior);
        const size_t n = elbo_trace.size();
        std::cout << "trained VAE (Z=" << train.layout.latent_dim << ", M=" << ds.antennas()
                  << ") over " << n << " batches\n";
        if (n >= 2)
            std::cout << "  ELBO first batch " << elbo_trace.front() << ", last batch "
                      << elbo_trace.back() << "\n";
        std::cout << "wrote " << args.out_path << "\n";
        return 0;
    }
    throw sbce::config_error("[fit] kind must be gmm or vae");
}

int run_sweep(const CommonArgs& args) {
    sbce::ConfigFile cfg = sbce::ConfigFile::load(args.config_path);
    if (args.seed)
        cfg.set("scenario", "seed", std::to_string(*args.seed));
    sbce::ExperimentSpec spec = sbce::experiment_from_config(cfg);
    if (args.threads > 0)
        spec.threads = args.threads;
    const sbce::SweepResult result = sbce::run_experiment(spec);
    if (args.out_path.empty()) {
        sbce::emit_csv(result, std::cout);
    } else {
        sbce::emit_csv(result, args.out_path);
        std::cout << "wrote " << result.rows.size() << " rows to " << args.out_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-blind MMSE channel estimation benchmark"};
    app.require_subcommand(1);

    CommonArgs gen_args, fit_args, run_args;
    CLI::App* gen = app.add_subcommand("gen-dataset", "draw and persist channel realizations");
    add_common(gen, gen_args, true);
    CLI::App* fit = app.add_subcommand("fit-prior", "fit a GMM or VAE prior on a dataset");
    add_common(fit, fit_args, true);
    CLI::App* run = app.add_subcommand("run", "run a Monte Carlo sweep and emit CSV");
    add_common(run, run_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return run_gen_dataset(gen_args);
        if (fit->parsed())
            return run_fit_prior(fit_args);
        if (run->parsed())
            return run_sweep(run_args);
        return 2;
    } catch (const sbce::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sbce::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const sbce::numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
