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

#include "sbce/bench.hpp"
#include "sbce/bounds.hpp"

#include <sstream>

using namespace sbce;

namespace {

ExperimentSpec base_spec() {
    ExperimentSpec spec;
    spec.scenario.num_antennas = 8;
    spec.scenario.num_users = 2;
    spec.scenario.num_pilots = 2;
    spec.scenario.num_snapshots = 20;
    spec.scenario.noise_var = 1.0;
    spec.scenario.seed = 7;
    spec.sweep_axis = "snr_db";
    spec.sweep_values = {0.0};
    spec.estimators = {"ls"};
    spec.trials = 50;
    spec.measure_time = false;
    spec.threads = 1;
    return spec;
}

std::string csv_of(const SweepResult& result) {
    std::ostringstream os;
    emit_csv(result, os);
    return os.str();
}

} // namespace

TEST_CASE("config parser handles sections, comments and errors") {
    const std::string text = "# top comment\n"
                             "[scenario]\n"
                             "antennas = 16  # inline comment\n"
                             "users = 4\n"
                             "noise_var = 0.5\n"
                             "\n"
                             "[sweep]\n"
                             "axis = snr_db\n"
                             "values = -10, 0, 10\n";
    const ConfigFile cfg = ConfigFile::parse(text);
    REQUIRE(cfg.get_int("scenario", "antennas") == 16);
    REQUIRE(cfg.get_double("scenario", "noise_var") == 0.5);
    REQUIRE(cfg.get_double_list("sweep", "values") == std::vector<double>{-10.0, 0.0, 10.0});
    REQUIRE(cfg.get_int_or("scenario", "missing", 9) == 9);
    REQUIRE_THROWS_AS(cfg.get_string("scenario", "missing"), config_error);
    REQUIRE_THROWS_AS(ConfigFile::parse("[oops\n"), config_error);
    REQUIRE_THROWS_AS(ConfigFile::parse("keyvalue\n"), config_error);
    const ConfigFile bad_int = ConfigFile::parse("[a]\nx = 3.5z\n");
    REQUIRE_THROWS_AS(bad_int.get_int("a", "x"), config_error);
}

TEST_CASE("experiment spec from config resolves defaults") {
    const std::string text = "[scenario]\n"
                             "antennas = 8\n"
                             "users = 2\n"
                             "snapshots = 16\n"
                             "trials = 10\n"
                             "subspace = perfect\n"
                             "[sweep]\n"
                             "axis = snr_db\n"
                             "values = 0\n"
                             "[estimators]\n"
                             "labels = ls, ml\n";
    const ExperimentSpec spec = experiment_from_config(ConfigFile::parse(text));
    REQUIRE(spec.scenario.num_pilots == 2); // defaults to users
    REQUIRE(spec.subspace_mode == SubspaceMode::Perfect);
    REQUIRE(spec.estimators == std::vector<std::string>{"ls", "ml"});
    REQUIRE_FALSE(spec.resolved_config.empty());
}

TEST_CASE("unknown estimators and missing priors are config errors") {
    ExperimentSpec spec = base_spec();
    spec.estimators = {"nope"};
    REQUIRE_THROWS_AS(run_experiment(spec), config_error);

    spec.estimators = {"gmm-proj"};
    REQUIRE_THROWS_AS(run_experiment(spec), config_error); // no prior path

    spec = base_spec();
    spec.sweep_values = {0.0, 0.0};
    REQUIRE_THROWS_AS(spec.validate(), config_error); // not strictly monotone

    for (const std::string& label : registered_estimators())
        REQUIRE_NOTHROW(make_estimator(label));
}

TEST_CASE("oracle estimator reports zero NMSE everywhere") {
    ExperimentSpec spec = base_spec();
    spec.estimators = {"oracle", "ls"};
    spec.sweep_values = {-10.0, 0.0, 10.0};
    const SweepResult result = run_experiment(spec);
    REQUIRE(result.rows.size() == 6);
    for (const SweepRow& row : result.rows)
        if (row.estimator == "oracle")
            REQUIRE(row.nmse == 0.0);
}

TEST_CASE("identical seeds give identical CSV bytes, serial or parallel") {
    ExperimentSpec spec = base_spec();
    spec.estimators = {"ls", "ml", "proj", "em-ml"};
    spec.sweep_values = {-5.0, 5.0};
    spec.trials = 40;

    const std::string serial = csv_of(run_experiment(spec));
    const std::string serial_again = csv_of(run_experiment(spec));
    REQUIRE(serial == serial_again);

    spec.threads = 2;
    const std::string parallel = csv_of(run_experiment(spec));
    REQUIRE(serial == parallel);
}

TEST_CASE("harness matches the closed forms on a small scenario") {
    ExperimentSpec spec = base_spec();
    spec.scenario.num_antennas = 16;
    spec.scenario.num_users = 4;
    spec.scenario.num_pilots = 4;
    spec.scenario.num_snapshots = 4;
    spec.subspace_mode = SubspaceMode::Perfect;
    spec.estimators = {"plain", "ml", "sub", "proj"};
    spec.trials = 4000;
    spec.threads = 2;
    const SweepResult result = run_experiment(spec);

    const IidMseTable t = iid_mse_table(16, 4, 1.0);
    for (const SweepRow& row : result.rows) {
        double expected = 0.0;
        if (row.estimator == "plain")
            expected = t.plain;
        else if (row.estimator == "ml")
            expected = t.ml;
        else if (row.estimator == "sub")
            expected = t.sub;
        else
            expected = t.proj;
        REQUIRE(row.nmse == Catch::Approx(expected / 16.0).epsilon(0.06));
    }
}

TEST_CASE("standard errors shrink like the square root of the trial count") {
    ExperimentSpec spec = base_spec();
    spec.trials = 1000;
    const SweepResult small = run_experiment(spec);
    spec.trials = 4000;
    const SweepResult big = run_experiment(spec);
    const double ratio = small.rows[0].std_error / big.rows[0].std_error;
    REQUIRE(ratio > 1.5);
    REQUIRE(ratio < 2.7);
}

TEST_CASE("snapshots sweep changes the scenario per value") {
    ExperimentSpec spec = base_spec();
    spec.sweep_axis = "snapshots";
    spec.sweep_values = {4.0, 64.0};
    spec.estimators = {"proj"};
    spec.trials = 400;
    const SweepResult result = run_experiment(spec);
    // more snapshots, better subspace, lower NMSE
    REQUIRE(result.rows[1].nmse < result.rows[0].nmse);
}

TEST_CASE("csv emission format") {
    SweepResult result;
    result.axis = "snr_db";

    SECTION("empty result is a header-only file") {
        REQUIRE(csv_of(result) == "axis,value,estimator,nmse,stderr,trials,seconds\n");
    }

    SECTION("12 significant digits round-trip and constant column count") {
        SweepRow row;
        row.axis_value = -10.0;
        row.estimator = "ls";
        row.nmse = 1.0 / 3.0;
        row.std_error = 0.001234567890123;
        row.trials = 1000;
        row.seconds = 0.0;
        result.rows.push_back(row);
        result.resolved_config = "[scenario]\nantennas = 8\n";

        const std::string text = csv_of(result);
        std::istringstream in(text);
        std::string line;
        int rows = 0;
        while (std::getline(in, line)) {
            if (line.rfind('#', 0) == 0)
                continue;
            REQUIRE(std::count(line.begin(), line.end(), ',') == 6);
            ++rows;
        }
        REQUIRE(rows == 2); // header + one row

        // parse the nmse back and re-format: identical 12-digit string
        const std::string nmse_str = "0.333333333333";
        REQUIRE(text.find(nmse_str) != std::string::npos);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", std::stod(nmse_str));
        REQUIRE(std::string(buf) == nmse_str);
    }
}

TEST_CASE("axis application") {
    ExperimentSpec spec = base_spec();
    spec.sweep_axis = "users";
    spec.pilots_follow_users = true;
    const ScenarioConfig two = detail::apply_axis(spec, 2.0);
    REQUIRE(two.num_users == 2);
    REQUIRE(two.num_pilots == 2);
    const ScenarioConfig four = detail::apply_axis(spec, 4.0);
    REQUIRE(four.num_pilots == 4);

    spec.sweep_axis = "snr_db";
    REQUIRE(detail::apply_axis(spec, 10.0).noise_var == Catch::Approx(0.1));
    spec.sweep_axis = "antennas";
    REQUIRE(detail::apply_axis(spec, 32.0).num_antennas == 32);
}
