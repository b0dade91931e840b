// SPDX-License-Identifier: Apache-2.0
//
// dtris - digital-twin aided RIS beamforming and robust transmission design
// Copyright (C) 2026 The dtris authors
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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dtris/experiment.hpp"
#include "dtris/matrix_io.hpp"
#include "dtris/random.hpp"

using namespace dtris;

namespace
{

ExperimentConfig small_config()
{
    ExperimentConfig c;
    c.scenario.n_tx = 4;
    c.scenario.n_ris = 4;
    c.gammas = {0.5};
    c.n_draws = 3;
    c.n_stats = 200;
    c.n_mc = 100;
    c.n_cand = 20;
    c.max_iters = 5;
    c.threads = 1;
    return c;
}

std::string slurp(const std::filesystem::path &p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string &name)
{
    const auto p = std::filesystem::temp_directory_path() / ("dtris_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("empirical cdf steps")
{
    const auto c = empirical_cdf({2.0, 1.0});
    REQUIRE(c.size() == 2);
    CHECK(c[0].value == 1.0);
    CHECK(c[0].fraction == 0.5);
    CHECK(c[1].value == 2.0);
    CHECK(c[1].fraction == 1.0);

    const auto tie = empirical_cdf({3.0, 3.0, 1.0, 3.0});
    REQUIRE(tie.size() == 2);
    CHECK(tie[0].fraction == 0.25);
    CHECK(tie[1].fraction == 1.0);
    CHECK(empirical_cdf({}).empty());
}

TEST_CASE("single record gives header and one row")
{
    ExperimentResult r;
    DrawRecord d;
    d.gamma = 1.0;
    d.se1 = 1.5;
    d.se2 = 2.0;
    d.feasible = true;
    r.records = {d};
    r.summary = summarize(r.records);
    const auto dir = scratch("single");
    emit_outputs(r, dir.string());
    std::ifstream f(dir / "draws.csv");
    std::string line;
    int n = 0;
    while (std::getline(f, line))
        ++n;
    CHECK(n == 2);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "cdf.csv"));
    CHECK(std::filesystem::exists(dir / "summary.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("summary of hand-made records")
{
    std::vector<DrawRecord> rs(4);
    for (int i = 0; i < 4; ++i)
    {
        rs[i].draw = i;
        rs[i].gamma = 1.0;
        rs[i].feasible = i != 3;
        rs[i].power = 1.0 + i;
        rs[i].se1 = 1.0;
        rs[i].se2 = 1.0 + i;
    }
    rs[1].outage1 = true;
    rs[2].failed = true;
    const auto s = summarize(rs);
    REQUIRE(s.size() == 1);
    CHECK(s[0].draws == 4);
    CHECK(s[0].failed == 1);
    CHECK(s[0].feasible == 2);
    CHECK(s[0].outage == doctest::Approx(1.0 / 3.0));
    CHECK(s[0].outage_feasible == doctest::Approx(0.5));
    CHECK(s[0].mean_power == doctest::Approx(1.5));
    CHECK(s[0].mean_sum_se == doctest::Approx((2.0 + 3.0 + 5.0) / 3.0));
    CHECK(std::isnan(s[0].mc_outage1));
}

TEST_CASE("config parsing")
{
    std::istringstream ok("# comment\nn_tx = 8\nmodes = perfect, sweep\ngammas = 0.5,1.5 # trailing\n"
                          "bs_position = 0,0,10\nwhitening = cholesky\nseed = 7\n");
    const ExperimentConfig c = parse_config(ok);
    CHECK(c.scenario.n_tx == 8);
    CHECK(c.modes == std::vector<Mode>{Mode::Perfect, Mode::Sweep});
    CHECK(c.gammas == std::vector<double>{0.5, 1.5});
    CHECK(c.scenario.bs_position.z() == 10.0);
    CHECK(c.whitening == WhiteningKind::Cholesky);
    CHECK(c.seed == 7);

    std::ostringstream out;
    write_config(out, c);
    std::istringstream back(out.str());
    const ExperimentConfig d = parse_config(back);
    CHECK(config_entries(d) == config_entries(c));

    std::istringstream unknown("n_tx = 4\nbogus = 1\n");
    CHECK_THROWS_AS(parse_config(unknown), ValidationError);
    std::istringstream dup("n_tx = 4\nn_tx = 5\n");
    CHECK_THROWS_AS(parse_config(dup), ValidationError);
    std::istringstream bad_num("rho = 0.05x\n");
    CHECK_THROWS_AS(parse_config(bad_num), ValidationError);
    std::istringstream bad_rho("rho = 1.5\n");
    CHECK_THROWS_AS(parse_config(bad_rho), ValidationError);
    std::istringstream bad_mode("modes = fancy\n");
    CHECK_THROWS_AS(parse_config(bad_mode), ValidationError);
    std::istringstream no_eq("n_tx 4\n");
    CHECK_THROWS_AS(parse_config(no_eq), ValidationError);
    CHECK_THROWS_AS(load_config("/nonexistent/dtris.cfg"), IoError);
}

TEST_CASE("csv round trip preserves aggregates")
{
    const ExperimentResult r = run_experiment(small_config());
    REQUIRE(r.records.size() == 9);
    const auto dir = scratch("roundtrip");
    emit_outputs(r, dir.string());
    std::ifstream f(dir / "draws.csv");
    const auto back = read_draws_csv(f);
    REQUIRE(back.size() == r.records.size());
    const auto s0 = r.summary;
    const auto s1 = summarize(back);
    REQUIRE(s0.size() == s1.size());
    auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) <= 1e-9; };
    for (std::size_t i = 0; i < s0.size(); ++i)
    {
        CHECK(s0[i].mode == s1[i].mode);
        CHECK(s0[i].draws == s1[i].draws);
        CHECK(s0[i].feasible == s1[i].feasible);
        CHECK(s0[i].failed == s1[i].failed);
        CHECK(same(s0[i].outage, s1[i].outage));
        CHECK(same(s0[i].mean_power, s1[i].mean_power));
        CHECK(same(s0[i].mean_sum_se, s1[i].mean_sum_se));
        CHECK(same(s0[i].mc_outage1, s1[i].mc_outage1));
        CHECK(same(s0[i].mc_outage2, s1[i].mc_outage2));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("outputs are deterministic across runs and thread counts")
{
    ExperimentConfig c = small_config();
    c.modes = {Mode::Perfect, Mode::Sweep};
    c.n_draws = 4;
    const auto a = scratch("det_a"), b = scratch("det_b");
    emit_outputs(run_experiment(c), a.string());
    c.threads = 3;
    emit_outputs(run_experiment(c), b.string());
    for (const char *name : {"draws.csv", "cdf.csv", "summary.csv"})
        CHECK(slurp(a / name) == slurp(b / name));
    // The manifest echoes the thread count; everything else matches.
    CHECK(slurp(a / "manifest.json") != slurp(b / "manifest.json"));
    c.threads = 1;
    const auto a2 = scratch("det_a2");
    emit_outputs(run_experiment(c), a2.string());
    CHECK(slurp(a / "manifest.json") == slurp(a2 / "manifest.json"));
    for (const auto &p : {a, b, a2})
        std::filesystem::remove_all(p);
}

TEST_CASE("exact twin gives near-zero outage for the perfect design")
{
    ExperimentConfig c = small_config();
    c.scenario.l_dt = c.scenario.l_real;
    c.modes = {Mode::Perfect};
    c.n_draws = 20;
    c.n_mc = 0;
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.summary.size() == 1);
    CHECK(r.summary[0].failed == 0);
    CHECK(r.summary[0].feasible >= 18);
    CHECK(r.summary[0].outage_feasible <= 0.02);
}

TEST_CASE("unwritable output directory")
{
    ExperimentResult r;
    r.records = {DrawRecord{}};
    r.summary = summarize(r.records);
    const auto file = scratch("blocker");
    std::ofstream(file) << "x";
    CHECK_THROWS_AS(emit_outputs(r, (file / "sub").string()), IoError);
    std::filesystem::remove_all(file);
    CHECK_THROWS_AS(emit_outputs(ExperimentResult{}, "/tmp"), ValidationError);
}

TEST_CASE("imported channels drive the design")
{
    ExperimentConfig c = small_config();
    c.modes = {Mode::Perfect, Mode::Robust};
    c.n_draws = 2;
    const auto dir = scratch("import");
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "channels.txt");
        for (int d = 0; d < 2; ++d)
        {
            ScenarioConfig sc = c.scenario;
            sc.seed = 40 + d;
            Rng rng(sc.seed);
            const Eigen::Vector3d u1 = sample_grid_node(sc.bs_grid, rng);
            const Eigen::Vector3d u2 = sample_grid_node(sc.ris_grid, rng);
            const auto r = generate_scenario(sc, u1, u2);
            io::write_channel_set(f, r.dt, d);
            io::write_channel_set(f, r.real, d);
        }
    }
    c.import_channels = (dir / "channels.txt").string();
    const ExperimentResult r = run_experiment(c);
    CHECK(r.records.size() == 4);
    c.import_channels = (dir / "missing.txt").string();
    CHECK_THROWS_AS(run_experiment(c), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("multi-antenna users abort robust runs")
{
    ExperimentConfig c = small_config();
    c.scenario.n_rx = 2;
    c.modes = {Mode::Robust};
    c.n_draws = 2;
    CHECK_THROWS_AS(run_experiment(c), ExperimentAborted);
}
