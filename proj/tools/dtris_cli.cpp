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

// Command-line driver: runs a design experiment and writes draws.csv,
// cdf.csv, summary.csv and manifest.json.

#include <cmath>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "dtris/experiment.hpp"
#include "dtris/version.hpp"

namespace
{

std::string cell(double v)
{
    if (std::isnan(v))
        return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

void print_summary(const dtris::ExperimentResult &r)
{
    std::printf("%-8s %8s %6s %8s %6s %8s %10s %10s %8s\n", "mode", "gamma", "draws", "feasible", "failed", "outage",
                "power_W", "sum_se", "mc_out1");
    for (const auto &s : r.summary)
        std::printf("%-8s %8s %6d %8d %6d %8s %10s %10s %8s\n", dtris::to_string(s.mode), cell(s.gamma).c_str(),
                    s.draws, s.feasible, s.failed, cell(s.outage).c_str(), cell(s.mean_power).c_str(),
                    cell(s.mean_sum_se).c_str(), cell(s.mc_outage1).c_str());
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Digital-twin aided RIS transmission design experiments"};
    app.set_version_flag("--version", std::string(dtris::kVersion));

    std::string config_path, mode, out, import_path, whitening;
    std::vector<double> gammas;
    double rho = 0.0;
    int draws = 0, blocks = -1, mc = -1, stats = -1;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::vector<std::string> overrides;

    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--mode", mode, "perfect, robust, sweep or all")
        ->check(CLI::IsMember({"perfect", "robust", "sweep", "all"}));
    app.add_option("--gamma", gammas, "SE targets in bit/s/Hz (space or comma separated)")->delimiter(',');
    app.add_option("--rho", rho, "outage level of the robust constraint");
    app.add_option("--draws", draws, "number of user/channel draws");
    app.add_option("--blocks", blocks, "coherence blocks for online covariance learning (0: offline)");
    app.add_option("--mc", mc, "sampled-error outage trials per design (0: off)");
    app.add_option("--stats", stats, "offline error draws for the reference covariance");
    app.add_option("--whitening", whitening, "zca, cholesky or pca");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads (0: all cores)");
    app.add_option("--out", out, "output directory");
    app.add_option("--import-channels", import_path, "channel file replacing the synthetic generator")
        ->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "extra key=value configuration overrides");
    bool print_config = false;
    app.add_flag("--print-config", print_config, "print the effective configuration and exit");

    CLI11_PARSE(app, argc, argv);

    try
    {
        dtris::ExperimentConfig cfg = config_path.empty() ? dtris::ExperimentConfig{} : dtris::load_config(config_path);
        auto set = [&](const char *key, const std::string &v) { dtris::set_config_value(cfg, key, v); };
        if (!mode.empty())
            set("modes", mode);
        if (!gammas.empty())
            cfg.gammas = gammas;
        if (app.count("--rho"))
            cfg.rho = rho;
        if (app.count("--draws"))
            cfg.n_draws = draws;
        if (app.count("--blocks"))
            cfg.n_blocks = blocks;
        if (app.count("--mc"))
            cfg.n_mc = mc;
        if (app.count("--stats"))
            cfg.n_stats = stats;
        if (!whitening.empty())
            set("whitening", whitening);
        if (app.count("--seed"))
            cfg.seed = seed;
        if (app.count("--threads"))
            cfg.threads = threads;
        if (!out.empty())
            cfg.output_dir = out;
        if (!import_path.empty())
            cfg.import_channels = import_path;
        for (const std::string &kv : overrides)
        {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw dtris::ValidationError("--set expects key=value, got '" + kv + "'");
            set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
        }
        cfg.validate();

        if (print_config)
        {
            dtris::write_config(std::cout, cfg);
            return 0;
        }

        const dtris::ExperimentResult r = dtris::run_experiment(cfg);
        dtris::emit_outputs(r, cfg.output_dir);
        print_summary(r);
        std::printf("wrote %zu records to %s\n", r.records.size(), cfg.output_dir.c_str());
        return 0;
    }
    catch (const dtris::ValidationError &e)
    {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    }
    catch (const dtris::IoError &e)
    {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 3;
    }
    catch (const dtris::ExperimentAborted &e)
    {
        std::cerr << e.what() << '\n';
        return 4;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
