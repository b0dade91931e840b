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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtris/optimizer.hpp"
#include "dtris/robust.hpp"
#include "dtris/scenario.hpp"

namespace dtris
{

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// More than half of the design runs failed.
class ExperimentAborted : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum class Mode
{
    Perfect,
    Robust,
    Sweep
};

const char *to_string(Mode m);
Mode parse_mode(const std::string &s);

struct ExperimentConfig
{
    ScenarioConfig scenario;
    std::vector<double> gammas{0.5, 1.0, 1.5, 2.0};
    std::vector<Mode> modes{Mode::Perfect, Mode::Robust, Mode::Sweep};
    int n_draws = 100;
    int n_blocks = 0;     // > 0: the robust design learns Sigma over this many blocks
    int n_mc = 2000;      // sampled-error outage per design; 0 disables
    int n_stats = 10000;  // offline error draws for the reference covariance
    double rho = 0.05;
    WhiteningKind whitening = WhiteningKind::Zca;
    int conv_window = 10;
    std::uint64_t seed = 1;
    std::string output_dir = "results";
    std::string import_channels; // channel file replacing the synthetic generator
    int max_iters = 20;
    double rel_tol = 1e-3;
    int n_cand = 100;
    unsigned threads = 0; // 0: hardware concurrency

    void validate() const;
    bool has(Mode m) const;
};

// Configuration text: one `key = value` per line, '#' starts a comment.
// Lists are comma separated, vectors are x,y,z and grids are
// x,y,z,extent_x,extent_y,spacing. Unknown keys are rejected.
ExperimentConfig parse_config(std::istream &is);
ExperimentConfig load_config(const std::string &path);
// Applies one key to an existing configuration.
void set_config_value(ExperimentConfig &cfg, const std::string &key, const std::string &value);
// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig &cfg);
void write_config(std::ostream &os, const ExperimentConfig &cfg);

struct DrawRecord
{
    int draw = 0;
    double gamma = 0.0;
    Mode mode = Mode::Perfect;
    bool feasible = false;
    bool failed = false;
    double se1 = 0.0; // on the real channels
    double se2 = 0.0;
    double power = 0.0;
    bool outage1 = false;
    bool outage2 = false;
    // Outage over sampled errors around the twin; NaN when not evaluated.
    double mc_outage1 = std::numeric_limits<double>::quiet_NaN();
    double mc_outage2 = std::numeric_limits<double>::quiet_NaN();
    std::string error;
    // Solution checks, kept in memory only (not part of draws.csv).
    double modulus_error = 0.0; // max | |theta_m| - 1 |
    bool power_monotone = true; // accepted AO power never increased

    double sum_se() const { return se1 + se2; }
    bool outage() const { return outage1 || outage2; }
};

struct ModeSummary
{
    Mode mode = Mode::Perfect;
    double gamma = 0.0;
    int draws = 0;
    int feasible = 0;
    int failed = 0;
    double outage = 0.0;          // over draws that did not fail
    double outage_feasible = 0.0; // over feasible designs
    double mean_power = 0.0;      // over feasible designs
    double mean_sum_se = 0.0;
    double mc_outage1 = std::numeric_limits<double>::quiet_NaN();
    double mc_outage2 = std::numeric_limits<double>::quiet_NaN();
};

struct CdfPoint
{
    double value = 0.0;
    double fraction = 0.0;
};

struct ExperimentResult
{
    ExperimentConfig config;
    std::vector<DrawRecord> records; // draw-major, then gamma, then mode
    std::vector<ModeSummary> summary;
};

ExperimentResult run_experiment(const ExperimentConfig &cfg);

// Empirical CDF at the distinct sample values.
std::vector<CdfPoint> empirical_cdf(std::vector<double> values);
std::vector<ModeSummary> summarize(const std::vector<DrawRecord> &records);

// Writes draws.csv, cdf.csv, summary.csv and manifest.json into `dir`.
// Files are written to temporaries first and renamed once all succeeded.
void emit_outputs(const ExperimentResult &result, const std::string &dir);

// Parses draws.csv back into records (error texts are not stored there).
std::vector<DrawRecord> read_draws_csv(std::istream &is);

} // namespace dtris
