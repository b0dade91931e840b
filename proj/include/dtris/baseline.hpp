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

#include <iosfwd>
#include <string>
#include <vector>

#include "dtris/optimizer.hpp"
#include "dtris/scenario.hpp"

namespace dtris
{

enum class CodebookKind
{
    Bs,
    Ris
};

struct Codebook
{
    CodebookKind kind = CodebookKind::Bs;
    std::vector<CVec> entries;
    // Steering angle relative to the BS boresight (BS) or segment index (RIS).
    std::vector<double> labels;
    // BS codebooks: index of the beam matched to the BS -> RIS direction.
    int ris_entry = -1;

    std::size_t size() const { return entries.size(); }
    void validate() const;
};

// Angular interval [lo, hi] of the BS service grid seen from the BS.
std::pair<double, double> bs_grid_interval(const ScenarioConfig &config);

// 15 beams spread uniformly over the service-grid interval plus the beam
// matched to the RIS, sorted by angle. Unit power.
Codebook build_bs_codebook(const ScenarioConfig &config);

// Centre of segment s (row-major over a 4 x 4 partition of the RIS grid).
Eigen::Vector3d ris_segment_center(const ScenarioConfig &config, int s);

// Conjugate-phase RIS configuration for each of the 16 segment centres,
// from array geometry only.
Codebook build_ris_codebook(const ScenarioConfig &config);

struct SweepResult
{
    DesignSolution solution;
    int bs_index = -1;
    int ris_index = -1;
    double score = 0.0; // min(SE_1 - gamma_1, SE_2 - gamma_2)
    int evaluated = 0;
};

// Exhaustive pair search at fixed powers: user 1 gets BS entry b scaled to
// p1, user 2 the RIS-matched beam scaled to p2, the RIS uses entry r. The
// pair with the largest minimum SE margin wins; ties go to the lowest
// (b, r). Feasible when both SEs reach their targets within 1e-9.
SweepResult sweep(const ChannelSet &ch_real, const Codebook &bs_cb, const Codebook &ris_cb, double p1, double p2,
                  const DesignTargets &tg);

// Matrix-record export (fields kind=bs_codebook|ris_codebook, index, label,
// and ris_entry on the BS records).
void write_codebook(std::ostream &os, const Codebook &cb);
Codebook read_codebook(std::istream &is);

} // namespace dtris
