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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dtris/linalg.hpp"
#include "dtris/random.hpp"

namespace dtris
{

// Rectangular user region in the horizontal plane at height origin.z().
struct Grid
{
    Eigen::Vector3d origin{0.0, 0.0, 0.0};
    double extent_x = 1.0;
    double extent_y = 1.0;
    double spacing = 0.2;

    bool contains(const Eigen::Vector3d &p) const;
    Eigen::Vector3d center() const;
    std::size_t nodes_x() const;
    std::size_t nodes_y() const;
    Eigen::Vector3d node(std::size_t ix, std::size_t iy) const;
};

struct ScenarioConfig
{
    int n_tx = 16;  // BS antennas
    int n_rx = 1;   // antennas per user
    int n_ris = 16; // RIS elements
    Eigen::Vector3d bs_position{0.0, 0.0, 6.0};
    Eigen::Vector3d ris_position{30.0, 20.0, 6.0};
    Grid bs_grid{{30.0, -12.0, 1.5}, 20.0, 16.0, 0.2};
    Grid ris_grid{{12.9, 30.6, 1.5}, 12.0, 12.0, 0.2};
    double element_spacing = 0.5; // wavelengths
    int l_real = 10;
    int l_dt = 2;
    double noise_power = 1e-3;
    double wavelength = 0.1; // meters, only sets the line-of-sight phase
    // When false only the BS -> user-1 link carries digital-twin truncation
    // error; the RIS -> user links are exact in the twin.
    bool truncate_ris_links = false;
    std::uint64_t seed = 1;

    void validate() const;

    // Array boresights (azimuth, radians). The BS faces its service grid;
    // the RIS faces the bisector of the BS and its service grid.
    double bs_boresight() const;
    double ris_boresight() const;
};

// Azimuth of `target` seen from an array at `from` with the given boresight,
// wrapped to (-pi, pi].
double relative_azimuth(const Eigen::Vector3d &from, double boresight, const Eigen::Vector3d &target);

struct Path
{
    cd gain{0.0, 0.0};
    double aod = 0.0; // departure azimuth at the transmitter, radians
    double aoa = 0.0; // arrival azimuth at the receiver, radians

    double power() const { return std::norm(gain); }
};

enum class Provenance
{
    DigitalTwin,
    Real
};

const char *to_string(Provenance p);

struct ChannelSet
{
    CMat h1;   // n_rx x n_tx, BS -> user 1
    CMat g1;   // n_rx x n_ris, RIS -> user 1
    CMat g2;   // n_rx x n_ris, RIS -> user 2
    CMat h_br; // n_ris x n_tx, BS -> RIS
    Provenance provenance = Provenance::Real;

    int n_tx() const { return static_cast<int>(h_br.cols()); }
    int n_ris() const { return static_cast<int>(h_br.rows()); }
    int n_rx() const { return static_cast<int>(h1.rows()); }
    void validate() const;
};

// Path lists per link, each sorted by descending power.
struct LinkPaths
{
    std::vector<Path> h1, g1, g2, h_br;
};

struct ScenarioRealization
{
    ChannelSet dt;
    ChannelSet real;
    LinkPaths paths;
};

// a[i] = exp(j*2*pi*spacing*i*sin(angle)), i = 0..n-1
CVec steering_ula(int n, double angle, double spacing);

// H = sum_l gain_l * a_rx(aoa_l) * a_tx(aod_l)^H
CMat synth_channel(std::span<const Path> paths, int rx_n, int tx_n, double spacing);

// Random per-link path lists: one line-of-sight path from geometry plus
// l_real - 1 scattered paths with CN(0, exp(-p/2)) gains and uniform angles.
LinkPaths draw_paths(const ScenarioConfig &config, const Eigen::Vector3d &user1, const Eigen::Vector3d &user2);

// Realizes the twin (l_dt strongest paths) and real (all paths) channel sets.
ScenarioRealization realize(const ScenarioConfig &config, const LinkPaths &paths);

// Draws paths with config.seed and realizes both sets.
ScenarioRealization generate_scenario(const ScenarioConfig &config, const Eigen::Vector3d &user1,
                                      const Eigen::Vector3d &user2);

// real - dt
CMat channel_error(const CMat &real, const CMat &dt);

// Uniformly chosen grid node.
Eigen::Vector3d sample_grid_node(const Grid &grid, Rng &rng);

} // namespace dtris
