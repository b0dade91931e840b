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

#include "dtris/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dtris
{

namespace
{

double wrap_angle(double a)
{
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi)
        a += 2.0 * std::numbers::pi;
    return a;
}

double azimuth(const Eigen::Vector3d &from, const Eigen::Vector3d &to)
{
    return std::atan2(to.y() - from.y(), to.x() - from.x());
}

// Bisector of two azimuths, taking the shorter arc.
double bisector(double a, double b)
{
    return wrap_angle(a + 0.5 * wrap_angle(b - a));
}

Path line_of_sight(const Eigen::Vector3d &tx, double tx_boresight, const Eigen::Vector3d &rx, double rx_boresight,
                   double wavelength)
{
    const double d = (rx - tx).norm();
    Path p;
    p.gain = std::polar(1.0, -2.0 * std::numbers::pi * d / wavelength);
    p.aod = relative_azimuth(tx, tx_boresight, rx);
    p.aoa = relative_azimuth(rx, rx_boresight, tx);
    return p;
}

std::vector<Path> draw_link(const Path &los, int l_real, Rng &rng)
{
    std::vector<Path> paths;
    paths.reserve(static_cast<std::size_t>(l_real));
    paths.push_back(los);
    const double half_pi = 0.5 * std::numbers::pi;
    for (int p = 1; p < l_real; ++p)
    {
        Path s;
        s.gain = complex_normal(rng, std::exp(-0.5 * p));
        s.aod = uniform(rng, -half_pi, half_pi);
        s.aoa = uniform(rng, -half_pi, half_pi);
        paths.push_back(s);
    }
    std::stable_sort(paths.begin(), paths.end(),
                     [](const Path &a, const Path &b) { return a.power() > b.power(); });
    return paths;
}

std::span<const Path> strongest(const std::vector<Path> &paths, int count)
{
    const auto n = std::min<std::size_t>(paths.size(), static_cast<std::size_t>(count));
    return {paths.data(), n};
}

} // namespace

bool Grid::contains(const Eigen::Vector3d &p) const
{
    constexpr double slack = 1e-9;
    return p.x() >= origin.x() - slack && p.x() <= origin.x() + extent_x + slack && p.y() >= origin.y() - slack &&
           p.y() <= origin.y() + extent_y + slack;
}

Eigen::Vector3d Grid::center() const
{
    return origin + Eigen::Vector3d(0.5 * extent_x, 0.5 * extent_y, 0.0);
}

std::size_t Grid::nodes_x() const
{
    return static_cast<std::size_t>(std::floor(extent_x / spacing + 1e-9)) + 1;
}

std::size_t Grid::nodes_y() const
{
    return static_cast<std::size_t>(std::floor(extent_y / spacing + 1e-9)) + 1;
}

Eigen::Vector3d Grid::node(std::size_t ix, std::size_t iy) const
{
    return origin + Eigen::Vector3d(spacing * static_cast<double>(ix), spacing * static_cast<double>(iy), 0.0);
}

void ScenarioConfig::validate() const
{
    if (n_tx < 1 || n_rx < 1 || n_ris < 1)
        throw ValidationError("scenario: antenna and element counts must be >= 1");
    if (l_real < 1 || l_dt < 1 || l_dt > l_real)
        throw ValidationError("scenario: require 1 <= l_dt <= l_real");
    if (!(element_spacing > 0.0) || !(bs_grid.spacing > 0.0) || !(ris_grid.spacing > 0.0))
        throw ValidationError("scenario: spacings must be positive");
    if (!(bs_grid.extent_x >= 0.0) || !(bs_grid.extent_y >= 0.0) || !(ris_grid.extent_x >= 0.0) ||
        !(ris_grid.extent_y >= 0.0))
        throw ValidationError("scenario: grid extents must be non-negative");
    if (!(noise_power > 0.0))
        throw ValidationError("scenario: noise power must be positive");
    if (!(wavelength > 0.0))
        throw ValidationError("scenario: wavelength must be positive");
}

double ScenarioConfig::bs_boresight() const
{
    return azimuth(bs_position, bs_grid.center());
}

double ScenarioConfig::ris_boresight() const
{
    return bisector(azimuth(ris_position, bs_position), azimuth(ris_position, ris_grid.center()));
}

double relative_azimuth(const Eigen::Vector3d &from, double boresight, const Eigen::Vector3d &target)
{
    return wrap_angle(azimuth(from, target) - boresight);
}

const char *to_string(Provenance p)
{
    return p == Provenance::DigitalTwin ? "dt" : "real";
}

void ChannelSet::validate() const
{
    const auto nt = h_br.cols(), m = h_br.rows(), nr = h1.rows();
    if (nt < 1 || m < 1 || nr < 1)
        throw ValidationError("channel set: empty channel");
    if (h1.cols() != nt || g1.rows() != nr || g1.cols() != m || g2.rows() != nr || g2.cols() != m)
        throw ValidationError("channel set: inconsistent link shapes");
}

CVec steering_ula(int n, double angle, double spacing)
{
    if (n < 1)
        throw ValidationError("steering_ula: n must be >= 1");
    CVec a(n);
    const double step = 2.0 * std::numbers::pi * spacing * std::sin(angle);
    for (int i = 0; i < n; ++i)
        a(i) = std::polar(1.0, step * i);
    return a;
}

CMat synth_channel(std::span<const Path> paths, int rx_n, int tx_n, double spacing)
{
    if (paths.empty())
        throw ValidationError("synth_channel: empty path list");
    CMat h = CMat::Zero(rx_n, tx_n);
    for (const Path &p : paths)
        h.noalias() += p.gain * steering_ula(rx_n, p.aoa, spacing) * steering_ula(tx_n, p.aod, spacing).adjoint();
    return h;
}

LinkPaths draw_paths(const ScenarioConfig &config, const Eigen::Vector3d &user1, const Eigen::Vector3d &user2)
{
    config.validate();
    if (!config.bs_grid.contains(user1))
        throw ValidationError("generate_scenario: user 1 outside the BS service grid");
    if (!config.ris_grid.contains(user2))
        throw ValidationError("generate_scenario: user 2 outside the RIS service grid");

    Rng rng(config.seed);
    const double bs_b = config.bs_boresight();
    const double ris_b = config.ris_boresight();
    const double lambda = config.wavelength;
    // Users carry a ULA with boresight along +x.
    constexpr double user_b = 0.0;

    LinkPaths lp;
    lp.h1 = draw_link(line_of_sight(config.bs_position, bs_b, user1, user_b, lambda), config.l_real, rng);
    lp.g1 = draw_link(line_of_sight(config.ris_position, ris_b, user1, user_b, lambda), config.l_real, rng);
    lp.g2 = draw_link(line_of_sight(config.ris_position, ris_b, user2, user_b, lambda), config.l_real, rng);
    lp.h_br = draw_link(line_of_sight(config.bs_position, bs_b, config.ris_position, ris_b, lambda), config.l_real, rng);
    return lp;
}

ScenarioRealization realize(const ScenarioConfig &config, const LinkPaths &paths)
{
    const int nt = config.n_tx, nr = config.n_rx, m = config.n_ris;
    const double d = config.element_spacing;
    const int ris_paths = config.truncate_ris_links ? config.l_dt : config.l_real;

    ScenarioRealization out;
    out.paths = paths;
    out.real.h1 = synth_channel(paths.h1, nr, nt, d);
    out.real.g1 = synth_channel(paths.g1, nr, m, d);
    out.real.g2 = synth_channel(paths.g2, nr, m, d);
    out.real.h_br = synth_channel(paths.h_br, m, nt, d);
    out.real.provenance = Provenance::Real;

    out.dt.h1 = synth_channel(strongest(paths.h1, config.l_dt), nr, nt, d);
    out.dt.g1 = synth_channel(strongest(paths.g1, ris_paths), nr, m, d);
    out.dt.g2 = synth_channel(strongest(paths.g2, ris_paths), nr, m, d);
    out.dt.h_br = out.real.h_br;
    out.dt.provenance = Provenance::DigitalTwin;
    return out;
}

ScenarioRealization generate_scenario(const ScenarioConfig &config, const Eigen::Vector3d &user1,
                                      const Eigen::Vector3d &user2)
{
    return realize(config, draw_paths(config, user1, user2));
}

CMat channel_error(const CMat &real, const CMat &dt)
{
    if (real.rows() != dt.rows() || real.cols() != dt.cols())
        throw ValidationError("channel_error: shape mismatch");
    return real - dt;
}

Eigen::Vector3d sample_grid_node(const Grid &grid, Rng &rng)
{
    std::uniform_int_distribution<std::size_t> ux(0, grid.nodes_x() - 1), uy(0, grid.nodes_y() - 1);
    const std::size_t ix = ux(rng);
    const std::size_t iy = uy(rng);
    return grid.node(ix, iy);
}

} // namespace dtris
