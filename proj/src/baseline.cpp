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

#include "dtris/baseline.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "dtris/matrix_io.hpp"

namespace dtris
{

namespace
{

constexpr int kGridBeams = 15;
constexpr int kSegmentsPerSide = 4;

const char *kind_name(CodebookKind k) { return k == CodebookKind::Bs ? "bs_codebook" : "ris_codebook"; }

} // namespace

void Codebook::validate() const
{
    if (entries.empty())
        throw ValidationError("codebook: no entries");
    if (labels.size() != entries.size())
        throw ValidationError("codebook: one label per entry required");
    const auto n = entries.front().size();
    for (const CVec &e : entries)
        if (e.size() != n || n == 0)
            throw ValidationError("codebook: entries must share a non-zero length");
    if (kind == CodebookKind::Bs && (ris_entry < 0 || ris_entry >= static_cast<int>(entries.size())))
        throw ValidationError("codebook: BS codebook needs a RIS-matched entry");
}

std::pair<double, double> bs_grid_interval(const ScenarioConfig &config)
{
    const Grid &g = config.bs_grid;
    const double b = config.bs_boresight();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    // Extreme azimuths of a rectangle seen from outside lie at its corners.
    for (double fx : {0.0, 1.0})
        for (double fy : {0.0, 1.0})
        {
            const Eigen::Vector3d c = g.origin + Eigen::Vector3d(fx * g.extent_x, fy * g.extent_y, 0.0);
            const double a = relative_azimuth(config.bs_position, b, c);
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
    return {lo, hi};
}

Codebook build_bs_codebook(const ScenarioConfig &config)
{
    config.validate();
    const auto [lo, hi] = bs_grid_interval(config);
    const double d = config.element_spacing;
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.n_tx));

    std::vector<std::pair<double, bool>> angles;
    for (int k = 0; k < kGridBeams; ++k)
        angles.push_back({lo + (hi - lo) * k / (kGridBeams - 1), false});
    angles.push_back({relative_azimuth(config.bs_position, config.bs_boresight(), config.ris_position), true});
    std::stable_sort(angles.begin(), angles.end(),
                     [](const auto &a, const auto &b) { return a.first < b.first; });

    Codebook cb;
    cb.kind = CodebookKind::Bs;
    for (std::size_t i = 0; i < angles.size(); ++i)
    {
        cb.entries.push_back(scale * steering_ula(config.n_tx, angles[i].first, d));
        cb.labels.push_back(angles[i].first);
        if (angles[i].second)
            cb.ris_entry = static_cast<int>(i);
    }
    return cb;
}

Eigen::Vector3d ris_segment_center(const ScenarioConfig &config, int s)
{
    if (s < 0 || s >= kSegmentsPerSide * kSegmentsPerSide)
        throw ValidationError("ris_segment_center: segment index out of range");
    const Grid &g = config.ris_grid;
    const int ix = s % kSegmentsPerSide, iy = s / kSegmentsPerSide;
    return g.origin + Eigen::Vector3d((ix + 0.5) * g.extent_x / kSegmentsPerSide,
                                      (iy + 0.5) * g.extent_y / kSegmentsPerSide, 0.0);
}

Codebook build_ris_codebook(const ScenarioConfig &config)
{
    config.validate();
    const double rb = config.ris_boresight();
    const double d = config.element_spacing;
    // Arrival from the BS at each element; departure toward each segment.
    const CVec arrive = steering_ula(config.n_ris, relative_azimuth(config.ris_position, rb, config.bs_position), d);
    Codebook cb;
    cb.kind = CodebookKind::Ris;
    for (int s = 0; s < kSegmentsPerSide * kSegmentsPerSide; ++s)
    {
        const double aod = relative_azimuth(config.ris_position, rb, ris_segment_center(config, s));
        const CVec depart = steering_ula(config.n_ris, aod, d);
        CVec theta(config.n_ris);
        for (int m = 0; m < config.n_ris; ++m)
            theta(m) = std::polar(1.0, std::arg(depart(m)) - std::arg(arrive(m)));
        cb.entries.push_back(theta);
        cb.labels.push_back(s);
    }
    return cb;
}

SweepResult sweep(const ChannelSet &ch_real, const Codebook &bs_cb, const Codebook &ris_cb, double p1, double p2,
                  const DesignTargets &tg)
{
    ch_real.validate();
    tg.validate();
    bs_cb.validate();
    ris_cb.validate();
    if (bs_cb.kind != CodebookKind::Bs || ris_cb.kind != CodebookKind::Ris)
        throw ValidationError("sweep: expected a BS and a RIS codebook");
    if (bs_cb.entries.front().size() != ch_real.n_tx() || ris_cb.entries.front().size() != ch_real.n_ris())
        throw ValidationError("sweep: codebook dimensions do not match the channels");
    if (!(p1 >= 0.0) || !(p2 >= 0.0) || !std::isfinite(p1) || !std::isfinite(p2))
        throw ValidationError("sweep: powers must be finite and non-negative");

    SweepResult best;
    best.score = -std::numeric_limits<double>::infinity();
    const CVec f2 = std::sqrt(p2) * bs_cb.entries[static_cast<std::size_t>(bs_cb.ris_entry)];
    for (std::size_t b = 0; b < bs_cb.size(); ++b)
    {
        const CVec f1 = std::sqrt(p1) * bs_cb.entries[b];
        for (std::size_t r = 0; r < ris_cb.size(); ++r)
        {
            const SePair se = effective_se(ch_real, f1, f2, ris_cb.entries[r], tg);
            const double score = std::min(se.se1 - tg.gamma1, se.se2 - tg.gamma2);
            ++best.evaluated;
            if (score > best.score)
            {
                best.score = score;
                best.bs_index = static_cast<int>(b);
                best.ris_index = static_cast<int>(r);
            }
        }
    }

    DesignSolution &s = best.solution;
    s.f1 = std::sqrt(p1) * bs_cb.entries[static_cast<std::size_t>(best.bs_index)];
    s.f2 = f2;
    s.theta = ris_cb.entries[static_cast<std::size_t>(best.ris_index)];
    s.power = s.f1.squaredNorm() + s.f2.squaredNorm();
    s.eps1 = (cascaded_user1(ch_real, s.theta) * s.f2).squaredNorm() + tg.sigma1_sq;
    s.eps2 = (cascaded_user2(ch_real, s.theta) * s.f1).squaredNorm() + tg.sigma2_sq;
    const SePair se = effective_se(ch_real, s, tg);
    s.feasible = se.se1 >= tg.gamma1 - 1e-9 && se.se2 >= tg.gamma2 - 1e-9;
    s.iterations = 1;
    s.power_trace = {s.power};
    return best;
}

void write_codebook(std::ostream &os, const Codebook &cb)
{
    cb.validate();
    for (std::size_t i = 0; i < cb.size(); ++i)
    {
        io::MatrixRecord rec;
        rec.fields["kind"] = kind_name(cb.kind);
        rec.fields["index"] = std::to_string(i);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", cb.labels[i]);
        rec.fields["label"] = buf;
        if (cb.kind == CodebookKind::Bs)
            rec.fields["ris_entry"] = std::to_string(cb.ris_entry);
        rec.data = cb.entries[i];
        io::write_record(os, rec);
    }
}

Codebook read_codebook(std::istream &is)
{
    Codebook cb;
    bool first = true;
    for (const io::MatrixRecord &rec : io::read_records(is))
    {
        const std::string &k = rec.field("kind");
        if (k != "bs_codebook" && k != "ris_codebook")
            continue;
        const CodebookKind kind = k == "bs_codebook" ? CodebookKind::Bs : CodebookKind::Ris;
        if (first)
            cb.kind = kind;
        else if (kind != cb.kind)
            throw ValidationError("codebook file: mixed codebook kinds");
        first = false;
        if (rec.data.cols() != 1)
            throw ValidationError("codebook file: entries must be column vectors");
        try
        {
            if (std::stoul(rec.field("index")) != cb.entries.size())
                throw ValidationError("codebook file: entries out of order");
            cb.labels.push_back(std::stod(rec.field("label")));
            if (kind == CodebookKind::Bs)
                cb.ris_entry = std::stoi(rec.field("ris_entry"));
        }
        catch (const std::logic_error &e)
        {
            if (dynamic_cast<const ValidationError *>(&e))
                throw;
            throw ValidationError("codebook file: malformed numeric field");
        }
        cb.entries.push_back(rec.data.col(0));
    }
    cb.validate();
    return cb;
}

} // namespace dtris
