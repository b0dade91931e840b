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

#include "dtris/matrix_io.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace dtris::io
{

namespace
{

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int parse_int(const std::string &s, const char *what)
{
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError(std::string("matrix record: bad integer for ") + what + ": '" + s + "'");
    return v;
}

} // namespace

const std::string &MatrixRecord::field(const std::string &key) const
{
    const auto it = fields.find(key);
    if (it == fields.end())
        throw ValidationError("matrix record: missing field '" + key + "'");
    return it->second;
}

void write_record(std::ostream &os, const MatrixRecord &rec)
{
    for (const auto &[k, v] : rec.fields)
        os << k << '=' << v << ' ';
    os << "rows=" << rec.data.rows() << " cols=" << rec.data.cols() << " data=";
    for (Eigen::Index j = 0; j < rec.data.cols(); ++j)
        for (Eigen::Index i = 0; i < rec.data.rows(); ++i)
            os << ' ' << format_double(rec.data(i, j).real()) << ' ' << format_double(rec.data(i, j).imag());
    os << '\n';
}

MatrixRecord parse_record(const std::string &line)
{
    std::istringstream ss(line);
    std::string tok;
    MatrixRecord rec;
    int rows = -1, cols = -1;
    bool have_data = false;
    while (ss >> tok)
    {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ValidationError("matrix record: expected key=value, got '" + tok + "'");
        const std::string key = tok.substr(0, eq);
        const std::string value = tok.substr(eq + 1);
        if (key == "rows")
            rows = parse_int(value, "rows");
        else if (key == "cols")
            cols = parse_int(value, "cols");
        else if (key == "data")
        {
            if (!value.empty())
                throw ValidationError("matrix record: 'data=' must be followed by whitespace");
            have_data = true;
            break;
        }
        else
            rec.fields[key] = value;
    }
    if (!have_data || rows < 0 || cols < 0)
        throw ValidationError("matrix record: rows, cols and data are required");

    rec.data.resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
        {
            double re = 0.0, im = 0.0;
            if (!(ss >> re >> im))
                throw ValidationError("matrix record: too few entries");
            rec.data(i, j) = {re, im};
        }
    if (ss >> tok)
        throw ValidationError("matrix record: trailing data");
    linalg::require_finite(rec.data, "matrix record");
    return rec;
}

std::vector<MatrixRecord> read_records(std::istream &is)
{
    std::vector<MatrixRecord> out;
    std::string line;
    while (std::getline(is, line))
    {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        out.push_back(parse_record(line));
    }
    return out;
}

void write_channel_set(std::ostream &os, const ChannelSet &set, int draw)
{
    const std::pair<const char *, const CMat *> links[] = {
        {"h1", &set.h1}, {"g1", &set.g1}, {"g2", &set.g2}, {"h_br", &set.h_br}};
    for (const auto &[name, m] : links)
    {
        MatrixRecord rec;
        rec.fields["draw"] = std::to_string(draw);
        rec.fields["link"] = name;
        rec.fields["provenance"] = to_string(set.provenance);
        rec.data = *m;
        write_record(os, rec);
    }
}

std::vector<ChannelDraw> read_channel_draws(std::istream &is)
{
    std::map<int, ChannelDraw> draws;
    std::map<std::pair<int, std::string>, int> seen;
    for (const MatrixRecord &rec : read_records(is))
    {
        const int draw = rec.has("draw") ? parse_int(rec.field("draw"), "draw") : 0;
        const std::string &link = rec.field("link");
        const std::string &prov = rec.field("provenance");
        if (prov != "dt" && prov != "real")
            throw ValidationError("channel file: provenance must be dt or real");
        if (seen[{draw, prov + ":" + link}]++)
            throw ValidationError("channel file: duplicate record for draw " + std::to_string(draw) + " " + link);

        ChannelDraw &cd = draws[draw];
        cd.draw = draw;
        ChannelSet &set = prov == "dt" ? cd.dt : cd.real;
        set.provenance = prov == "dt" ? Provenance::DigitalTwin : Provenance::Real;
        if (link == "h1")
            set.h1 = rec.data;
        else if (link == "g1")
            set.g1 = rec.data;
        else if (link == "g2")
            set.g2 = rec.data;
        else if (link == "h_br")
            set.h_br = rec.data;
        else
            throw ValidationError("channel file: unknown link '" + link + "'");
    }

    std::vector<ChannelDraw> out;
    for (auto &[k, cd] : draws)
    {
        // A draw given only in one provenance is used for both.
        const bool has_dt = cd.dt.h_br.size() != 0, has_real = cd.real.h_br.size() != 0;
        if (!has_dt && has_real)
        {
            cd.dt = cd.real;
            cd.dt.provenance = Provenance::DigitalTwin;
        }
        else if (has_dt && !has_real)
        {
            cd.real = cd.dt;
            cd.real.provenance = Provenance::Real;
        }
        cd.dt.validate();
        cd.real.validate();
        out.push_back(std::move(cd));
    }
    return out;
}

} // namespace dtris::io
