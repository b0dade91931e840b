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
#include <map>
#include <string>
#include <vector>

#include "dtris/linalg.hpp"
#include "dtris/scenario.hpp"

namespace dtris::io
{

// One line of the structured matrix text format:
//
//   key=value key=value ... rows=R cols=C data= re im re im ...
//
// Entries are column-major interleaved real/imaginary pairs written with 17
// significant digits. Lines starting with '#' and blank lines are ignored.
struct MatrixRecord
{
    std::map<std::string, std::string> fields; // excludes rows, cols, data
    CMat data;

    const std::string &field(const std::string &key) const;
    bool has(const std::string &key) const { return fields.count(key) != 0; }
};

void write_record(std::ostream &os, const MatrixRecord &rec);
MatrixRecord parse_record(const std::string &line);
std::vector<MatrixRecord> read_records(std::istream &is);

// Channel import/export. Each set writes four records with fields
// link=h1|g1|g2|h_br, provenance=dt|real and draw=<index>.
struct ChannelDraw
{
    int draw = 0;
    ChannelSet dt;
    ChannelSet real;
};

void write_channel_set(std::ostream &os, const ChannelSet &set, int draw);
std::vector<ChannelDraw> read_channel_draws(std::istream &is);

} // namespace dtris::io
