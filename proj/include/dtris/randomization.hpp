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
#include <functional>
#include <span>
#include <vector>

#include "dtris/linalg.hpp"

namespace dtris
{

enum class RecoveryMode
{
    Beam,  // candidate f with f f^H ~ F, rescaled to power tr(F)
    Phase, // candidate theta with E ~ theta'^H theta', theta' = [1, theta]
};

class RecoveryFailure : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

struct RecoveryOptions
{
    int n_cand = 100;
    std::uint64_t seed = 0;
    // Adds the dominant-eigenvector candidate to the scored pool.
    bool include_principal = true;
};

struct RecoveryResult
{
    CVec value;
    double score = 0.0;
    bool fallback = false; // no sampled candidate passed `feasible`
    int n_feasible = 0;
};

// Maps a raw sample xi of CN(0, X) to a candidate: a beam with power tr(X),
// or the trailing M unit-modulus phases of conj(xi) normalized to a leading 1.
CVec candidate_from_sample(const CVec &xi, RecoveryMode mode, double trace);

// Dominant-eigenvector candidate of X in the given mode.
CVec principal_candidate(const CMat &x_star, RecoveryMode mode);

// n samples of CN(0, X) mapped to candidates. Deterministic in the seed.
std::vector<CVec> draw_candidates(const CMat &x_star, RecoveryMode mode, int n, std::uint64_t seed);

// Gaussian randomization. Returns the highest-scoring feasible candidate
// among the samples, `extra` and (optionally) the principal candidate. If
// none is feasible the principal candidate is returned with fallback = true
// when it is feasible; otherwise RecoveryFailure is thrown.
RecoveryResult randomize_rank1(const CMat &x_star, RecoveryMode mode, const RecoveryOptions &options,
                               const std::function<bool(const CVec &)> &feasible,
                               const std::function<double(const CVec &)> &score,
                               std::span<const CVec> extra = {});

} // namespace dtris
