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

#include "dtris/randomization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dtris/random.hpp"

namespace dtris
{

namespace
{

void check_input(const CMat &x, int n)
{
    if (x.rows() < 1 || x.rows() != x.cols())
        throw ValidationError("randomize_rank1: expected a non-empty square matrix");
    if (n < 1)
        throw ValidationError("randomize_rank1: n_cand must be >= 1");
}

CVec to_phases(const CVec &xi)
{
    const auto n = xi.size();
    if (n < 2)
        throw ValidationError("randomize_rank1: phase mode needs dimension M + 1 >= 2");
    const CVec c = xi.conjugate();
    const double ref = std::arg(c(0));
    CVec theta(n - 1);
    for (Eigen::Index m = 1; m < n; ++m)
        theta(m - 1) = std::polar(1.0, std::arg(c(m)) - ref);
    return theta;
}

} // namespace

CVec candidate_from_sample(const CVec &xi, RecoveryMode mode, double trace)
{
    if (mode == RecoveryMode::Phase)
        return to_phases(xi);
    const double n2 = xi.squaredNorm();
    if (!(n2 > 0.0) || !(trace > 0.0))
        return CVec::Zero(xi.size());
    return xi * std::sqrt(trace / n2);
}

CVec principal_candidate(const CMat &x_star, RecoveryMode mode)
{
    const auto [l, v] = linalg::dominant_eig(x_star);
    (void)l;
    return candidate_from_sample(v, mode, linalg::hermitian_part(x_star).trace().real());
}

std::vector<CVec> draw_candidates(const CMat &x_star, RecoveryMode mode, int n, std::uint64_t seed)
{
    check_input(x_star, n);
    const linalg::HermitianEig eig = linalg::eigh(x_star, 1e-8);
    // Eigenvalues at round-off level would add sqrt(eps) noise to every sample.
    const double floor = 1e-12 * std::max(0.0, eig.values.maxCoeff());
    const RVec root = eig.values.unaryExpr([floor](double l) { return l > floor ? std::sqrt(l) : 0.0; });
    // Symmetric root: continuous in X, so nearby inputs give nearby samples
    // even when eigenvalues cluster.
    const CMat factor = eig.vectors * root.cast<cd>().asDiagonal() * eig.vectors.adjoint();
    const double trace = linalg::hermitian_part(x_star).trace().real();
    Rng rng(seed);
    std::vector<CVec> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
    {
        const CVec z = complex_normal_vector(rng, x_star.rows());
        out.push_back(candidate_from_sample(factor * z, mode, trace));
    }
    return out;
}

RecoveryResult randomize_rank1(const CMat &x_star, RecoveryMode mode, const RecoveryOptions &options,
                               const std::function<bool(const CVec &)> &feasible,
                               const std::function<double(const CVec &)> &score, std::span<const CVec> extra)
{
    check_input(x_star, options.n_cand);
    std::vector<CVec> pool = draw_candidates(x_star, mode, options.n_cand, options.seed);
    const CVec principal = principal_candidate(x_star, mode);
    pool.insert(pool.end(), extra.begin(), extra.end());
    if (options.include_principal)
        pool.push_back(principal);

    RecoveryResult best;
    best.score = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (const CVec &c : pool)
    {
        if (!feasible(c))
            continue;
        ++best.n_feasible;
        const double s = score(c);
        if (!found || s > best.score)
        {
            best.value = c;
            best.score = s;
            found = true;
        }
    }
    if (found)
        return best;
    if (!feasible(principal))
        throw RecoveryFailure("randomize_rank1: no feasible candidate");
    best.value = principal;
    best.score = score(principal);
    best.fallback = true;
    return best;
}

} // namespace dtris
