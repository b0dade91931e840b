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
#include <iosfwd>
#include <string>
#include <vector>

#include "dtris/conic.hpp"
#include "dtris/optimizer.hpp"
#include "dtris/transform.hpp"

namespace dtris
{

// Zero-mean covariance of vec(dUpsilon^H).
struct ErrorStatistics
{
    CMat sigma;
    std::size_t n = 0;

    static ErrorStatistics with_prior(int dim, double prior = 1e-6);
    int dim() const { return static_cast<int>(sigma.rows()); }
    void validate() const;
};

enum class WhiteningKind
{
    Zca,
    Cholesky,
    Pca
};

const char *to_string(WhiteningKind k);
WhiteningKind parse_whitening(const std::string &s);

struct RobustOptions
{
    double rho = 0.05;
    WhiteningKind whitening = WhiteningKind::Zca;
    double reg = -1.0; // negative: 1e-8 * tr(sigma) / d, or 1e-20 when sigma = 0
    int conv_window = 10;
    bool full_lmi = false;

    void validate() const;
    double regularizer(const CMat &sigma) const;
};

// Sigma^(n) = (1 - 1/n) Sigma^(n-1) + (1/n) vec(D^H) vec(D^H)^H
ErrorStatistics update_covariance(const ErrorStatistics &st, const CMat &delta_ups);

// T with T (sigma + reg I) T^H = I. Throws NumericalError when sigma + reg I
// is singular.
CMat whitening(const CMat &sigma, WhiteningKind kind, double reg);

// Bernstein-type bound in its eigenvalue form:
//   tr U + u0 - sqrt(2 ln(1/rho)) sqrt(|U|_F^2 + 2|u|^2) - ln(1/rho) lambda_max^+(-U)
// The chance constraint Pr{x^H U x + 2Re(u^H x) + u0 >= 0} >= 1 - rho holds
// for x ~ CN(0, I) whenever this is >= 0.
double bernstein_margin(const BernsteinParams &p, double rho);

// Checks the slack form (i)-(iii) for given slacks x, y within tol.
bool bernstein_slack_feasible(const BernsteinParams &p, double rho, double x, double y, double tol = 1e-9);

// Smallest slacks (x, y) for the slack form, or nothing when the margin is negative.
struct BernsteinSlacks
{
    double x = 0.0;
    double y = 0.0;
    bool feasible = false;
};
BernsteinSlacks bernstein_slacks(const BernsteinParams &p, double rho);

struct BernsteinFragment
{
    conic::ScalarVar x;
    conic::ScalarVar y; // id -1 when the LMI (iii) is omitted
    double x_scale = 1.0;
};

// Emits the Bernstein-type restriction of
//   Pr{ gain * |theta' (Ups~ + dUps) f|^2 >= rhs } >= 1 - rho
// where f f^H is the program variable `f_var` (N_t x N_t), x = T vec(dUps^H)
// is standard normal and T has dimension (M+1) N_t or N_t. The affine maps
// F -> (U, u, u0) are linearized on an orthonormal Hermitian basis. (iii) is
// emitted only when full_lmi is set; U is PSD by construction so y = 0 is
// always admissible.
BernsteinFragment bernstein_restrict(conic::ConicProgram &prog, conic::MatVar f_var, const StackedChannel &ups_tilde,
                                     const LiftedPhase &e, const CMat &t, double rho, double gain,
                                     const conic::AffineExpr &rhs, bool full_lmi);

// Same restriction for error in the direct row only (T of dimension N_t),
// using the closed forms U = e00 T^{-H} F T^{-1}, u = T^{-H} F Ups~^H E e_0.
// Only T^{-1} enters the program, which stays well conditioned when the
// covariance is nearly singular.
BernsteinFragment bernstein_restrict_direct(conic::ConicProgram &prog, conic::MatVar f_var,
                                            const StackedChannel &ups_tilde, const LiftedPhase &e, const CMat &t,
                                            double rho, double gain, const conic::AffineExpr &rhs, bool full_lmi);

// Robust AO: the user-1 signal constraint replaced by its Bernstein-type restriction under the whitened
// statistics of the BS -> user-1 link error.
DesignSolution robust_optimize(const ChannelSet &ch_dt, const DesignTargets &tg, const ErrorStatistics &st,
                               const AoOptions &opt, const RobustOptions &ropt);

RobustModel make_robust_model(const ErrorStatistics &st, const RobustOptions &ropt);

// One coherence block of the online learning stream.
struct CoherenceBlock
{
    ChannelSet dt;
    ChannelSet real; // used only while the statistics are still being learned
};

struct BlockOutcome
{
    DesignSolution solution;
    bool learned = false; // covariance updated in this block
    bool failed = false;
    std::string error;
    double sigma_trace = 0.0;
};

struct Algorithm1Result
{
    std::vector<BlockOutcome> blocks;
    std::vector<ErrorStatistics> trajectory; // statistics after each block
    ErrorStatistics final_stats;
};

// Online learning: learn the covariance from DT/real pairs until the relative
// change of tr(Sigma) and of the robust objective over conv_window blocks is
// below 1%, then freeze it; solve the robust design every block.
Algorithm1Result algorithm1_run(const std::vector<CoherenceBlock> &stream, const DesignTargets &tg,
                                const AoOptions &opt, const RobustOptions &ropt,
                                ErrorStatistics initial = ErrorStatistics{});

struct OutageEstimate
{
    double outage1 = 0.0;
    double outage2 = 0.0;
    double stderr1 = 0.0;
    double stderr2 = 0.0;
    std::size_t samples = 0;
};

// Sampler returning the real channel for sample index i.
using ChannelSampler = std::function<ChannelSet(std::size_t)>;

// Fraction of sampled channels with SE_k < gamma_k - 1e-9. Samples are
// evaluated in parallel; the reduction is in index order.
OutageEstimate monte_carlo_outage(const DesignSolution &sol, const ChannelSampler &sampler, const DesignTargets &tg,
                                  std::size_t n_samples, unsigned threads = 0);

// Sampler adding x ~ CN(0, sigma) to the BS -> user-1 row of a twin channel
// (n_rx = 1), seeded per sample index.
ChannelSampler gaussian_error_sampler(const ChannelSet &dt, const CMat &sigma, std::uint64_t seed);

// Serialization in the matrix record format (fields kind=error_statistics, n).
void write_statistics(std::ostream &os, const ErrorStatistics &st);
ErrorStatistics read_statistics(std::istream &is);

} // namespace dtris
