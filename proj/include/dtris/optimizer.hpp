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
#include <optional>
#include <string>
#include <vector>

#include "dtris/conic.hpp"
#include "dtris/scenario.hpp"
#include "dtris/transform.hpp"

namespace dtris
{

struct DesignTargets
{
    double gamma1 = 1.0; // bit/s/Hz
    double gamma2 = 1.0;
    double sigma1_sq = 1e-3; // W
    double sigma2_sq = 1e-3;

    void validate() const;
    // Required SINR 2^gamma - 1.
    double sinr1() const;
    double sinr2() const;
};

struct DesignSolution
{
    CVec f1;
    CVec f2;
    CVec theta;
    double eps1 = 0.0; // interference plus noise at user 1 on the design channels
    double eps2 = 0.0;
    double power = 0.0;
    bool feasible = false;
    int iterations = 0;
    // Accepted power after each AO iteration (non-increasing once feasible).
    std::vector<double> power_trace;
    std::string diagnostics;
};

struct AoOptions
{
    int max_iters = 20;
    double rel_tol = 1e-3;
    int n_cand = 100;
    std::uint64_t seed = 1;
    conic::SolverOptions solver{};

    void validate() const;
};

struct SePair
{
    double se1 = 0.0;
    double se2 = 0.0;
    double sum() const { return se1 + se2; }
};

// Spectral efficiencies log2(1 + SINR_k) with H_2 = 0.
SePair effective_se(const ChannelSet &ch, const CVec &f1, const CVec &f2, const CVec &theta,
                    const DesignTargets &tg);
SePair effective_se(const ChannelSet &ch, const DesignSolution &sol, const DesignTargets &tg);

// (H_1 + G_1 diag(theta) H_BR) and G_2 diag(theta) H_BR.
CMat cascaded_user1(const ChannelSet &ch, const CVec &theta);
CMat cascaded_user2(const ChannelSet &ch, const CVec &theta);

class StepInfeasible : public NumericalError
{
public:
    StepInfeasible(const std::string &what, conic::Status status) : NumericalError(what), status_(status) {}
    conic::Status status() const { return status_; }

private:
    conic::Status status_;
};

// Bernstein-type restriction of the user-1 signal constraint, as used by the robust
// design. T whitens the error of the BS -> user-1 link (dimension N_t).
struct RobustModel
{
    CMat t_whiten;
    double rho = 0.05;
    bool full_lmi = false;
};

struct BeamStepResult
{
    BeamGram f1;
    BeamGram f2;
    double eps1 = 0.0;
    double eps2 = 0.0;
    double power = 0.0;
    conic::SolverResult raw;
};

// Beam subproblem for fixed E: minimize tr F1 + tr F2 under the SINR constraints with
// eps_k >= sigma_k^2. With a robust model the user-1 signal constraint is
// replaced by its Bernstein-type restriction. Throws StepInfeasible.
BeamStepResult solve_beam_step(const ChannelSet &ch, const LiftedPhase &e, const DesignTargets &tg,
                               const conic::SolverOptions &solver = {}, const RobustModel *robust = nullptr);

struct PhaseStepResult
{
    LiftedPhase e;
    double eps1 = 0.0;
    double eps2 = 0.0;
    conic::SolverResult raw;
};

// Phase subproblem for fixed Grams: minimize eps1/sigma1^2 + eps2/sigma2^2
// over PSD E with unit diagonal under the interference and user-2 signal constraints. `signal1_bound`, when set,
// is the E-independent user-1 signal level (W) that caps eps1 through the
// user-1 SINR requirement. Throws StepInfeasible.
PhaseStepResult solve_phase_step(const ChannelSet &ch, const BeamGram &f1, const BeamGram &f2,
                                 const DesignTargets &tg, std::optional<double> signal1_bound = std::nullopt,
                                 const conic::SolverOptions &solver = {});

struct PowerAllocation
{
    double p1 = 0.0;
    double p2 = 0.0;
    bool feasible = false;
};

// Smallest powers meeting both SINR targets (with a 1e-9 relative margin)
// for unit-norm beam directions, given per-unit-power gains:
//   b11 user-1 signal, a12 interference f2 -> user 1,
//   a21 interference f1 -> user 2, a22 user-2 signal.
PowerAllocation minimum_powers(double b11, double a12, double a21, double a22, const DesignTargets &tg);

// Per-unit-power user-1 signal level guaranteed with probability 1 - rho
// by the Bernstein-type bound for direction f_hat (unit norm).
double robust_signal_gain(const ChannelSet &ch, const CVec &theta, const CVec &f_hat, const RobustModel &model);

// Alternating optimization without robust constraints.
DesignSolution alternating_optimize(const ChannelSet &ch_dt, const DesignTargets &tg, const AoOptions &opt);

// Shared AO driver; robust == nullptr gives the perfect design.
DesignSolution ao_design(const ChannelSet &ch_dt, const DesignTargets &tg, const AoOptions &opt,
                         const RobustModel *robust);

} // namespace dtris
