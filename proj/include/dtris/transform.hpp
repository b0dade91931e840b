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

#include <span>
#include <vector>

#include "dtris/linalg.hpp"

namespace dtris
{

// Per-receive-antenna stacked channel: row 0 is the direct row D_r, rows
// 1..M are diag(G_r) * H. Right-multiplying the unit-modulus row
// theta' = [1, theta] gives D_r + G_r * diag(theta) * H.
struct StackedChannel
{
    CMat upsilon; // (M+1) x N_t

    Eigen::Index n_ris() const { return upsilon.rows() - 1; }
    Eigen::Index n_tx() const { return upsilon.cols(); }
};

// E = theta'^H theta' with theta' = [1, theta] (row vector). Hermitian PSD,
// unit diagonal when built from unit-modulus phases.
struct LiftedPhase
{
    CMat e;

    static LiftedPhase from_theta(const CVec &theta);
    Eigen::Index dim() const { return e.rows(); }
};

// F = f f^H for a rank-one beam; trace equals the beam power.
struct BeamGram
{
    CMat f;

    static BeamGram from_beam(const CVec &beam);
    double power() const { return f.trace().real(); }
};

// Upsilon_r = [D_r ; diag(G_r) H] for each of the R rows of d and g.
// d: R x N_t, g: R x M, h: M x N_t.
std::vector<StackedChannel> build_upsilon(const CMat &d, const CMat &g, const CMat &h);

// sum_r tr(Upsilon_r^H E Upsilon_r F)
double lifted_quadratic(std::span<const StackedChannel> ups, const LiftedPhase &e, const BeamGram &f);

// sum_r tr(Upsilon_r F Upsilon_r^H E), the phase-side ordering of the same value.
double lifted_quadratic_phase_side(std::span<const StackedChannel> ups, const LiftedPhase &e, const BeamGram &f);

// sum_r Upsilon_r^H E Upsilon_r: the N_t x N_t coefficient of F for fixed E.
CMat beam_coefficient(std::span<const StackedChannel> ups, const CMat &e);

// sum_r Upsilon_r F Upsilon_r^H: the (M+1) x (M+1) coefficient of E for fixed F.
CMat phase_coefficient(std::span<const StackedChannel> ups, const CMat &f);

// Quadratic-form parameters of || theta' (Upsilon~ + dUpsilon) f ||^2 in the
// whitened error x = T vec(dUpsilon^H):
//
//   value = x^H U x + 2 Re{u^H x} + u0
//
// T may have dimension (M+1)*N_t (error in every block) or N_t (error in the
// direct row only, the leading N_t entries of vec(dUpsilon^H)).
struct BernsteinParams
{
    CMat U;
    CVec u;
    double u0 = 0.0;

    // x^H U x + 2 Re{u^H x} + u0
    double evaluate(const CVec &x) const;
};

BernsteinParams bernstein_params(const StackedChannel &ups_tilde, const LiftedPhase &e, const BeamGram &f,
                                 const CMat &t_whiten);

// Same parameters given T^{-1} directly, for callers that reuse one inverse.
BernsteinParams bernstein_params_from_inverse(const StackedChannel &ups_tilde, const LiftedPhase &e,
                                              const BeamGram &f, const CMat &t_inverse);

} // namespace dtris
