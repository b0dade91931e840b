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

#include "dtris/transform.hpp"

#include <cmath>

namespace dtris
{

LiftedPhase LiftedPhase::from_theta(const CVec &theta)
{
    CVec tp(theta.size() + 1);
    tp(0) = 1.0;
    tp.tail(theta.size()) = theta;
    // theta' is a row vector, so E_ij = conj(theta'_i) theta'_j.
    return {tp.conjugate() * tp.transpose()};
}

BeamGram BeamGram::from_beam(const CVec &beam)
{
    return {beam * beam.adjoint()};
}

std::vector<StackedChannel> build_upsilon(const CMat &d, const CMat &g, const CMat &h)
{
    if (d.rows() != g.rows() || d.cols() != h.cols() || g.cols() != h.rows())
        throw ValidationError("build_upsilon: shapes are not conformable");
    const Eigen::Index m = h.rows(), nt = h.cols();
    std::vector<StackedChannel> out;
    out.reserve(static_cast<std::size_t>(d.rows()));
    for (Eigen::Index r = 0; r < d.rows(); ++r)
    {
        StackedChannel s;
        s.upsilon.resize(m + 1, nt);
        s.upsilon.row(0) = d.row(r);
        s.upsilon.bottomRows(m) = g.row(r).transpose().asDiagonal() * h;
        out.push_back(std::move(s));
    }
    return out;
}

CMat beam_coefficient(std::span<const StackedChannel> ups, const CMat &e)
{
    if (ups.empty())
        throw ValidationError("beam_coefficient: no stacked channels");
    CMat q = CMat::Zero(ups.front().n_tx(), ups.front().n_tx());
    for (const auto &s : ups)
        q.noalias() += s.upsilon.adjoint() * e * s.upsilon;
    return linalg::hermitian_part(q);
}

CMat phase_coefficient(std::span<const StackedChannel> ups, const CMat &f)
{
    if (ups.empty())
        throw ValidationError("phase_coefficient: no stacked channels");
    const Eigen::Index d = ups.front().upsilon.rows();
    CMat p = CMat::Zero(d, d);
    for (const auto &s : ups)
        p.noalias() += s.upsilon * f * s.upsilon.adjoint();
    return linalg::hermitian_part(p);
}

double lifted_quadratic(std::span<const StackedChannel> ups, const LiftedPhase &e, const BeamGram &f)
{
    double acc = 0.0;
    for (const auto &s : ups)
        acc += (s.upsilon.adjoint() * e.e * s.upsilon * f.f).trace().real();
    return acc;
}

double lifted_quadratic_phase_side(std::span<const StackedChannel> ups, const LiftedPhase &e, const BeamGram &f)
{
    double acc = 0.0;
    for (const auto &s : ups)
        acc += (s.upsilon * f.f * s.upsilon.adjoint() * e.e).trace().real();
    return acc;
}

double BernsteinParams::evaluate(const CVec &x) const
{
    return (x.adjoint() * U * x)(0, 0).real() + 2.0 * u.dot(x).real() + u0;
}

BernsteinParams bernstein_params(const StackedChannel &ups_tilde, const LiftedPhase &e, const BeamGram &f,
                                 const CMat &t_whiten)
{
    if (t_whiten.rows() != t_whiten.cols())
        throw ValidationError("bernstein_params: whitening matrix must be square");
    Eigen::PartialPivLU<CMat> lu(t_whiten);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14))
        throw NumericalError("bernstein_params: whitening matrix is singular");
    return bernstein_params_from_inverse(ups_tilde, e, f, lu.inverse());
}

BernsteinParams bernstein_params_from_inverse(const StackedChannel &ups_tilde, const LiftedPhase &e,
                                              const BeamGram &f, const CMat &t_inverse)
{
    const Eigen::Index nt = ups_tilde.n_tx();
    const Eigen::Index full = ups_tilde.upsilon.rows() * nt;
    const Eigen::Index dim = t_inverse.rows();
    if (e.dim() != ups_tilde.upsilon.rows() || f.f.rows() != nt || f.f.cols() != nt)
        throw ValidationError("bernstein_params: E, F and Upsilon are not conformable");
    if (dim != full && dim != nt)
        throw ValidationError("bernstein_params: whitening dimension must be (M+1)*N_t or N_t");
    if (t_inverse.cols() != dim)
        throw ValidationError("bernstein_params: whitening matrix must be square");

    // Quadratic kernel E^T (x) F and linear vector vec(F Upsilon~^H E) over
    // vec(dUpsilon^H); restricted to the leading N_t entries in the reduced case.
    CMat kernel;
    CVec lin;
    if (dim == full)
    {
        kernel = linalg::kron(e.e.transpose(), f.f);
        lin = linalg::vec(f.f * ups_tilde.upsilon.adjoint() * e.e);
    }
    else
    {
        kernel = e.e(0, 0) * f.f;
        lin = f.f * ups_tilde.upsilon.adjoint() * e.e.col(0);
    }

    BernsteinParams p;
    p.U = linalg::hermitian_part(t_inverse.adjoint() * kernel * t_inverse);
    // u^H x must equal lin^H z with x = T z, so u = T^{-H} lin.
    p.u = t_inverse.adjoint() * lin;
    p.u0 = (e.e * ups_tilde.upsilon * f.f * ups_tilde.upsilon.adjoint()).trace().real();
    return p;
}

} // namespace dtris
