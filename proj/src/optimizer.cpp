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

#include "dtris/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dtris/random.hpp"
#include "dtris/randomization.hpp"
#include "dtris/robust.hpp"

namespace dtris
{

namespace
{

constexpr double kSinrMargin = 1e-9;

double lambda_max_or_zero(const CMat &a)
{
    return a.size() ? std::max(0.0, linalg::lambda_max(linalg::hermitian_part(a))) : 0.0;
}

// Normalization of beam variables: F = scale * F_tilde.
double power_scale(const ChannelSet &ch, const LiftedPhase &e, const DesignTargets &tg)
{
    const auto ups2 = build_upsilon(CMat::Zero(ch.n_rx(), ch.n_tx()), ch.g2, ch.h_br);
    const double g1 = lambda_max_or_zero(ch.h1.adjoint() * ch.h1);
    const double g2 = lambda_max_or_zero(beam_coefficient(ups2, e.e));
    double logsum = 0.0;
    int count = 0;
    if (g1 > 0.0)
    {
        logsum += std::log(tg.sigma1_sq / g1);
        ++count;
    }
    if (g2 > 0.0)
    {
        logsum += std::log(tg.sigma2_sq / g2);
        ++count;
    }
    return count ? std::exp(logsum / count) : 1.0;
}

CVec unit_direction(const CVec &v)
{
    const double n = v.norm();
    return n > 0.0 ? CVec(v / n) : CVec(CVec::Zero(v.size()));
}

// Dominant right singular direction of an effective channel (matched filter).
CVec matched_direction(const CMat &c)
{
    if (c.rows() == 1)
        return unit_direction(c.row(0).adjoint());
    const linalg::HermitianEig eig = linalg::eigh(c.adjoint() * c);
    return unit_direction(eig.vectors.col(eig.vectors.cols() - 1));
}

void check_conformable(const ChannelSet &ch, const CVec &f1, const CVec &f2, const CVec &theta)
{
    ch.validate();
    if (f1.size() != ch.n_tx() || f2.size() != ch.n_tx() || theta.size() != ch.n_ris())
        throw ValidationError("dimension mismatch between channels and design");
}

struct Gains
{
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
};

Gains unit_gains(const ChannelSet &ch, const CVec &theta, const CVec &d1, const CVec &d2)
{
    const CMat c1 = cascaded_user1(ch, theta);
    const CMat c2 = cascaded_user2(ch, theta);
    return {(c1 * d1).squaredNorm(), (c1 * d2).squaredNorm(), (c2 * d1).squaredNorm(), (c2 * d2).squaredNorm()};
}

// Cached robust data for the AO.
struct RobustCache
{
    const RobustModel *model = nullptr;
    CMat t_inverse;
};

double signal_gain(const ChannelSet &ch, const CVec &theta, const CVec &d1, double a11, const RobustCache &rc)
{
    if (!rc.model)
        return a11;
    if (d1.squaredNorm() == 0.0)
        return 0.0;
    const auto ups = build_upsilon(ch.h1, ch.g1, ch.h_br);
    const BernsteinParams p = bernstein_params_from_inverse(ups[0], LiftedPhase::from_theta(theta),
                                                            BeamGram::from_beam(d1), rc.t_inverse);
    return bernstein_margin(p, rc.model->rho);
}

struct Candidate
{
    CVec theta;
    CVec d1, d2; // unit directions (zero when the user is not served)
    PowerAllocation p;
    double b11 = 0.0;
    Gains g;

    double power() const { return p.feasible ? p.p1 + p.p2 : std::numeric_limits<double>::infinity(); }
    double min_margin(const DesignTargets &tg) const
    {
        const double s1 = std::log2(1.0 + g.a11 * p.p1 / (g.a12 * p.p2 + tg.sigma1_sq)) - tg.gamma1;
        const double s2 = std::log2(1.0 + g.a22 * p.p2 / (g.a21 * p.p1 + tg.sigma2_sq)) - tg.gamma2;
        return std::min(s1, s2);
    }
};

Candidate evaluate(const ChannelSet &ch, const CVec &theta, const CVec &d1, const CVec &d2, const DesignTargets &tg,
                   const RobustCache &rc)
{
    Candidate c{theta, d1, d2, {}, 0.0, unit_gains(ch, theta, d1, d2)};
    c.b11 = signal_gain(ch, theta, d1, c.g.a11, rc);
    c.p = minimum_powers(c.b11, c.g.a12, c.g.a21, c.g.a22, tg);
    return c;
}

// Lower power wins; equal power falls back to the larger minimum margin.
bool better(const Candidate &a, const Candidate &b, const DesignTargets &tg)
{
    const double pa = a.power(), pb = b.power();
    if (!a.p.feasible)
        return false;
    if (!b.p.feasible)
        return true;
    if (pa < pb * (1.0 - 1e-12))
        return true;
    if (pb < pa * (1.0 - 1e-12))
        return false;
    return a.min_margin(tg) > b.min_margin(tg);
}

DesignSolution to_solution(const Candidate &c, const DesignTargets &tg)
{
    DesignSolution s;
    s.theta = c.theta;
    s.f1 = c.d1 * std::sqrt(c.p.p1);
    s.f2 = c.d2 * std::sqrt(c.p.p2);
    s.power = s.f1.squaredNorm() + s.f2.squaredNorm();
    s.eps1 = c.g.a12 * c.p.p2 + tg.sigma1_sq;
    s.eps2 = c.g.a21 * c.p.p1 + tg.sigma2_sq;
    s.feasible = c.p.feasible;
    return s;
}

CVec random_phases(int m, std::uint64_t seed)
{
    Rng rng(seed);
    CVec t(m);
    for (int i = 0; i < m; ++i)
        t(i) = std::polar(1.0, uniform(rng, -std::numbers::pi, std::numbers::pi));
    return t;
}

} // namespace

void DesignTargets::validate() const
{
    if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0) || !std::isfinite(gamma1) || !std::isfinite(gamma2))
        throw ValidationError("targets: gamma must be finite and >= 0");
    if (!(sigma1_sq > 0.0) || !(sigma2_sq > 0.0) || !std::isfinite(sigma1_sq) || !std::isfinite(sigma2_sq))
        throw ValidationError("targets: noise powers must be positive");
}

double DesignTargets::sinr1() const { return std::exp2(gamma1) - 1.0; }
double DesignTargets::sinr2() const { return std::exp2(gamma2) - 1.0; }

void AoOptions::validate() const
{
    if (max_iters < 1)
        throw ValidationError("ao options: max_iters must be >= 1");
    if (!(rel_tol > 0.0))
        throw ValidationError("ao options: rel_tol must be > 0");
    if (n_cand < 1)
        throw ValidationError("ao options: n_cand must be >= 1");
}

CMat cascaded_user1(const ChannelSet &ch, const CVec &theta)
{
    return ch.h1 + ch.g1 * theta.asDiagonal() * ch.h_br;
}

CMat cascaded_user2(const ChannelSet &ch, const CVec &theta)
{
    return ch.g2 * theta.asDiagonal() * ch.h_br;
}

SePair effective_se(const ChannelSet &ch, const CVec &f1, const CVec &f2, const CVec &theta, const DesignTargets &tg)
{
    check_conformable(ch, f1, f2, theta);
    const CMat c1 = cascaded_user1(ch, theta);
    const CMat c2 = cascaded_user2(ch, theta);
    SePair se;
    se.se1 = std::log2(1.0 + (c1 * f1).squaredNorm() / ((c1 * f2).squaredNorm() + tg.sigma1_sq));
    se.se2 = std::log2(1.0 + (c2 * f2).squaredNorm() / ((c2 * f1).squaredNorm() + tg.sigma2_sq));
    return se;
}

SePair effective_se(const ChannelSet &ch, const DesignSolution &sol, const DesignTargets &tg)
{
    return effective_se(ch, sol.f1, sol.f2, sol.theta, tg);
}

PowerAllocation minimum_powers(double b11, double a12, double a21, double a22, const DesignTargets &tg)
{
    const double t1 = tg.sinr1() * (1.0 + kSinrMargin);
    const double t2 = tg.sinr2() * (1.0 + kSinrMargin);
    const double n1 = tg.sigma1_sq, n2 = tg.sigma2_sq;
    PowerAllocation p;
    if (t1 == 0.0 && t2 == 0.0)
    {
        p.feasible = true;
        return p;
    }
    if (t1 == 0.0)
    {
        if (a22 > 0.0)
        {
            p.p2 = t2 * n2 / a22;
            p.feasible = true;
        }
        return p;
    }
    if (t2 == 0.0)
    {
        if (b11 > 0.0)
        {
            p.p1 = t1 * n1 / b11;
            p.feasible = true;
        }
        return p;
    }
    if (!(b11 > 0.0) || !(a22 > 0.0))
        return p;
    const double det = b11 * a22 - t1 * t2 * a12 * a21;
    if (!(det > 1e-12 * b11 * a22))
        return p;
    p.p1 = (t1 * n1 * a22 + t1 * a12 * t2 * n2) / det;
    p.p2 = (b11 * t2 * n2 + t2 * a21 * t1 * n1) / det;
    p.feasible = std::isfinite(p.p1) && std::isfinite(p.p2) && p.p1 >= 0.0 && p.p2 >= 0.0;
    return p;
}

double robust_signal_gain(const ChannelSet &ch, const CVec &theta, const CVec &f_hat, const RobustModel &model)
{
    RobustCache rc{&model, model.t_whiten.inverse()};
    return signal_gain(ch, theta, f_hat, (cascaded_user1(ch, theta) * f_hat).squaredNorm(), rc);
}

BeamStepResult solve_beam_step(const ChannelSet &ch, const LiftedPhase &e, const DesignTargets &tg,
                               const conic::SolverOptions &solver, const RobustModel *robust)
{
    ch.validate();
    tg.validate();
    const int nt = ch.n_tx(), m = ch.n_ris(), nr = ch.n_rx();
    if (e.dim() != m + 1)
        throw ValidationError("beam step: lifted phase dimension must be M + 1");
    if (robust && nr != 1)
        throw ValidationError("beam step: the robust restriction requires one receive antenna per user");

    const double scale = power_scale(ch, e, tg);
    const double k1 = scale / tg.sigma1_sq, k2 = scale / tg.sigma2_sq;
    const double t1 = tg.sinr1(), t2 = tg.sinr2();

    const auto ups1 = build_upsilon(ch.h1, ch.g1, ch.h_br);
    const auto ups2 = build_upsilon(CMat::Zero(nr, nt), ch.g2, ch.h_br);
    const CMat c_leak2 = k2 * linalg::hermitian_part(beam_coefficient(ups2, e.e)); // interference and signal at user 2
    const CMat c_leak1 = k1 * linalg::hermitian_part(beam_coefficient(ups1, e.e)); // interference at user 1
    const CMat c_sig1 = k1 * linalg::hermitian_part(ch.h1.adjoint() * ch.h1);     // signal at user 1

    conic::ConicProgram p;
    const conic::MatVar v1 = p.add_matrix_var("F1", nt);
    const conic::MatVar f2 = p.add_matrix_var("F2", nt);
    const conic::ScalarVar s1 = p.add_scalar_var("eps1_excess");
    const conic::ScalarVar s2 = p.add_scalar_var("eps2_excess");

    conic::AffineExpr b4;
    b4.add(v1, c_leak2).add(s2, -1.0);
    p.add_linear(b4, conic::Relation::LessEqual, 0.0, "interference at user 2");

    conic::AffineExpr c4;
    c4.add(f2, c_leak2).add(s2, -t2);
    p.add_linear(c4, conic::Relation::GreaterEqual, t2, "signal at user 2");

    conic::AffineExpr d4;
    d4.add(f2, c_leak1).add(s1, -1.0);
    p.add_linear(d4, conic::Relation::LessEqual, 0.0, "interference at user 1");

    if (robust)
    {
        const auto direct = build_upsilon(ch.h1, CMat::Zero(nr, m), ch.h_br);
        conic::AffineExpr rhs = conic::term(s1, t1);
        rhs.add_constant(t1);
        bernstein_restrict_direct(p, v1, direct[0], e, robust->t_whiten, robust->rho, k1, rhs, robust->full_lmi);
    }
    else
    {
        conic::AffineExpr e4;
        e4.add(v1, c_sig1).add(s1, -t1);
        p.add_linear(e4, conic::Relation::GreaterEqual, t1, "signal at user 1");
    }

    conic::AffineExpr obj;
    obj.add(v1, CMat::Identity(nt, nt)).add(f2, CMat::Identity(nt, nt));
    p.minimize(obj);

    BeamStepResult out;
    out.raw = conic::solve(p, solver);
    if (!out.raw.usable())
        throw StepInfeasible(std::string("beam step: solver returned ") + conic::to_string(out.raw.status),
                             out.raw.status);
    out.f1 = BeamGram{scale * out.raw.value(v1)};
    out.f2 = BeamGram{scale * out.raw.value(f2)};
    out.eps1 = tg.sigma1_sq * (1.0 + std::max(0.0, out.raw.value(s1)));
    out.eps2 = tg.sigma2_sq * (1.0 + std::max(0.0, out.raw.value(s2)));
    out.power = out.f1.power() + out.f2.power();
    return out;
}

PhaseStepResult solve_phase_step(const ChannelSet &ch, const BeamGram &f1, const BeamGram &f2,
                                 const DesignTargets &tg, std::optional<double> signal1_bound,
                                 const conic::SolverOptions &solver)
{
    ch.validate();
    tg.validate();
    const int nt = ch.n_tx(), m = ch.n_ris(), nr = ch.n_rx();
    if (f1.f.rows() != nt || f2.f.rows() != nt)
        throw ValidationError("phase step: beam Gram dimension must be N_t");
    const double t1 = tg.sinr1(), t2 = tg.sinr2();

    const auto ups1 = build_upsilon(ch.h1, ch.g1, ch.h_br);
    const auto ups2 = build_upsilon(CMat::Zero(nr, nt), ch.g2, ch.h_br);
    // Normalize E-coefficients so their largest eigenvalue is O(1).
    const CMat leak2 = linalg::hermitian_part(phase_coefficient(ups2, f1.f)) / tg.sigma2_sq;
    const CMat sig2 = linalg::hermitian_part(phase_coefficient(ups2, f2.f)) / tg.sigma2_sq;
    const CMat leak1 = linalg::hermitian_part(phase_coefficient(ups1, f2.f)) / tg.sigma1_sq;

    conic::ConicProgram p;
    const conic::MatVar e = p.add_matrix_var("E", m + 1);
    const conic::ScalarVar s1 = p.add_scalar_var("eps1_excess");
    const conic::ScalarVar s2 = p.add_scalar_var("eps2_excess");
    for (int i = 0; i <= m; ++i)
    {
        CMat d = CMat::Zero(m + 1, m + 1);
        d(i, i) = 1.0;
        conic::AffineExpr a;
        a.add(e, d);
        p.add_linear(a, conic::Relation::Equal, 1.0, "unit modulus");
    }
    conic::AffineExpr b4;
    b4.add(e, leak2).add(s2, -1.0);
    p.add_linear(b4, conic::Relation::LessEqual, 0.0, "interference at user 2");
    conic::AffineExpr c4;
    c4.add(e, sig2).add(s2, -t2);
    p.add_linear(c4, conic::Relation::GreaterEqual, t2, "signal at user 2");
    conic::AffineExpr d4;
    d4.add(e, leak1).add(s1, -1.0);
    p.add_linear(d4, conic::Relation::LessEqual, 0.0, "interference at user 1");
    if (signal1_bound && t1 > 0.0)
        p.add_linear(conic::term(s1), conic::Relation::LessEqual, *signal1_bound / (tg.sigma1_sq * t1) - 1.0,
                     "signal at user 1");

    conic::AffineExpr obj = conic::term(s1) += conic::term(s2);
    p.minimize(obj);

    PhaseStepResult out;
    out.raw = conic::solve(p, solver);
    if (!out.raw.usable())
        throw StepInfeasible(std::string("phase step: solver returned ") + conic::to_string(out.raw.status),
                             out.raw.status);
    out.e = LiftedPhase{linalg::hermitian_part(out.raw.value(e))};
    out.eps1 = tg.sigma1_sq * (1.0 + std::max(0.0, out.raw.value(s1)));
    out.eps2 = tg.sigma2_sq * (1.0 + std::max(0.0, out.raw.value(s2)));
    return out;
}

DesignSolution alternating_optimize(const ChannelSet &ch_dt, const DesignTargets &tg, const AoOptions &opt)
{
    return ao_design(ch_dt, tg, opt, nullptr);
}

DesignSolution ao_design(const ChannelSet &ch, const DesignTargets &tg, const AoOptions &opt,
                         const RobustModel *robust)
{
    ch.validate();
    tg.validate();
    opt.validate();
    const int nt = ch.n_tx(), m = ch.n_ris();

    RobustCache rc;
    if (robust)
    {
        if (robust->t_whiten.rows() != nt || robust->t_whiten.cols() != nt)
            throw ValidationError("robust design: whitening must have dimension N_t");
        rc.model = robust;
        Eigen::PartialPivLU<CMat> lu(robust->t_whiten);
        rc.t_inverse = lu.inverse();
        linalg::require_finite(rc.t_inverse, "robust design: inverse whitening");
    }

    if (tg.sinr1() == 0.0 && tg.sinr2() == 0.0)
    {
        DesignSolution s;
        s.f1 = CVec::Zero(nt);
        s.f2 = CVec::Zero(nt);
        s.theta = CVec::Ones(m);
        s.eps1 = tg.sigma1_sq;
        s.eps2 = tg.sigma2_sq;
        s.feasible = true;
        s.iterations = 1;
        s.power_trace = {0.0};
        return s;
    }

    // E^(0): all-ones phases, then up to three random-phase retries.
    CVec theta;
    std::optional<BeamStepResult> beam;
    std::string diag;
    for (int attempt = 0; attempt < 4 && !beam; ++attempt)
    {
        theta = attempt == 0 ? CVec(CVec::Ones(m)) : random_phases(m, derive_seed(opt.seed, 1000 + attempt));
        try
        {
            beam = solve_beam_step(ch, LiftedPhase::from_theta(theta), tg, opt.solver, robust);
        }
        catch (const StepInfeasible &e)
        {
            diag += std::string(e.what()) + "; ";
        }
    }
    if (!beam)
    {
        DesignSolution s;
        s.f1 = CVec::Zero(nt);
        s.f2 = CVec::Zero(nt);
        s.theta = CVec::Ones(m);
        s.diagnostics = diag + "no feasible initial beam step";
        return s;
    }

    std::optional<Candidate> best;
    std::optional<Candidate> current;
    std::vector<double> trace;
    int iterations = 0;
    const std::uint64_t base = opt.seed;

    for (int it = 1; it <= opt.max_iters; ++it)
    {
        iterations = it;
        if (it > 1)
        {
            try
            {
                beam = solve_beam_step(ch, LiftedPhase::from_theta(theta), tg, opt.solver, robust);
            }
            catch (const StepInfeasible &e)
            {
                diag += std::string(e.what()) + "; ";
                trace.push_back(best ? best->power() : std::numeric_limits<double>::infinity());
                break;
            }
        }

        // Beam recovery: paired samples of both Grams, the principal pair and
        // the incumbent directions.
        const auto s1 = draw_candidates(beam->f1.f, RecoveryMode::Beam, opt.n_cand, derive_seed(base, 4 * it));
        const auto s2 = draw_candidates(beam->f2.f, RecoveryMode::Beam, opt.n_cand, derive_seed(base, 4 * it + 1));
        std::optional<Candidate> pick;
        auto consider = [&](const Candidate &c) {
            if (!pick || better(c, *pick, tg))
                pick = c;
        };
        consider(evaluate(ch, theta, unit_direction(principal_candidate(beam->f1.f, RecoveryMode::Beam)),
                          unit_direction(principal_candidate(beam->f2.f, RecoveryMode::Beam)), tg, rc));
        for (std::size_t i = 0; i < s1.size(); ++i)
            consider(evaluate(ch, theta, unit_direction(s1[i]), unit_direction(s2[i]), tg, rc));
        if (current)
            consider(evaluate(ch, theta, current->d1, current->d2, tg, rc));
        // The beam step bounds the direct-link signal only; on the cascaded
        // channel its directions can fail where matched filters do not.
        consider(evaluate(ch, theta, matched_direction(cascaded_user1(ch, theta)),
                          matched_direction(cascaded_user2(ch, theta)), tg, rc));
        current = pick;
        if (current->p.feasible && (!best || better(*current, *best, tg)))
            best = current;

        if (current->p.feasible)
        {
            // Phase step with the recovered rank-one beams.
            const BeamGram g1 = BeamGram::from_beam(current->d1 * std::sqrt(current->p.p1));
            const BeamGram g2 = BeamGram::from_beam(current->d2 * std::sqrt(current->p.p2));
            try
            {
                const PhaseStepResult ps =
                    solve_phase_step(ch, g1, g2, tg, current->b11 * current->p.p1, opt.solver);
                const auto cands = draw_candidates(ps.e.e, RecoveryMode::Phase, opt.n_cand, derive_seed(base, 4 * it + 2));
                std::optional<Candidate> tpick = current;
                auto consider_theta = [&](const CVec &th) {
                    const Candidate c = evaluate(ch, th, current->d1, current->d2, tg, rc);
                    if (better(c, *tpick, tg))
                        tpick = c;
                };
                consider_theta(principal_candidate(ps.e.e, RecoveryMode::Phase));
                for (const CVec &th : cands)
                    consider_theta(th);
                current = tpick;
                theta = current->theta;
                if (!best || better(*current, *best, tg))
                    best = current;
            }
            catch (const StepInfeasible &e)
            {
                diag += std::string(e.what()) + "; ";
            }
        }

        const double now = best ? best->power() : std::numeric_limits<double>::infinity();
        const double prev = trace.empty() ? std::numeric_limits<double>::infinity() : trace.back();
        trace.push_back(now);
        if (std::isfinite(prev) && std::isfinite(now) && std::abs(prev - now) <= opt.rel_tol * prev)
            break;
    }

    DesignSolution s;
    if (best)
        s = to_solution(*best, tg);
    else
    {
        s.f1 = CVec::Zero(nt);
        s.f2 = CVec::Zero(nt);
        s.theta = theta;
        s.diagnostics = "no feasible rank-one solution; ";
    }
    s.iterations = iterations;
    s.power_trace = trace;
    s.diagnostics += diag;
    return s;
}

} // namespace dtris
