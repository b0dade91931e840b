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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dtris/optimizer.hpp"
#include "dtris/random.hpp"
#include "dtris/randomization.hpp"

using namespace dtris;

namespace
{

ChannelSet random_channels(Rng &rng, int nt, int m, int nr = 1)
{
    ChannelSet ch;
    ch.h1 = complex_normal_matrix(rng, nr, nt);
    ch.g1 = complex_normal_matrix(rng, nr, m);
    ch.g2 = complex_normal_matrix(rng, nr, m);
    ch.h_br = complex_normal_matrix(rng, m, nt);
    return ch;
}

// SINR-based spectral efficiency written out element by element.
double se_loops(const ChannelSet &ch, const CVec &theta, const CVec &fk, const CVec &fu, bool user1, double noise)
{
    const auto nr = ch.n_rx(), nt = ch.n_tx(), m = ch.n_ris();
    double sig = 0.0, intf = 0.0;
    for (int r = 0; r < nr; ++r)
    {
        cd ys = 0.0, yi = 0.0;
        for (int t = 0; t < nt; ++t)
        {
            cd h = user1 ? ch.h1(r, t) : cd(0.0);
            for (int k = 0; k < m; ++k)
                h += (user1 ? ch.g1(r, k) : ch.g2(r, k)) * theta(k) * ch.h_br(k, t);
            ys += h * fk(t);
            yi += h * fu(t);
        }
        sig += std::norm(ys);
        intf += std::norm(yi);
    }
    return std::log2(1.0 + sig / (intf + noise));
}

ChannelSet desk_draw(std::uint64_t seed, int n)
{
    ScenarioConfig c;
    c.n_tx = n;
    c.n_ris = n;
    c.seed = seed;
    Rng rng(derive_seed(seed, 99));
    const Eigen::Vector3d u1 = sample_grid_node(c.bs_grid, rng);
    const Eigen::Vector3d u2 = sample_grid_node(c.ris_grid, rng);
    return generate_scenario(c, u1, u2).dt;
}

} // namespace

TEST_CASE("effective SE: trivial cases")
{
    Rng rng(1);
    ChannelSet ch = random_channels(rng, 3, 4);
    ch.g1.setZero();
    const DesignTargets tg;
    const CVec f1 = complex_normal_vector(rng, 3);
    const CVec theta = CVec::Ones(4);
    const SePair se = effective_se(ch, f1, CVec::Zero(3), theta, tg);
    CHECK(se.se1 == doctest::Approx(std::log2(1.0 + (ch.h1 * f1).squaredNorm() / tg.sigma1_sq)).epsilon(1e-14));

    const SePair z = effective_se(ch, CVec::Zero(3), CVec::Zero(3), theta, tg);
    CHECK(z.se1 == 0.0);
    CHECK(z.se2 == 0.0);
}

TEST_CASE("effective SE agrees with an element-wise evaluation")
{
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial)
    {
        const ChannelSet ch = random_channels(rng, 3, 5, 2);
        DesignTargets tg;
        tg.sigma1_sq = 0.3;
        tg.sigma2_sq = 0.7;
        CVec theta(5);
        for (int i = 0; i < 5; ++i)
            theta(i) = std::polar(1.0, uniform(rng, -3.0, 3.0));
        const CVec f1 = complex_normal_vector(rng, 3), f2 = complex_normal_vector(rng, 3);
        const SePair se = effective_se(ch, f1, f2, theta, tg);
        CHECK(std::abs(se.se1 - se_loops(ch, theta, f1, f2, true, tg.sigma1_sq)) <= 1e-12);
        CHECK(std::abs(se.se2 - se_loops(ch, theta, f2, f1, false, tg.sigma2_sq)) <= 1e-12);
    }
    Rng r2(3);
    const ChannelSet ch = random_channels(r2, 3, 5);
    CHECK_THROWS_AS(effective_se(ch, CVec::Zero(2), CVec::Zero(3), CVec::Ones(5), DesignTargets{}), ValidationError);
}

TEST_CASE("minimum powers meet both SINR targets with equality")
{
    DesignTargets tg;
    tg.gamma1 = 1.5;
    tg.gamma2 = 2.0;
    const double b11 = 2.0, a12 = 0.3, a21 = 0.2, a22 = 1.5;
    const PowerAllocation p = minimum_powers(b11, a12, a21, a22, tg);
    REQUIRE(p.feasible);
    CHECK(b11 * p.p1 / (a12 * p.p2 + tg.sigma1_sq) == doctest::Approx(tg.sinr1()).epsilon(1e-8));
    CHECK(a22 * p.p2 / (a21 * p.p1 + tg.sigma2_sq) == doctest::Approx(tg.sinr2()).epsilon(1e-8));
    CHECK(b11 * p.p1 / (a12 * p.p2 + tg.sigma1_sq) >= tg.sinr1());

    // Mutual interference too strong for the targets.
    CHECK_FALSE(minimum_powers(1.0, 10.0, 10.0, 1.0, tg).feasible);
    // A zero target leaves that user off.
    tg.gamma1 = 0.0;
    const PowerAllocation q = minimum_powers(b11, a12, a21, a22, tg);
    CHECK(q.feasible);
    CHECK(q.p1 == 0.0);
    CHECK(a22 * q.p2 / tg.sigma2_sq >= tg.sinr2());
    CHECK_FALSE(minimum_powers(b11, a12, a21, 0.0, tg).feasible);
}

TEST_CASE("beam step: zero targets need no power")
{
    Rng rng(4);
    const ChannelSet ch = random_channels(rng, 3, 3);
    DesignTargets tg;
    tg.gamma1 = tg.gamma2 = 0.0;
    const BeamStepResult r = solve_beam_step(ch, LiftedPhase::from_theta(CVec::Ones(3)), tg);
    CHECK(r.power < 1e-8);
    // Any eps_k >= sigma_k^2 is optimal here.
    CHECK(r.eps1 >= tg.sigma1_sq);
    CHECK(r.eps2 >= tg.sigma2_sq);
}

TEST_CASE("beam step: scalar instance against a grid over two powers")
{
    Rng rng(5);
    for (int trial = 0; trial < 4; ++trial)
    {
        const ChannelSet ch = random_channels(rng, 1, 1);
        const CVec theta = CVec::Constant(1, std::polar(1.0, uniform(rng, -3.0, 3.0)));
        DesignTargets tg;
        tg.gamma1 = 1.0;
        tg.gamma2 = 0.5;
        tg.sigma1_sq = 0.01;
        tg.sigma2_sq = 0.02;
        const double h = std::norm(ch.h1(0, 0));
        const double c1 = std::norm(cascaded_user1(ch, theta)(0, 0));
        const double c2 = std::norm(cascaded_user2(ch, theta)(0, 0));
        const double t1 = tg.sinr1(), t2 = tg.sinr2();
        // Keep the instance well inside the feasible region.
        if (h <= 2.0 * t1 * t2 * c1)
        {
            --trial;
            continue;
        }
        auto ok = [&](double p1, double p2) {
            return h * p1 >= t1 * (c1 * p2 + tg.sigma1_sq) && c2 * p2 >= t2 * (c2 * p1 + tg.sigma2_sq);
        };

        // Brute force: a 201 x 201 grid, zoomed around the best point.
        double lo1 = 0.0, hi1 = 100.0, lo2 = 0.0, hi2 = 100.0;
        double best = std::numeric_limits<double>::infinity(), b1 = 0.0, b2 = 0.0;
        for (int level = 0; level < 8; ++level)
        {
            const int n = 200;
            for (int i = 0; i <= n; ++i)
                for (int j = 0; j <= n; ++j)
                {
                    const double p1 = lo1 + (hi1 - lo1) * i / n, p2 = lo2 + (hi2 - lo2) * j / n;
                    if (ok(p1, p2) && p1 + p2 < best)
                    {
                        best = p1 + p2;
                        b1 = p1;
                        b2 = p2;
                    }
                }
            REQUIRE(std::isfinite(best));
            const double w1 = (hi1 - lo1) / 20.0, w2 = (hi2 - lo2) / 20.0;
            lo1 = std::max(0.0, b1 - w1);
            hi1 = b1 + w1;
            lo2 = std::max(0.0, b2 - w2);
            hi2 = b2 + w2;
        }

        const BeamStepResult r = solve_beam_step(ch, LiftedPhase::from_theta(theta), tg);
        CHECK(r.power == doctest::Approx(best).epsilon(1e-4));
    }
}

TEST_CASE("beam step: power scales with the noise level")
{
    Rng rng(6);
    ChannelSet ch = random_channels(rng, 3, 2);
    ch.g1.setZero();
    const LiftedPhase e = LiftedPhase::from_theta(CVec::Ones(2));
    DesignTargets tg;
    tg.sigma1_sq = 0.01;
    tg.sigma2_sq = 0.02;
    const BeamStepResult a = solve_beam_step(ch, e, tg);
    tg.sigma1_sq *= 4.0;
    tg.sigma2_sq *= 4.0;
    const BeamStepResult b = solve_beam_step(ch, e, tg);
    CHECK(b.power == doctest::Approx(4.0 * a.power).epsilon(1e-5));
}

TEST_CASE("beam step: constraint values match lifted recomputation")
{
    Rng rng(7);
    const ChannelSet ch = random_channels(rng, 3, 3);
    CVec theta(3);
    for (int i = 0; i < 3; ++i)
        theta(i) = std::polar(1.0, uniform(rng, -3.0, 3.0));
    const LiftedPhase e = LiftedPhase::from_theta(theta);
    DesignTargets tg;
    tg.sigma1_sq = tg.sigma2_sq = 0.01;
    const BeamStepResult r = solve_beam_step(ch, e, tg);
    const auto ups1 = build_upsilon(ch.h1, ch.g1, ch.h_br);
    const auto ups2 = build_upsilon(CMat::Zero(1, 3), ch.g2, ch.h_br);
    const double tol = 1e-6;
    CHECK(lifted_quadratic(ups2, e, r.f1) + tg.sigma2_sq <= r.eps2 * (1.0 + tol));
    CHECK(lifted_quadratic(ups2, e, r.f2) >= tg.sinr2() * r.eps2 * (1.0 - tol));
    CHECK(lifted_quadratic(ups1, e, r.f2) + tg.sigma1_sq <= r.eps1 * (1.0 + tol));
    CHECK((ch.h1 * r.f1.f * ch.h1.adjoint()).trace().real() >= tg.sinr1() * r.eps1 * (1.0 - tol));
    CHECK(r.power == doctest::Approx(r.f1.power() + r.f2.power()).epsilon(1e-12));
    CHECK(linalg::eigh(r.f1.f, 1e-8).values(0) >= -1e-9 * r.power);
}

TEST_CASE("beam step: infeasible targets raise StepInfeasible")
{
    // User 2 sees nothing of the RIS.
    Rng rng(8);
    ChannelSet ch = random_channels(rng, 2, 2);
    ch.g2.setZero();
    CHECK_THROWS_AS(solve_beam_step(ch, LiftedPhase::from_theta(CVec::Ones(2)), DesignTargets{}), StepInfeasible);
}

TEST_CASE("phase step: single element against a phase grid")
{
    Rng rng(9);
    for (int trial = 0; trial < 3; ++trial)
    {
        const ChannelSet ch = random_channels(rng, 2, 1);
        DesignTargets tg;
        tg.sigma1_sq = tg.sigma2_sq = 0.05;
        tg.gamma2 = 0.2;
        const CVec f1 = 0.3 * complex_normal_vector(rng, 2);
        const CVec f2 = complex_normal_vector(rng, 2);
        auto objective = [&](const CVec &th) {
            const double e1 = (cascaded_user1(ch, th) * f2).squaredNorm() + tg.sigma1_sq;
            const double e2 = (cascaded_user2(ch, th) * f1).squaredNorm() + tg.sigma2_sq;
            return e1 + e2;
        };
        auto feasible = [&](const CVec &th) {
            const double e2 = (cascaded_user2(ch, th) * f1).squaredNorm() + tg.sigma2_sq;
            return (cascaded_user2(ch, th) * f2).squaredNorm() >= tg.sinr2() * e2;
        };
        double grid = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 256; ++k)
        {
            const CVec th = CVec::Constant(1, std::polar(1.0, 2.0 * std::numbers::pi * k / 256));
            if (feasible(th))
                grid = std::min(grid, objective(th));
        }
        REQUIRE(std::isfinite(grid));

        const PhaseStepResult ps =
            solve_phase_step(ch, BeamGram::from_beam(f1), BeamGram::from_beam(f2), tg);
        const RecoveryResult r = randomize_rank1(ps.e.e, RecoveryMode::Phase, {100, 17, true}, feasible,
                                                 [&](const CVec &th) { return -objective(th); });
        CHECK(std::abs(objective(r.value) - grid) <= 1e-2 * grid);
    }
}

TEST_CASE("phase step: degenerate constraints still give a valid lift")
{
    Rng rng(10);
    ChannelSet ch = random_channels(rng, 2, 4);
    ch.g1.setZero();
    DesignTargets tg;
    tg.gamma2 = 0.1;
    const CVec f2 = 10.0 * complex_normal_vector(rng, 2);
    const PhaseStepResult ps =
        solve_phase_step(ch, BeamGram{CMat::Zero(2, 2)}, BeamGram::from_beam(f2), tg);
    for (int i = 0; i < 5; ++i)
        CHECK(ps.e.e(i, i).real() == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(linalg::eigh(ps.e.e, 1e-8).values(0) >= -1e-7);
}

TEST_CASE("phase step: a single cascaded link is phase-aligned")
{
    Rng rng(11);
    const int m = 6;
    ChannelSet ch;
    ch.h1 = CMat::Zero(1, 1);
    ch.g1 = CMat::Zero(1, m);
    ch.g2 = complex_normal_matrix(rng, 1, m);
    ch.h_br = complex_normal_matrix(rng, m, 1);
    double coherent = 0.0;
    for (int k = 0; k < m; ++k)
        coherent += std::abs(ch.g2(0, k) * ch.h_br(k, 0));
    // A target only reachable with near-coherent combining.
    DesignTargets tg;
    tg.sigma2_sq = 1.0;
    tg.gamma2 = std::log2(1.0 + 0.995 * 0.995 * coherent * coherent);
    const CVec f2 = CVec::Ones(1);
    const PhaseStepResult ps = solve_phase_step(ch, BeamGram{CMat::Zero(1, 1)}, BeamGram::from_beam(f2), tg);
    auto gain = [&](const CVec &th) {
        cd s = 0.0;
        for (int k = 0; k < m; ++k)
            s += ch.g2(0, k) * th(k) * ch.h_br(k, 0);
        return std::abs(s);
    };
    const RecoveryResult r = randomize_rank1(ps.e.e, RecoveryMode::Phase, {100, 5, true},
                                             [](const CVec &) { return true; }, gain);
    CHECK(gain(r.value) >= 0.99 * coherent);
}

TEST_CASE("AO: zero targets")
{
    Rng rng(12);
    const ChannelSet ch = random_channels(rng, 3, 3);
    DesignTargets tg;
    tg.gamma1 = tg.gamma2 = 0.0;
    const DesignSolution s = alternating_optimize(ch, tg, AoOptions{});
    CHECK(s.feasible);
    CHECK(s.power == 0.0);
    CHECK(s.iterations == 1);
}

TEST_CASE("AO: keep-best trace, unit phases and faithful constraints")
{
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
    {
        const ChannelSet ch = desk_draw(seed, 4);
        const DesignTargets tg;
        AoOptions opt;
        opt.seed = seed;
        const DesignSolution s = alternating_optimize(ch, tg, opt);
        REQUIRE(s.feasible);
        REQUIRE(!s.power_trace.empty());
        for (std::size_t i = 1; i < s.power_trace.size(); ++i)
            CHECK(s.power_trace[i] <= s.power_trace[i - 1]);
        CHECK(s.power == doctest::Approx(s.power_trace.back()).epsilon(1e-12));
        CHECK(s.power == doctest::Approx(s.f1.squaredNorm() + s.f2.squaredNorm()).epsilon(1e-12));
        for (int k = 0; k < s.theta.size(); ++k)
            CHECK(std::abs(std::abs(s.theta(k)) - 1.0) < 1e-15);
        const SePair se = effective_se(ch, s, tg);
        CHECK(se.se1 >= tg.gamma1 - 1e-3);
        CHECK(se.se2 >= tg.gamma2 - 1e-3);
        // Slack levels are the interference-plus-noise terms of the solution.
        CHECK(s.eps1 == doctest::Approx((cascaded_user1(ch, s.theta) * s.f2).squaredNorm() + tg.sigma1_sq));
        CHECK(s.eps2 == doctest::Approx((cascaded_user2(ch, s.theta) * s.f1).squaredNorm() + tg.sigma2_sq));
    }
}

TEST_CASE("AO: deterministic in the seed")
{
    const ChannelSet ch = desk_draw(5, 4);
    AoOptions opt;
    opt.seed = 9;
    const DesignSolution a = alternating_optimize(ch, DesignTargets{}, opt);
    const DesignSolution b = alternating_optimize(ch, DesignTargets{}, opt);
    CHECK(a.power == b.power);
    CHECK(a.f1 == b.f1);
    CHECK(a.theta == b.theta);
}

TEST_CASE("AO: desk scenario meets the targets on the design channels")
{
    const DesignTargets tg;
    int met = 0;
    const int draws = 50;
    for (int d = 0; d < draws; ++d)
    {
        const ChannelSet ch = desk_draw(derive_seed(2024, static_cast<std::uint64_t>(d)), 8);
        AoOptions opt;
        opt.seed = static_cast<std::uint64_t>(d) + 1;
        const DesignSolution s = alternating_optimize(ch, tg, opt);
        if (!s.feasible)
            continue;
        const SePair se = effective_se(ch, s, tg);
        met += se.se1 >= tg.gamma1 - 1e-3 && se.se2 >= tg.gamma2 - 1e-3;
    }
    MESSAGE("draws meeting both targets: " << met << " / " << draws);
    CHECK(met >= 45);
}

TEST_CASE("AO: option validation")
{
    AoOptions o;
    o.max_iters = 0;
    CHECK_THROWS_AS(o.validate(), ValidationError);
    o = AoOptions{};
    o.rel_tol = 0.0;
    CHECK_THROWS_AS(o.validate(), ValidationError);
    DesignTargets tg;
    tg.sigma1_sq = 0.0;
    CHECK_THROWS_AS(tg.validate(), ValidationError);
}
