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

#include <cmath>
#include <sstream>

#include "dtris/random.hpp"
#include "dtris/robust.hpp"

using namespace dtris;

namespace
{

CMat random_psd(Rng &rng, int n, int rank = -1)
{
    const CMat a = complex_normal_matrix(rng, n, rank < 0 ? n : rank);
    return a * a.adjoint();
}

CMat random_hermitian(Rng &rng, int n)
{
    const CMat a = complex_normal_matrix(rng, n, n);
    return 0.5 * (a + a.adjoint());
}

CVec random_phases(Rng &rng, int m)
{
    CVec t(m);
    for (int i = 0; i < m; ++i)
        t(i) = std::polar(1.0, uniform(rng, -3.0, 3.0));
    return t;
}

// Fixed user pair; each coherence block redraws the scattering.
struct Desk
{
    ScenarioConfig config;
    Eigen::Vector3d u1, u2;

    ScenarioRealization block(std::uint64_t b) const
    {
        ScenarioConfig c = config;
        c.seed = derive_seed(config.seed, b);
        return generate_scenario(c, u1, u2);
    }
};

Desk make_desk(std::uint64_t seed, int n)
{
    Desk d;
    d.config.n_tx = n;
    d.config.n_ris = n;
    d.config.seed = seed;
    Rng rng(derive_seed(seed, 7));
    d.u1 = sample_grid_node(d.config.bs_grid, rng);
    d.u2 = sample_grid_node(d.config.ris_grid, rng);
    return d;
}

// Covariance of the direct-link twin error over many blocks.
ErrorStatistics desk_statistics(const Desk &d, int blocks)
{
    ErrorStatistics st = ErrorStatistics::with_prior(d.config.n_tx);
    for (int b = 0; b < blocks; ++b)
    {
        const ScenarioRealization r = d.block(1000000 + static_cast<std::uint64_t>(b));
        st = update_covariance(st, channel_error(r.real.h1, r.dt.h1));
    }
    return st;
}

CMat re_coef(int n, int p, int q)
{
    CMat a = CMat::Zero(n, n);
    a(p, q) += 0.5;
    a(q, p) += 0.5;
    return a;
}

CMat im_coef(int n, int p, int q)
{
    CMat a = CMat::Zero(n, n);
    a(p, q) = cd(0.0, 0.5);
    a(q, p) = cd(0.0, -0.5);
    return a;
}

// Slack form of the Bernstein-type bound solved as a conic program: the best value of
// tr U - a x + ln(rho) y + u0 over x >= ||(vec U, sqrt2 u)||, yI + U PSD.
double slack_form_margin(const BernsteinParams &p, double rho)
{
    const int d = static_cast<int>(p.U.rows());
    conic::ConicProgram prog;
    const conic::ScalarVar x = prog.add_scalar_var("x");
    const conic::ScalarVar y = prog.add_scalar_var("y");
    const conic::MatVar z = prog.add_matrix_var("Z", d);
    std::vector<conic::AffineExpr> entries;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            entries.push_back(conic::AffineExpr{}.add_constant(std::abs(p.U(i, j))));
    for (int i = 0; i < d; ++i)
        entries.push_back(conic::AffineExpr{}.add_constant(std::sqrt(2.0) * std::abs(p.u(i))));
    prog.add_soc(entries, conic::term(x));
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j)
        {
            conic::AffineExpr re;
            re.add(z, re_coef(d, i, j));
            if (i == j)
                re.add(y, -1.0);
            prog.add_linear(re, conic::Relation::Equal, p.U(i, j).real());
            if (i != j)
            {
                conic::AffineExpr im;
                im.add(z, im_coef(d, i, j));
                prog.add_linear(im, conic::Relation::Equal, p.U(i, j).imag());
            }
        }
    const double a = std::sqrt(2.0 * std::log(1.0 / rho));
    conic::AffineExpr obj = conic::term(x, a);
    obj.add(y, -std::log(rho));
    prog.minimize(obj);
    const conic::SolverResult r = conic::solve(prog);
    REQUIRE(r.optimal());
    return p.U.trace().real() + p.u0 - r.objective;
}

double empirical_success(const BernsteinParams &p, int n, std::uint64_t seed)
{
    Rng rng(seed);
    int ok = 0;
    for (int i = 0; i < n; ++i)
        ok += p.evaluate(complex_normal_vector(rng, p.U.rows())) >= 0.0;
    return static_cast<double>(ok) / n;
}

} // namespace

TEST_CASE("covariance recursion")
{
    Rng rng(1);
    const int nt = 3;
    ErrorStatistics st = ErrorStatistics::with_prior(nt, 0.5);
    const CMat d1 = complex_normal_matrix(rng, 1, nt);
    st = update_covariance(st, d1);
    const CVec v = d1.adjoint();
    CHECK(st.n == 1);
    CHECK((st.sigma - v * v.adjoint()).norm() <= 1e-15);

    const CMat before = st.sigma;
    st = update_covariance(st, CMat::Zero(1, nt));
    CHECK((st.sigma - 0.5 * before).norm() <= 1e-15);

    CHECK_THROWS_AS(update_covariance(st, CMat::Zero(1, nt + 1)), ValidationError);
}

TEST_CASE("streaming covariance equals the batch sample covariance")
{
    Rng rng(2);
    const int nt = 2, rows = 3; // error of a 3 x 2 stacked channel
    ErrorStatistics st = ErrorStatistics::with_prior(nt * rows);
    CMat batch = CMat::Zero(nt * rows, nt * rows);
    for (int i = 0; i < 500; ++i)
    {
        const CMat d = complex_normal_matrix(rng, rows, nt);
        st = update_covariance(st, d);
        const CVec v = linalg::vec(d.adjoint());
        batch += v * v.adjoint();
    }
    batch /= 500.0;
    CHECK(st.n == 500);
    CHECK((st.sigma - batch).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("whitening transforms")
{
    CHECK((whitening(CMat::Identity(4, 4), WhiteningKind::Zca, 0.0) - CMat::Identity(4, 4)).norm() <= 1e-14);
    const double eps = 0.04;
    CHECK((whitening(eps * CMat::Identity(3, 3), WhiteningKind::Zca, 0.0) -
           CMat::Identity(3, 3) / std::sqrt(eps))
              .norm() <= 1e-12);

    Rng rng(3);
    const CMat s = random_psd(rng, 8);
    for (WhiteningKind k : {WhiteningKind::Zca, WhiteningKind::Cholesky, WhiteningKind::Pca})
    {
        const CMat t = whitening(s, k, 0.0);
        CHECK((t * s * t.adjoint() - CMat::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK(parse_whitening(to_string(k)) == k);
    }
    const CMat low = random_psd(rng, 4, 2);
    CHECK_THROWS_AS(whitening(low, WhiteningKind::Zca, 0.0), NumericalError);
    CHECK_NOTHROW(whitening(low, WhiteningKind::Cholesky, 1e-6));
    CHECK_THROWS_AS(parse_whitening("mahalanobis"), ValidationError);
}

TEST_CASE("whitened samples have identity covariance")
{
    Rng rng(4);
    const int d = 6;
    const CMat s = random_psd(rng, d);
    const CMat root = linalg::sqrt_psd(s);
    const CMat t = whitening(s, WhiteningKind::Zca, 0.0);
    CMat c = CMat::Zero(d, d);
    const int n = 10000;
    for (int i = 0; i < n; ++i)
    {
        const CVec w = t * root * complex_normal_vector(rng, d);
        c += w * w.adjoint();
    }
    c /= n;
    CHECK((c - CMat::Identity(d, d)).norm() <= 0.1 * d);
}

TEST_CASE("Bernstein bound: eigenvalue form and slack form agree")
{
    Rng rng(5);
    int agree = 0, decided = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        const int d = 2 + trial % 3;
        BernsteinParams p;
        p.U = random_hermitian(rng, d);
        p.u = complex_normal_vector(rng, d);
        p.u0 = uniform(rng, -2.0, 15.0);
        const double rho = uniform(rng, 0.01, 0.3);
        const double eig = bernstein_margin(p, rho);
        const double slack = slack_form_margin(p, rho);
        CHECK(slack == doctest::Approx(eig).epsilon(1e-6).scale(1.0));
        if (std::abs(eig) > 1e-6)
        {
            ++decided;
            agree += (eig >= 0.0) == (slack >= 0.0);
        }
        const BernsteinSlacks sl = bernstein_slacks(p, rho);
        CHECK(sl.feasible == (eig >= 0.0));
        CHECK(bernstein_slack_feasible(p, rho, sl.x, sl.y) == sl.feasible);
    }
    CHECK(agree == decided);
}

TEST_CASE("Bernstein bound: limits")
{
    Rng rng(6);
    BernsteinParams p;
    p.U = random_hermitian(rng, 3);
    p.u = complex_normal_vector(rng, 3);
    p.u0 = 1.0;
    const double mean = p.U.trace().real() + p.u0;
    CHECK(std::abs(bernstein_margin(p, 1.0 - 1e-12) - mean) < 1e-4);
    CHECK(bernstein_margin(p, 0.5) > bernstein_margin(p, 0.05));
    CHECK_THROWS_AS(bernstein_margin(p, 1.0), ValidationError);
    CHECK_THROWS_AS(bernstein_margin(p, 0.0), ValidationError);
}

TEST_CASE("Bernstein bound: sampling soundness at the boundary")
{
    Rng rng(7);
    const double rho = 0.05;
    const int n = 100000;
    for (int trial = 0; trial < 4; ++trial)
    {
        BernsteinParams p;
        p.U = random_hermitian(rng, 4);
        p.u = complex_normal_vector(rng, 4);
        p.u0 = 0.0;
        p.u0 = -bernstein_margin(p, rho); // margin exactly zero
        const double success = empirical_success(p, n, 100 + trial);
        MESSAGE("empirical success " << success);
        CHECK(success >= 1.0 - rho - 3.0 * std::sqrt(rho / n));
    }
}

TEST_CASE("Bernstein restriction: closed-form and basis forms give the same program")
{
    Rng rng(8);
    const int nt = 3, m = 2;
    const double rho = 0.05;
    for (int trial = 0; trial < 4; ++trial)
    {
        const StackedChannel ups{complex_normal_matrix(rng, m + 1, nt)};
        const LiftedPhase e = LiftedPhase::from_theta(random_phases(rng, m));
        // The last trial has a rank-one covariance, as in early learning blocks.
        const CMat sigma = trial < 3 ? CMat(0.02 * random_psd(rng, nt)) : CMat(0.02 * random_psd(rng, nt, 1));
        const CMat t = whitening(sigma, WhiteningKind::Zca, RobustOptions{}.regularizer(sigma));
        REQUIRE(bernstein_margin(bernstein_params(ups, e, BeamGram{CMat::Identity(nt, nt)}, t), rho) > 0.0);
        const conic::AffineExpr rhs = conic::AffineExpr{}.add_constant(1.0);

        double objective[4];
        for (int variant = 0; variant < 4; ++variant)
        {
            const bool lmi = variant % 2 == 1;
            conic::ConicProgram prog;
            const conic::MatVar v = prog.add_matrix_var("F", nt);
            if (variant < 2)
                bernstein_restrict(prog, v, ups, e, t, rho, 1.0, rhs, lmi);
            else
                bernstein_restrict_direct(prog, v, ups, e, t, rho, 1.0, rhs, lmi);
            prog.minimize(conic::trace_of(v, nt));
            const conic::SolverResult r = conic::solve(prog);
            REQUIRE(r.optimal());
            objective[variant] = r.objective;
            // The restriction binds at the optimum and equals the eigenvalue form.
            const double margin = bernstein_margin(bernstein_params(ups, e, BeamGram{r.value(v)}, t), rho);
            CHECK(margin == doctest::Approx(1.0).epsilon(1e-5));
        }
        for (int variant = 1; variant < 4; ++variant)
            CHECK(objective[variant] == doctest::Approx(objective[0]).epsilon(1e-5));
    }
}

TEST_CASE("Bernstein restriction with error on the full stacked channel")
{
    Rng rng(9);
    const int nt = 2, m = 2, d = (m + 1) * nt;
    const double rho = 0.1;
    const StackedChannel ups{complex_normal_matrix(rng, m + 1, nt)};
    const LiftedPhase e = LiftedPhase::from_theta(random_phases(rng, m));
    const CMat t = whitening(0.01 * random_psd(rng, d), WhiteningKind::Cholesky, 0.0);
    conic::ConicProgram prog;
    const conic::MatVar v = prog.add_matrix_var("F", nt);
    const conic::ScalarVar s = prog.add_scalar_var("s");
    conic::AffineExpr rhs = conic::term(s, 2.0);
    rhs.add_constant(2.0);
    const double gain = 3.0;
    bernstein_restrict(prog, v, ups, e, t, rho, gain, rhs, false);
    prog.add_linear(conic::term(s), conic::Relation::GreaterEqual, 0.5);
    prog.minimize(conic::trace_of(v, nt));
    const conic::SolverResult r = conic::solve(prog);
    REQUIRE(r.optimal());
    CHECK(r.value(s) == doctest::Approx(0.5).epsilon(1e-6));
    const double margin = bernstein_margin(bernstein_params(ups, e, BeamGram{r.value(v)}, t), rho);
    CHECK(gain * margin == doctest::Approx(3.0).epsilon(1e-5));
}

TEST_CASE("robust beam step meets the Bernstein bound and nominally feasible")
{
    const Desk desk = make_desk(11, 4);
    const ErrorStatistics st = desk_statistics(desk, 300);
    const ChannelSet ch = desk.block(0).dt;
    const RobustModel model = make_robust_model(st, RobustOptions{});
    DesignTargets tg;
    const LiftedPhase e = LiftedPhase::from_theta(CVec::Ones(ch.n_ris()));
    const BeamStepResult r = solve_beam_step(ch, e, tg, {}, &model);
    const auto direct = build_upsilon(ch.h1, CMat::Zero(1, ch.n_ris()), ch.h_br);
    const BernsteinParams p = bernstein_params(direct[0], e, r.f1, model.t_whiten);
    CHECK(bernstein_margin(p, model.rho) >= tg.sinr1() * r.eps1 * (1.0 - 1e-6));
    CHECK(p.u0 >= tg.sinr1() * r.eps1 * (1.0 - 1e-6));

    const BeamStepResult nominal = solve_beam_step(ch, e, tg);
    CHECK(r.power >= nominal.power * (1.0 - 1e-6));

    RobustModel lmi = model;
    lmi.full_lmi = true;
    CHECK(solve_beam_step(ch, e, tg, {}, &lmi).power == doctest::Approx(r.power).epsilon(1e-5));
}

TEST_CASE("robust design with vanishing covariance matches the perfect design")
{
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
    {
        const Desk desk = make_desk(seed, 4);
        const ChannelSet ch = desk.block(0).dt;
        const DesignTargets tg;
        AoOptions opt;
        opt.seed = seed;
        const DesignSolution perfect = alternating_optimize(ch, tg, opt);
        const DesignSolution robust =
            robust_optimize(ch, tg, ErrorStatistics::with_prior(4, 1e-12), opt, RobustOptions{});
        REQUIRE(perfect.feasible);
        REQUIRE(robust.feasible);
        CHECK(robust.power == doctest::Approx(perfect.power).epsilon(1e-2));
    }
}

TEST_CASE("robust power grows with the error covariance")
{
    const Desk desk = make_desk(21, 4);
    const ErrorStatistics st = desk_statistics(desk, 300);
    const ChannelSet ch = desk.block(0).dt;
    const DesignTargets tg;
    const LiftedPhase e = LiftedPhase::from_theta(CVec::Ones(ch.n_ris()));

    // Fixed phases: the restriction only tightens as the covariance grows.
    double previous = solve_beam_step(ch, e, tg).power;
    for (double scale : {0.001, 0.01, 0.1, 1.0})
    {
        ErrorStatistics s = st;
        s.sigma *= scale;
        const RobustModel model = make_robust_model(s, RobustOptions{});
        const double power = solve_beam_step(ch, e, tg, {}, &model).power;
        MESSAGE("scale " << scale << " beam-step power " << power);
        CHECK(power > previous);
        previous = power;
    }

    // The full alternation is a local method; compare well separated scales.
    AoOptions opt;
    ErrorStatistics small = st, large = st;
    small.sigma *= 0.001;
    const DesignSolution a = robust_optimize(ch, tg, small, opt, RobustOptions{});
    const DesignSolution b = robust_optimize(ch, tg, large, opt, RobustOptions{});
    REQUIRE(a.feasible);
    REQUIRE(b.feasible);
    CHECK(b.power > 1.2 * a.power);
}

TEST_CASE("robust design keeps the user-1 outage near rho")
{
    const Desk desk = make_desk(31, 8);
    const ErrorStatistics st = desk_statistics(desk, 2000);
    const ChannelSet ch = desk.block(0).dt;
    const DesignTargets tg;
    const DesignSolution robust = robust_optimize(ch, tg, st, AoOptions{}, RobustOptions{});
    const DesignSolution perfect = alternating_optimize(ch, tg, AoOptions{});
    REQUIRE(robust.feasible);
    const ChannelSampler sampler = gaussian_error_sampler(ch, st.sigma, 5);
    const OutageEstimate o = monte_carlo_outage(robust, sampler, tg, 2000);
    const OutageEstimate op = monte_carlo_outage(perfect, sampler, tg, 2000);
    MESSAGE("robust outage " << o.outage1 << " perfect outage " << op.outage1);
    CHECK(o.outage1 <= 0.10);
    CHECK(o.outage2 == 0.0); // the RIS link carries no error here
    CHECK(op.outage1 > o.outage1);
}

TEST_CASE("Monte Carlo outage: trivial cases and thread invariance")
{
    const Desk desk = make_desk(41, 4);
    const ChannelSet ch = desk.block(0).dt;
    DesignTargets tg;
    const DesignSolution sol = alternating_optimize(ch, tg, AoOptions{});
    REQUIRE(sol.feasible);
    const ChannelSampler exact = [&](std::size_t) { return ch; };
    const OutageEstimate z = monte_carlo_outage(sol, exact, tg, 50);
    CHECK(z.outage1 == 0.0);
    CHECK(z.outage2 == 0.0);

    const ErrorStatistics st = desk_statistics(desk, 200);
    const ChannelSampler noisy = gaussian_error_sampler(ch, st.sigma, 9);
    const OutageEstimate a = monte_carlo_outage(sol, noisy, tg, 300, 1);
    const OutageEstimate b = monte_carlo_outage(sol, noisy, tg, 300, 4);
    CHECK(a.outage1 == b.outage1);
    CHECK(a.outage2 == b.outage2);
    CHECK(a.stderr1 == doctest::Approx(std::sqrt(a.outage1 * (1.0 - a.outage1) / 300.0)));

    DesignTargets zero;
    zero.gamma1 = zero.gamma2 = 0.0;
    const OutageEstimate g = monte_carlo_outage(sol, noisy, zero, 100);
    CHECK(g.outage1 == 0.0);
    CHECK(g.outage2 == 0.0);
    CHECK_THROWS_AS(monte_carlo_outage(sol, noisy, tg, 0), ValidationError);
}

TEST_CASE("online learning: exact twin learns a zero covariance")
{
    Desk desk = make_desk(51, 4);
    desk.config.l_dt = desk.config.l_real;
    std::vector<CoherenceBlock> stream;
    for (std::uint64_t b = 0; b < 3; ++b)
    {
        const ScenarioRealization r = desk.block(b);
        stream.push_back({r.dt, r.real});
    }
    const DesignTargets tg;
    AoOptions opt;
    const Algorithm1Result res = algorithm1_run(stream, tg, opt, RobustOptions{});
    REQUIRE(res.blocks.size() == 3);
    CHECK(res.final_stats.sigma.norm() == 0.0);
    for (std::size_t b = 0; b < 3; ++b)
    {
        REQUIRE_FALSE(res.blocks[b].failed);
        AoOptions ob = opt;
        ob.seed = derive_seed(opt.seed, b);
        const DesignSolution perfect = alternating_optimize(stream[b].dt, tg, ob);
        CHECK(res.blocks[b].solution.power == doctest::Approx(perfect.power).epsilon(1e-2));
    }
}

TEST_CASE("online learning: first block and convergence gate")
{
    const Desk desk = make_desk(61, 4);
    const ScenarioRealization r = desk.block(0);
    ChannelSet real = r.dt;
    Rng rng(3);
    real.h1 += 0.05 * complex_normal_matrix(rng, 1, 4);
    const std::vector<CoherenceBlock> one{{r.dt, real}};
    const Algorithm1Result a = algorithm1_run(one, DesignTargets{}, AoOptions{}, RobustOptions{});
    const CVec v = channel_error(real.h1, r.dt.h1).adjoint();
    CHECK((a.final_stats.sigma - v * v.adjoint()).norm() <= 1e-15);
    CHECK(a.blocks[0].learned);

    // Identical blocks: statistics and objective are stationary, so the gate
    // closes once two full windows are available.
    RobustOptions ropt;
    ropt.conv_window = 2;
    const std::vector<CoherenceBlock> same(6, CoherenceBlock{r.dt, real});
    const Algorithm1Result g = algorithm1_run(same, DesignTargets{}, AoOptions{}, ropt);
    for (std::size_t b = 0; b < 6; ++b)
        CHECK(g.blocks[b].learned == (b < 4));
    CHECK(g.trajectory.size() == 6);
    CHECK(g.final_stats.n == 4);
    CHECK_THROWS_AS(algorithm1_run({}, DesignTargets{}, AoOptions{}, RobustOptions{}), ValidationError);
}

TEST_CASE("statistics round-trip")
{
    Rng rng(12);
    ErrorStatistics st;
    st.sigma = random_psd(rng, 3);
    st.n = 17;
    std::stringstream ss;
    write_statistics(ss, st);
    const ErrorStatistics back = read_statistics(ss);
    CHECK(back.n == 17);
    CHECK((back.sigma - st.sigma).norm() == 0.0);
    std::stringstream empty("# nothing\n");
    CHECK_THROWS_AS(read_statistics(empty), ValidationError);
}

TEST_CASE("robust option validation")
{
    RobustOptions o;
    o.rho = 1.0;
    CHECK_THROWS_AS(o.validate(), ValidationError);
    o = RobustOptions{};
    o.conv_window = 0;
    CHECK_THROWS_AS(o.validate(), ValidationError);
    CHECK(RobustOptions{}.regularizer(CMat::Zero(2, 2)) > 0.0);
    CHECK(RobustOptions{}.regularizer(2.0 * CMat::Identity(2, 2)) == doctest::Approx(2e-8));
}
