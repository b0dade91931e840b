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

// Acceptance suite: one PASS/FAIL line per criterion. Optional argument:
// path of the dtris_cli executable for the command-line determinism check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dtris/experiment.hpp"
#include "dtris/random.hpp"
#include "dtris/robust.hpp"
#include "dtris/transform.hpp"

using namespace dtris;

namespace
{

int g_failures = 0;
double g_modulus_error = 0.0;
bool g_monotone = true;
int g_solutions = 0;

void report(int id, bool pass, const std::string &detail, double seconds)
{
    std::printf("CRITERION %2d: %s  %s [%.1f s]\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
    std::fflush(stdout);
    g_failures += !pass;
}

void run(int id, const std::function<bool(std::string &)> &body)
{
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try
    {
        pass = body(detail);
    }
    catch (const std::exception &e)
    {
        detail += std::string(" exception: ") + e.what();
    }
    report(id, pass, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string format(const char *f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

void track(const DesignSolution &s)
{
    ++g_solutions;
    for (Eigen::Index m = 0; m < s.theta.size(); ++m)
        g_modulus_error = std::max(g_modulus_error, std::abs(std::abs(s.theta(m)) - 1.0));
    for (std::size_t i = 1; i < s.power_trace.size(); ++i)
        g_monotone = g_monotone && !(s.power_trace[i] > s.power_trace[i - 1]);
}

void track(const ExperimentResult &r)
{
    for (const DrawRecord &d : r.records)
        if (!d.failed)
        {
            ++g_solutions;
            g_modulus_error = std::max(g_modulus_error, d.modulus_error);
            g_monotone = g_monotone && d.power_monotone;
        }
}

CVec random_phases(Rng &rng, int m)
{
    CVec t(m);
    for (int i = 0; i < m; ++i)
        t(i) = std::polar(1.0, uniform(rng, -3.14159, 3.14159));
    return t;
}

CMat random_psd(Rng &rng, int n)
{
    const CMat a = complex_normal_matrix(rng, n, n);
    return a * a.adjoint();
}

CMat random_hermitian(Rng &rng, int n)
{
    const CMat a = complex_normal_matrix(rng, n, n);
    return 0.5 * (a + a.adjoint());
}

// Slack form of the Bernstein restriction as a conic program: maximal
// tr U + u0 - a x + ln(rho) y over x >= ||(vec U, sqrt2 u)||, yI + U PSD.
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
            CMat re = CMat::Zero(d, d);
            re(i, j) += 0.5;
            re(j, i) += 0.5;
            conic::AffineExpr er;
            er.add(z, re);
            if (i == j)
                er.add(y, -1.0);
            prog.add_linear(er, conic::Relation::Equal, p.U(i, j).real());
            if (i != j)
            {
                CMat im = CMat::Zero(d, d);
                im(i, j) = cd(0.0, 0.5);
                im(j, i) = cd(0.0, -0.5);
                conic::AffineExpr ei;
                ei.add(z, im);
                prog.add_linear(ei, conic::Relation::Equal, p.U(i, j).imag());
            }
        }
    conic::AffineExpr obj = conic::term(x, std::sqrt(2.0 * std::log(1.0 / rho)));
    obj.add(y, -std::log(rho));
    prog.minimize(obj);
    const conic::SolverResult r = conic::solve(prog);
    if (!r.optimal())
        throw NumericalError("slack-form program not solved");
    return p.U.trace().real() + p.u0 - r.objective;
}

std::string slurp(const std::filesystem::path &p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ExperimentConfig base_config(int n)
{
    ExperimentConfig c;
    c.scenario.n_tx = n;
    c.scenario.n_ris = n;
    c.scenario.n_rx = 1;
    c.gammas = {1.0};
    c.rho = 0.05;
    c.n_draws = 100;
    c.seed = 2024;
    return c;
}

// Fixed user pair; every coherence block redraws the scattering.
struct Site
{
    ScenarioConfig config;
    Eigen::Vector3d u1, u2;

    ScenarioRealization block(std::uint64_t stream, std::uint64_t b) const
    {
        ScenarioConfig c = config;
        c.seed = derive_seed(derive_seed(config.seed, stream), b);
        return generate_scenario(c, u1, u2);
    }
};

Site make_site(std::uint64_t seed, int n)
{
    Site s;
    s.config.n_tx = n;
    s.config.n_ris = n;
    s.config.seed = seed;
    Rng rng(derive_seed(seed, 99));
    s.u1 = sample_grid_node(s.config.bs_grid, rng);
    s.u2 = sample_grid_node(s.config.ris_grid, rng);
    return s;
}

ErrorStatistics site_statistics(const Site &s, int n)
{
    ErrorStatistics st = ErrorStatistics::with_prior(s.config.n_tx);
    for (int i = 0; i < n; ++i)
    {
        const ScenarioRealization r = s.block(1, static_cast<std::uint64_t>(i));
        st = update_covariance(st, channel_error(r.real.h1, r.dt.h1));
    }
    return st;
}

} // namespace

int main(int argc, char **argv)
{
    const std::string cli = argc > 1 ? argv[1] : "";
    ExperimentResult shared_run;

    run(1, [](std::string &detail) {
        Rng rng(101);
        const int dims[] = {2, 4, 8};
        double worst_rank1 = 0.0, worst_order = 0.0;
        for (int trial = 0; trial < 200; ++trial)
        {
            const int nt = dims[rng() % 3], m = dims[rng() % 3], nr = 1 + static_cast<int>(rng() % 2);
            const CMat d = complex_normal_matrix(rng, nr, nt);
            const CMat g = complex_normal_matrix(rng, nr, m);
            const CMat h = complex_normal_matrix(rng, m, nt);
            const auto ups = build_upsilon(d, g, h);
            const CVec theta = random_phases(rng, m);
            const CVec f = complex_normal_vector(rng, nt);
            const double ref = ((d + g * theta.asDiagonal() * h) * f).squaredNorm();
            const double lifted = lifted_quadratic(ups, LiftedPhase::from_theta(theta), BeamGram::from_beam(f));
            worst_rank1 = std::max(worst_rank1, std::abs(lifted - ref) / ref);
            const LiftedPhase e{random_psd(rng, m + 1)};
            const BeamGram fg{random_psd(rng, nt)};
            const double a = lifted_quadratic(ups, e, fg), b = lifted_quadratic_phase_side(ups, e, fg);
            worst_order = std::max(worst_order, std::abs(a - b) / std::abs(a));
        }
        detail = format("lifting identity, 200 instances: max rel err %.2e (<= 1e-9), trace orderings %.2e (<= 1e-10)",
                        worst_rank1, worst_order);
        return worst_rank1 <= 1e-9 && worst_order <= 1e-10;
    });

    run(2, [](std::string &detail) {
        Rng rng(202);
        const double rho = 0.05;
        const int n = 100000;
        const double floor = 0.95 - 3.0 * std::sqrt(0.05 / n);
        double worst = 1.0;
        int agree = 0;
        for (int trial = 0; trial < 50; ++trial)
        {
            const int d = 2 + trial % 5;
            BernsteinParams p;
            p.U = random_hermitian(rng, d);
            p.u = complex_normal_vector(rng, d);
            p.u0 = 0.0;
            // Feasible with a small positive margin.
            p.u0 = -bernstein_margin(p, rho) + uniform(rng, 0.0, 0.5);
            const double eig = bernstein_margin(p, rho);
            const double slack = slack_form_margin(p, rho);
            const BernsteinSlacks sl = bernstein_slacks(p, rho);
            agree += eig >= 0.0 && slack >= -1e-7 && sl.feasible && bernstein_slack_feasible(p, rho, sl.x, sl.y) &&
                     std::abs(eig - slack) <= 1e-6 * std::max(1.0, std::abs(eig));
            Rng mc(derive_seed(303, static_cast<std::uint64_t>(trial)));
            int ok = 0;
            for (int i = 0; i < n; ++i)
                ok += p.evaluate(complex_normal_vector(mc, d)) >= 0.0;
            worst = std::min(worst, static_cast<double>(ok) / n);
        }
        detail = format("Bernstein soundness: min empirical success %.5f (>= %.5f); forms agree on %d/50", worst,
                        floor, agree);
        return worst >= floor && agree == 50;
    });

    run(3, [](std::string &detail) {
        Rng rng(404);
        const int nt = 4, rows = 3, n = 1000;
        ErrorStatistics st = ErrorStatistics::with_prior(nt * rows);
        CMat batch = CMat::Zero(nt * rows, nt * rows);
        for (int i = 0; i < n; ++i)
        {
            const CMat dl = complex_normal_matrix(rng, rows, nt);
            st = update_covariance(st, dl);
            const CVec v = linalg::vec(dl.adjoint());
            batch += v * v.adjoint();
        }
        batch /= n;
        const double err = (st.sigma - batch).cwiseAbs().maxCoeff();
        detail = format("covariance recursion over 1000 samples: max entry err %.2e (<= 1e-12)", err);
        return err <= 1e-12;
    });

    run(4, [](std::string &detail) {
        Rng rng(505);
        const int d = 16, n = 10000;
        const CMat sigma = random_psd(rng, d);
        const CMat root = linalg::sqrt_psd(sigma);
        std::vector<CVec> samples;
        for (int i = 0; i < n; ++i)
            samples.push_back(root * complex_normal_vector(rng, d));
        bool pass = true;
        detail = "whitening, dim 16, 1e4 samples, ||cov - I||_F (<= 1.6):";
        for (WhiteningKind k : {WhiteningKind::Zca, WhiteningKind::Cholesky, WhiteningKind::Pca})
        {
            const CMat t = whitening(sigma, k, 0.0);
            CMat c = CMat::Zero(d, d);
            for (const CVec &x : samples)
            {
                const CVec w = t * x;
                c += w * w.adjoint();
            }
            c /= n;
            const double dev = (c - CMat::Identity(d, d)).norm();
            detail += format(" %s %.3f", to_string(k), dev);
            pass = pass && dev <= 0.1 * d;
        }
        return pass;
    });

    run(5, [](std::string &detail) {
        ExperimentConfig c = base_config(16);
        c.scenario.l_dt = c.scenario.l_real;
        c.modes = {Mode::Perfect};
        c.n_mc = 0;
        const ExperimentResult r = run_experiment(c);
        track(r);
        const ModeSummary &s = r.summary.at(0);
        detail = format("perfect design, N=16, exact twin, 100 draws: feasible %d, failed %d, feasible-instance "
                        "outage %.3f (<= 0.02), mean sum-SE %.3f (2*gamma = 2)",
                        s.feasible, s.failed, s.outage_feasible, s.mean_sum_se);
        return s.feasible > 0 && s.outage_feasible <= 0.02;
    });

    run(6, [&shared_run](std::string &detail) {
        ExperimentConfig c = base_config(16);
        c.scenario.l_dt = 2;
        c.scenario.l_real = 10;
        c.n_stats = 10000;
        c.n_mc = 2000;
        shared_run = run_experiment(c);
        track(shared_run);
        const ModeSummary *robust = nullptr, *perfect = nullptr;
        for (const ModeSummary &s : shared_run.summary)
        {
            if (s.mode == Mode::Robust)
                robust = &s;
            if (s.mode == Mode::Perfect)
                perfect = &s;
        }
        const double mc = std::max(robust->mc_outage1, robust->mc_outage2);
        detail = format("robust design, l_dt=2, l_real=10, true Sigma from 1e4 draws, rho=0.05: outage on real "
                        "channels %.3f, sampled-error outage %.4f (both <= 0.10); failed %d, infeasible %d; perfect "
                        "design outage %.3f",
                        robust->outage, mc, robust->failed, robust->draws - robust->failed - robust->feasible,
                        perfect->outage);
        return robust->failed < robust->draws && robust->outage <= 0.10 && mc <= 0.10;
    });

    run(7, [&shared_run](std::string &detail) {
        const ModeSummary *robust = nullptr, *sw = nullptr;
        for (const ModeSummary &s : shared_run.summary)
        {
            if (s.mode == Mode::Robust)
                robust = &s;
            if (s.mode == Mode::Sweep)
                sw = &s;
        }
        if (!robust || !sw)
        {
            detail = "criterion 6 run missing";
            return false;
        }
        detail = format("beam sweeping at the robust powers: outage %.3f (>= 0.50) vs robust %.3f (ratio >= 5); "
                        "sweep failures %d",
                        sw->outage, robust->outage, sw->failed);
        return sw->outage >= 0.50 && sw->outage >= 5.0 * robust->outage;
    });

    run(8, [](std::string &detail) {
        const int n = 16, blocks = 200, eval = 20, mc = 2000;
        const Site site = make_site(808, n);
        std::vector<CoherenceBlock> stream;
        for (int b = 0; b < blocks; ++b)
        {
            const ScenarioRealization r = site.block(0, static_cast<std::uint64_t>(b));
            stream.push_back({r.dt, r.real});
        }
        const DesignTargets tg{1.0, 1.0, site.config.noise_power, site.config.noise_power};
        const RobustOptions ropt;
        const Algorithm1Result learned = algorithm1_run(stream, tg, AoOptions{}, ropt);
        for (const BlockOutcome &b : learned.blocks)
            if (!b.failed)
                track(b.solution);
        const ErrorStatistics truth = site_statistics(site, 10000);
        int learned_blocks = 0;
        for (const BlockOutcome &b : learned.blocks)
            learned_blocks += b.learned;

        double mc_learned = 0.0, mc_true = 0.0;
        int real_learned = 0, real_true = 0;
        for (int i = 0; i < eval; ++i)
        {
            const ScenarioRealization r = site.block(2, static_cast<std::uint64_t>(i));
            AoOptions ao;
            ao.seed = derive_seed(808, static_cast<std::uint64_t>(i));
            const DesignSolution a = robust_optimize(r.dt, tg, learned.final_stats, ao, ropt);
            const DesignSolution b = robust_optimize(r.dt, tg, truth, ao, ropt);
            track(a);
            track(b);
            const ChannelSampler sampler = gaussian_error_sampler(r.dt, truth.sigma, derive_seed(909, i));
            const OutageEstimate oa = monte_carlo_outage(a, sampler, tg, mc);
            const OutageEstimate ob = monte_carlo_outage(b, sampler, tg, mc);
            mc_learned += std::max(oa.outage1, oa.outage2) / eval;
            mc_true += std::max(ob.outage1, ob.outage2) / eval;
            const SePair sa = effective_se(r.real, a, tg), sb = effective_se(r.real, b, tg);
            real_learned += sa.se1 < tg.gamma1 - 1e-9 || sa.se2 < tg.gamma2 - 1e-9;
            real_true += sb.se1 < tg.gamma1 - 1e-9 || sb.se2 < tg.gamma2 - 1e-9;
        }
        const double gap = std::abs(mc_learned - mc_true);
        detail = format("online learning, N=16, 200 blocks (covariance learned on %d): sampled-error outage learned %.4f "
                        "vs true %.4f, gap %.4f (<= 0.03); real-channel outage %d/%d vs %d/%d",
                        learned_blocks, mc_learned, mc_true, gap, real_learned, eval, real_true, eval);
        return gap <= 0.03;
    });

    run(9, [](std::string &detail) {
        double worst = 0.0;
        int ok = 0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed)
        {
            const Site site = make_site(900 + seed, 16);
            const ChannelSet ch = site.block(0, 0).dt;
            const DesignTargets tg{1.0, 1.0, site.config.noise_power, site.config.noise_power};
            AoOptions ao;
            ao.seed = seed;
            const DesignSolution perfect = alternating_optimize(ch, tg, ao);
            const DesignSolution robust =
                robust_optimize(ch, tg, ErrorStatistics::with_prior(16, 1e-12), ao, RobustOptions{});
            track(perfect);
            track(robust);
            if (perfect.feasible && robust.feasible)
            {
                ++ok;
                worst = std::max(worst, std::abs(robust.power - perfect.power) / perfect.power);
            }
        }
        detail = format("Sigma = 1e-12 I, N=16, 10 instances: %d/10 feasible pairs, max relative power gap %.2e "
                        "(<= 0.01)",
                        ok, worst);
        return ok == 10 && worst <= 0.01;
    });

    run(10, [&cli](std::string &detail) {
        namespace fs = std::filesystem;
        const fs::path root = fs::temp_directory_path() / "dtris_acceptance";
        fs::remove_all(root);
        // Both runs write to the same directory: the manifest echoes it.
        const fs::path out = root / "out";
        const char *files[] = {"draws.csv", "cdf.csv", "summary.csv", "manifest.json"};
        std::vector<std::string> first, second;
        std::string how;
        for (std::vector<std::string> *snap : {&first, &second})
        {
            if (!cli.empty())
            {
                const std::string cmd = "\"" + cli + "\" --mode all --gamma 1 --draws 1 --seed 7 --mc 200 --stats 500 "
                                        "--set n_tx=8 --set n_ris=8 --out \"" +
                                        out.string() + "\" > /dev/null";
                if (std::system(cmd.c_str()) != 0)
                    throw std::runtime_error("command-line run failed");
                how = "command line";
            }
            else
            {
                ExperimentConfig c = base_config(8);
                c.n_draws = 1;
                c.n_mc = 200;
                c.n_stats = 500;
                c.seed = 7;
                emit_outputs(run_experiment(c), out.string());
                how = "in-process";
            }
            for (const char *name : files)
                snap->push_back(slurp(out / name));
            fs::remove_all(out);
        }
        bool same = true;
        for (std::size_t k = 0; k < first.size(); ++k)
            same = same && !first[k].empty() && first[k] == second[k];
        fs::remove_all(root);
        detail = format("max | |theta_m| - 1 | %.2e (<= 1e-12) over %d solutions; accepted power monotone: %s; "
                        "%s runs byte-identical: %s",
                        g_modulus_error, g_solutions, g_monotone ? "yes" : "no", how.c_str(), same ? "yes" : "no");
        return g_modulus_error <= 1e-12 && g_monotone && same && g_solutions > 0;
    });

    std::printf("%s: %d criteria failed\n", g_failures ? "FAIL" : "PASS", g_failures);
    return g_failures ? 1 : 0;
}
