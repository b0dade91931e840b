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

#include "dtris/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dtris/baseline.hpp"
#include "dtris/matrix_io.hpp"
#include "dtris/random.hpp"
#include "dtris/version.hpp"

namespace dtris
{

namespace
{

// Shortest decimal that reads back to the same double.
std::string fmt(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::string trim(const std::string &s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &s, char sep = ',')
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, sep))
        out.push_back(trim(item));
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

double to_double(const std::string &s, const std::string &key)
{
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw ValidationError("config: '" + key + "' expects a number, got '" + s + "'");
    return v;
}

template <class T> T to_integer(const std::string &s, const std::string &key)
{
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ValidationError("config: '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string &s, const std::string &key)
{
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0")
        return false;
    throw ValidationError("config: '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<double> to_doubles(const std::string &s, const std::string &key, std::size_t expect = 0)
{
    std::vector<double> out;
    for (const std::string &p : split(s))
        out.push_back(to_double(p, key));
    if (out.empty() || (expect && out.size() != expect))
        throw ValidationError("config: '" + key + "' has the wrong number of components");
    return out;
}

std::string join(const std::vector<double> &v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + fmt(v[i]);
    return s;
}

Eigen::Vector3d to_point(const std::string &s, const std::string &key)
{
    const auto v = to_doubles(s, key, 3);
    return {v[0], v[1], v[2]};
}

std::string point_text(const Eigen::Vector3d &p) { return join({p.x(), p.y(), p.z()}); }

Grid to_grid(const std::string &s, const std::string &key)
{
    const auto v = to_doubles(s, key, 6);
    return Grid{{v[0], v[1], v[2]}, v[3], v[4], v[5]};
}

std::string grid_text(const Grid &g)
{
    return join({g.origin.x(), g.origin.y(), g.origin.z(), g.extent_x, g.extent_y, g.spacing});
}

struct Key
{
    const char *name;
    std::function<void(ExperimentConfig &, const std::string &)> set;
    std::function<std::string(const ExperimentConfig &)> get;
};

const std::vector<Key> &keys()
{
    using C = ExperimentConfig;
    using S = const std::string &;
    static const std::vector<Key> k = {
        {"n_tx", [](C &c, S v) { c.scenario.n_tx = to_integer<int>(v, "n_tx"); },
         [](const C &c) { return std::to_string(c.scenario.n_tx); }},
        {"n_rx", [](C &c, S v) { c.scenario.n_rx = to_integer<int>(v, "n_rx"); },
         [](const C &c) { return std::to_string(c.scenario.n_rx); }},
        {"n_ris", [](C &c, S v) { c.scenario.n_ris = to_integer<int>(v, "n_ris"); },
         [](const C &c) { return std::to_string(c.scenario.n_ris); }},
        {"l_real", [](C &c, S v) { c.scenario.l_real = to_integer<int>(v, "l_real"); },
         [](const C &c) { return std::to_string(c.scenario.l_real); }},
        {"l_dt", [](C &c, S v) { c.scenario.l_dt = to_integer<int>(v, "l_dt"); },
         [](const C &c) { return std::to_string(c.scenario.l_dt); }},
        {"noise_power", [](C &c, S v) { c.scenario.noise_power = to_double(v, "noise_power"); },
         [](const C &c) { return fmt(c.scenario.noise_power); }},
        {"element_spacing", [](C &c, S v) { c.scenario.element_spacing = to_double(v, "element_spacing"); },
         [](const C &c) { return fmt(c.scenario.element_spacing); }},
        {"wavelength", [](C &c, S v) { c.scenario.wavelength = to_double(v, "wavelength"); },
         [](const C &c) { return fmt(c.scenario.wavelength); }},
        {"truncate_ris_links", [](C &c, S v) { c.scenario.truncate_ris_links = to_bool(v, "truncate_ris_links"); },
         [](const C &c) { return std::string(c.scenario.truncate_ris_links ? "true" : "false"); }},
        {"bs_position", [](C &c, S v) { c.scenario.bs_position = to_point(v, "bs_position"); },
         [](const C &c) { return point_text(c.scenario.bs_position); }},
        {"ris_position", [](C &c, S v) { c.scenario.ris_position = to_point(v, "ris_position"); },
         [](const C &c) { return point_text(c.scenario.ris_position); }},
        {"bs_grid", [](C &c, S v) { c.scenario.bs_grid = to_grid(v, "bs_grid"); },
         [](const C &c) { return grid_text(c.scenario.bs_grid); }},
        {"ris_grid", [](C &c, S v) { c.scenario.ris_grid = to_grid(v, "ris_grid"); },
         [](const C &c) { return grid_text(c.scenario.ris_grid); }},
        {"gammas", [](C &c, S v) { c.gammas = to_doubles(v, "gammas"); }, [](const C &c) { return join(c.gammas); }},
        {"modes",
         [](C &c, S v) {
             c.modes.clear();
             for (const std::string &m : split(v))
             {
                 if (m == "all")
                     c.modes = {Mode::Perfect, Mode::Robust, Mode::Sweep};
                 else if (!c.has(parse_mode(m)))
                     c.modes.push_back(parse_mode(m));
             }
             std::sort(c.modes.begin(), c.modes.end());
         },
         [](const C &c) {
             std::string s;
             for (std::size_t i = 0; i < c.modes.size(); ++i)
                 s += std::string(i ? "," : "") + to_string(c.modes[i]);
             return s;
         }},
        {"n_draws", [](C &c, S v) { c.n_draws = to_integer<int>(v, "n_draws"); },
         [](const C &c) { return std::to_string(c.n_draws); }},
        {"n_blocks", [](C &c, S v) { c.n_blocks = to_integer<int>(v, "n_blocks"); },
         [](const C &c) { return std::to_string(c.n_blocks); }},
        {"n_mc", [](C &c, S v) { c.n_mc = to_integer<int>(v, "n_mc"); }, [](const C &c) { return std::to_string(c.n_mc); }},
        {"n_stats", [](C &c, S v) { c.n_stats = to_integer<int>(v, "n_stats"); },
         [](const C &c) { return std::to_string(c.n_stats); }},
        {"rho", [](C &c, S v) { c.rho = to_double(v, "rho"); }, [](const C &c) { return fmt(c.rho); }},
        {"whitening", [](C &c, S v) { c.whitening = parse_whitening(v); },
         [](const C &c) { return std::string(to_string(c.whitening)); }},
        {"conv_window", [](C &c, S v) { c.conv_window = to_integer<int>(v, "conv_window"); },
         [](const C &c) { return std::to_string(c.conv_window); }},
        {"seed", [](C &c, S v) { c.seed = to_integer<std::uint64_t>(v, "seed"); },
         [](const C &c) { return std::to_string(c.seed); }},
        {"output_dir", [](C &c, S v) { c.output_dir = v; }, [](const C &c) { return c.output_dir; }},
        {"import_channels", [](C &c, S v) { c.import_channels = v; }, [](const C &c) { return c.import_channels; }},
        {"max_iters", [](C &c, S v) { c.max_iters = to_integer<int>(v, "max_iters"); },
         [](const C &c) { return std::to_string(c.max_iters); }},
        {"rel_tol", [](C &c, S v) { c.rel_tol = to_double(v, "rel_tol"); }, [](const C &c) { return fmt(c.rel_tol); }},
        {"n_cand", [](C &c, S v) { c.n_cand = to_integer<int>(v, "n_cand"); },
         [](const C &c) { return std::to_string(c.n_cand); }},
        {"threads", [](C &c, S v) { c.threads = to_integer<unsigned>(v, "threads"); },
         [](const C &c) { return std::to_string(c.threads); }},
    };
    return k;
}

const char *kCsvHeader =
    "draw,gamma,mode,feasible,failed,se1,se2,sum_se,power,outage1,outage2,outage,mc_outage1,mc_outage2";

// Reference covariance of the BS -> user-1 twin error for fixed users.
ErrorStatistics offline_statistics(const ScenarioConfig &base, const Eigen::Vector3d &u1, const Eigen::Vector3d &u2,
                                   std::uint64_t seed, int n)
{
    ErrorStatistics st = ErrorStatistics::with_prior(base.n_tx);
    ScenarioConfig sc = base;
    for (int i = 0; i < n; ++i)
    {
        sc.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        const LinkPaths lp = draw_paths(sc, u1, u2);
        const std::span<const Path> head(lp.h1.data(), std::min<std::size_t>(lp.h1.size(), sc.l_dt));
        const CMat real = synth_channel(lp.h1, sc.n_rx, sc.n_tx, sc.element_spacing);
        const CMat dt = synth_channel(head, sc.n_rx, sc.n_tx, sc.element_spacing);
        st = update_covariance(st, channel_error(real, dt));
    }
    return st;
}

struct Shared
{
    const ExperimentConfig &cfg;
    const std::vector<io::ChannelDraw> *imported = nullptr;
    std::optional<ErrorStatistics> pooled;
    std::optional<Codebook> bs_cb, ris_cb;
};

std::vector<DrawRecord> run_draw(const Shared &sh, int d)
{
    const ExperimentConfig &cfg = sh.cfg;
    const std::uint64_t ds = derive_seed(cfg.seed, static_cast<std::uint64_t>(d));
    ChannelSet dt, real;
    Eigen::Vector3d u1, u2;
    if (sh.imported)
    {
        dt = (*sh.imported)[static_cast<std::size_t>(d)].dt;
        real = (*sh.imported)[static_cast<std::size_t>(d)].real;
    }
    else
    {
        Rng rng(derive_seed(ds, 0));
        u1 = sample_grid_node(cfg.scenario.bs_grid, rng);
        u2 = sample_grid_node(cfg.scenario.ris_grid, rng);
        ScenarioConfig sc = cfg.scenario;
        sc.seed = derive_seed(ds, 1);
        const ScenarioRealization r = generate_scenario(sc, u1, u2);
        dt = r.dt;
        real = r.real;
    }

    RobustOptions ropt;
    ropt.rho = cfg.rho;
    ropt.whitening = cfg.whitening;
    ropt.conv_window = cfg.conv_window;

    // Error statistics exist for single-antenna users only.
    const bool need_sigma = cfg.has(Mode::Robust) || cfg.has(Mode::Sweep) || cfg.n_mc > 0;
    std::optional<ErrorStatistics> reference, design;
    std::string sigma_error;
    if (need_sigma && dt.n_rx() == 1)
    {
        try
        {
            reference = sh.imported ? *sh.pooled : offline_statistics(cfg.scenario, u1, u2, derive_seed(ds, 2), cfg.n_stats);
            design = reference;
            if (cfg.has(Mode::Robust) && cfg.n_blocks > 0 && !sh.imported)
            {
                std::vector<CoherenceBlock> stream;
                ScenarioConfig sc = cfg.scenario;
                for (int b = 0; b < cfg.n_blocks; ++b)
                {
                    sc.seed = derive_seed(derive_seed(ds, 3), static_cast<std::uint64_t>(b));
                    const ScenarioRealization r = generate_scenario(sc, u1, u2);
                    stream.push_back({r.dt, r.real});
                }
                AoOptions ao{cfg.max_iters, cfg.rel_tol, cfg.n_cand, derive_seed(ds, 4), {}};
                DesignTargets tg{cfg.gammas.front(), cfg.gammas.front(), cfg.scenario.noise_power,
                                 cfg.scenario.noise_power};
                design = algorithm1_run(stream, tg, ao, ropt).final_stats;
            }
        }
        catch (const std::exception &e)
        {
            sigma_error = e.what();
            reference.reset();
            design.reset();
        }
    }
    else if (need_sigma)
        sigma_error = "error statistics need one receive antenna per user";

    std::vector<DrawRecord> out;
    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi)
    {
        const double gamma = cfg.gammas[gi];
        const DesignTargets tg{gamma, gamma, cfg.scenario.noise_power, cfg.scenario.noise_power};
        const AoOptions ao{cfg.max_iters, cfg.rel_tol, cfg.n_cand, derive_seed(ds, 100 + gi), {}};

        auto record = [&](Mode m, const DesignSolution &s, bool sampled) {
            DrawRecord r;
            r.draw = d;
            r.gamma = gamma;
            r.mode = m;
            r.feasible = s.feasible;
            r.power = s.power;
            const SePair se = effective_se(real, s, tg);
            r.se1 = se.se1;
            r.se2 = se.se2;
            r.outage1 = se.se1 < gamma - 1e-9;
            r.outage2 = se.se2 < gamma - 1e-9;
            for (Eigen::Index m = 0; m < s.theta.size(); ++m)
                r.modulus_error = std::max(r.modulus_error, std::abs(std::abs(s.theta(m)) - 1.0));
            for (std::size_t i = 1; i < s.power_trace.size(); ++i)
                r.power_monotone = r.power_monotone && !(s.power_trace[i] > s.power_trace[i - 1]);
            if (sampled && cfg.n_mc > 0 && reference)
            {
                const OutageEstimate o = monte_carlo_outage(
                    s, gaussian_error_sampler(dt, reference->sigma, derive_seed(ds, 200 + gi)), tg,
                    static_cast<std::size_t>(cfg.n_mc), 1);
                r.mc_outage1 = o.outage1;
                r.mc_outage2 = o.outage2;
            }
            return r;
        };
        auto failure = [&](Mode m, const std::string &what) {
            DrawRecord r;
            r.draw = d;
            r.gamma = gamma;
            r.mode = m;
            r.failed = true;
            r.error = what;
            return r;
        };

        std::optional<DesignSolution> perfect, robust;
        std::string perfect_error, robust_error;
        if (cfg.has(Mode::Perfect) || (cfg.has(Mode::Sweep) && !cfg.has(Mode::Robust)))
        {
            try
            {
                perfect = alternating_optimize(dt, tg, ao);
            }
            catch (const std::exception &e)
            {
                perfect_error = e.what();
            }
        }
        if (cfg.has(Mode::Robust))
        {
            try
            {
                if (!design)
                    throw NumericalError(sigma_error);
                robust = robust_optimize(dt, tg, *design, ao, ropt);
            }
            catch (const std::exception &e)
            {
                robust_error = e.what();
            }
        }
        if (cfg.has(Mode::Perfect))
            out.push_back(perfect ? record(Mode::Perfect, *perfect, true) : failure(Mode::Perfect, perfect_error));
        if (cfg.has(Mode::Robust))
            out.push_back(robust ? record(Mode::Robust, *robust, true) : failure(Mode::Robust, robust_error));
        if (cfg.has(Mode::Sweep))
        {
            // Power budget of the reference design on the same instance.
            const std::optional<DesignSolution> &ref = cfg.has(Mode::Robust) ? robust : perfect;
            if (!ref)
                out.push_back(failure(Mode::Sweep, "reference design failed"));
            else if (!ref->feasible)
                out.push_back(failure(Mode::Sweep, "reference design infeasible; no power budget"));
            else
            {
                try
                {
                    const SweepResult sr =
                        sweep(real, *sh.bs_cb, *sh.ris_cb, ref->f1.squaredNorm(), ref->f2.squaredNorm(), tg);
                    out.push_back(record(Mode::Sweep, sr.solution, false));
                }
                catch (const std::exception &e)
                {
                    out.push_back(failure(Mode::Sweep, e.what()));
                }
            }
        }
    }
    return out;
}

void write_file(const std::filesystem::path &p, const std::string &content)
{
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << content;
    f.close();
    if (!f)
        throw IoError("cannot write " + p.string());
}

} // namespace

const char *to_string(Mode m)
{
    switch (m)
    {
    case Mode::Perfect:
        return "perfect";
    case Mode::Robust:
        return "robust";
    case Mode::Sweep:
        return "sweep";
    }
    return "perfect";
}

Mode parse_mode(const std::string &s)
{
    if (s == "perfect")
        return Mode::Perfect;
    if (s == "robust")
        return Mode::Robust;
    if (s == "sweep")
        return Mode::Sweep;
    throw ValidationError("unknown mode '" + s + "'");
}

bool ExperimentConfig::has(Mode m) const { return std::find(modes.begin(), modes.end(), m) != modes.end(); }

void ExperimentConfig::validate() const
{
    scenario.validate();
    if (gammas.empty())
        throw ValidationError("config: gammas must not be empty");
    for (double g : gammas)
        if (!(g >= 0.0) || !std::isfinite(g))
            throw ValidationError("config: gammas must be finite and >= 0");
    if (modes.empty())
        throw ValidationError("config: modes must not be empty");
    if (n_draws < 1)
        throw ValidationError("config: n_draws must be >= 1");
    if (n_blocks < 0 || n_mc < 0 || n_stats < 0)
        throw ValidationError("config: n_blocks, n_mc and n_stats must be >= 0");
    if (output_dir.empty())
        throw ValidationError("config: output_dir must not be empty");
    RobustOptions r;
    r.rho = rho;
    r.conv_window = conv_window;
    r.validate();
    AoOptions{max_iters, rel_tol, n_cand, seed, {}}.validate();
}

void set_config_value(ExperimentConfig &cfg, const std::string &key, const std::string &value)
{
    for (const Key &k : keys())
        if (key == k.name)
        {
            k.set(cfg, value);
            return;
        }
    throw ValidationError("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config(std::istream &is)
{
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    std::map<std::string, int> seen;
    while (std::getline(is, line))
    {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (seen[key]++)
            throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        set_config_value(cfg, key, trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string &path)
{
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open config file " + path);
    return parse_config(f);
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig &cfg)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const Key &k : keys())
        out.emplace_back(k.name, k.get(cfg));
    return out;
}

void write_config(std::ostream &os, const ExperimentConfig &cfg)
{
    for (const auto &[k, v] : config_entries(cfg))
        os << k << " = " << v << '\n';
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> values)
{
    std::sort(values.begin(), values.end());
    std::vector<CdfPoint> out;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        if (i + 1 == values.size() || values[i + 1] != values[i])
            out.push_back({values[i], static_cast<double>(i + 1) / n});
    return out;
}

std::vector<ModeSummary> summarize(const std::vector<DrawRecord> &records)
{
    std::vector<ModeSummary> out;
    struct Acc
    {
        int ok = 0, out = 0, out_f = 0, mc = 0;
        double power = 0.0, se = 0.0, mc1 = 0.0, mc2 = 0.0;
    };
    std::vector<Acc> acc;
    for (const DrawRecord &r : records)
    {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const ModeSummary &s) { return s.mode == r.mode && s.gamma == r.gamma; });
        if (it == out.end())
        {
            out.push_back({});
            out.back().mode = r.mode;
            out.back().gamma = r.gamma;
            acc.emplace_back();
            it = out.end() - 1;
        }
        ModeSummary &s = *it;
        Acc &a = acc[static_cast<std::size_t>(it - out.begin())];
        ++s.draws;
        if (r.failed)
        {
            ++s.failed;
            continue;
        }
        ++a.ok;
        a.out += r.outage();
        a.se += r.sum_se();
        if (r.feasible)
        {
            ++s.feasible;
            a.out_f += r.outage();
            a.power += r.power;
        }
        if (!std::isnan(r.mc_outage1))
        {
            ++a.mc;
            a.mc1 += r.mc_outage1;
            a.mc2 += r.mc_outage2;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        ModeSummary &s = out[i];
        const Acc &a = acc[i];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.outage = a.ok ? static_cast<double>(a.out) / a.ok : nan;
        s.mean_sum_se = a.ok ? a.se / a.ok : nan;
        s.outage_feasible = s.feasible ? static_cast<double>(a.out_f) / s.feasible : nan;
        s.mean_power = s.feasible ? a.power / s.feasible : nan;
        if (a.mc)
        {
            s.mc_outage1 = a.mc1 / a.mc;
            s.mc_outage2 = a.mc2 / a.mc;
        }
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig &cfg)
{
    cfg.validate();
    Shared sh{cfg, nullptr, {}, {}, {}};
    std::vector<io::ChannelDraw> imported;
    int n_draws = cfg.n_draws;
    if (!cfg.import_channels.empty())
    {
        std::ifstream f(cfg.import_channels);
        if (!f)
            throw IoError("cannot open channel file " + cfg.import_channels);
        imported = io::read_channel_draws(f);
        if (imported.empty())
            throw ValidationError("channel file contains no draws");
        n_draws = std::min<int>(n_draws, static_cast<int>(imported.size()));
        sh.imported = &imported;
        if (imported.front().dt.n_rx() == 1)
        {
            // Without geometry the reference covariance pools every imported draw.
            ErrorStatistics st = ErrorStatistics::with_prior(imported.front().dt.n_tx());
            for (const auto &dr : imported)
                st = update_covariance(st, channel_error(dr.real.h1, dr.dt.h1));
            sh.pooled = st;
        }
    }
    if (cfg.has(Mode::Sweep))
    {
        sh.bs_cb = build_bs_codebook(cfg.scenario);
        sh.ris_cb = build_ris_codebook(cfg.scenario);
    }

    std::vector<std::vector<DrawRecord>> per_draw(static_cast<std::size_t>(n_draws));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int d = next++; d < n_draws; d = next++)
            per_draw[static_cast<std::size_t>(d)] = run_draw(sh, d);
    };
    unsigned n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(n_draws));
    if (n_threads <= 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (auto &t : pool)
            t.join();
    }

    ExperimentResult res;
    res.config = cfg;
    for (auto &v : per_draw)
        for (auto &r : v)
            res.records.push_back(std::move(r));
    const auto failed = std::count_if(res.records.begin(), res.records.end(), [](const DrawRecord &r) { return r.failed; });
    if (2 * failed > static_cast<long>(res.records.size()))
    {
        std::string msg = "experiment aborted: " + std::to_string(failed) + " of " +
                          std::to_string(res.records.size()) + " design runs failed";
        for (const DrawRecord &r : res.records)
            if (r.failed)
            {
                msg += "; first failure (draw " + std::to_string(r.draw) + ", " + to_string(r.mode) + "): " + r.error;
                break;
            }
        throw ExperimentAborted(msg);
    }
    res.summary = summarize(res.records);
    return res;
}

void emit_outputs(const ExperimentResult &result, const std::string &dir)
{
    namespace fs = std::filesystem;
    if (result.records.empty())
        throw ValidationError("emit_outputs: no records");

    std::ostringstream draws;
    draws << kCsvHeader << '\n';
    for (const DrawRecord &r : result.records)
    {
        draws << r.draw << ',' << fmt(r.gamma) << ',' << to_string(r.mode) << ',' << int(r.feasible) << ','
              << int(r.failed) << ',' << fmt(r.se1) << ',' << fmt(r.se2) << ',' << fmt(r.sum_se()) << ','
              << fmt(r.power) << ',' << int(r.outage1) << ',' << int(r.outage2) << ',' << int(r.outage()) << ','
              << (std::isnan(r.mc_outage1) ? "" : fmt(r.mc_outage1)) << ','
              << (std::isnan(r.mc_outage2) ? "" : fmt(r.mc_outage2)) << '\n';
    }

    std::ostringstream cdf;
    cdf << "mode,gamma,sum_se,fraction\n";
    for (const ModeSummary &s : result.summary)
    {
        std::vector<double> v;
        for (const DrawRecord &r : result.records)
            if (r.mode == s.mode && r.gamma == s.gamma && !r.failed)
                v.push_back(r.sum_se());
        for (const CdfPoint &p : empirical_cdf(v))
            cdf << to_string(s.mode) << ',' << fmt(s.gamma) << ',' << fmt(p.value) << ',' << fmt(p.fraction) << '\n';
    }

    auto opt = [](double v) { return std::isnan(v) ? std::string() : fmt(v); };
    std::ostringstream summary;
    summary << "mode,gamma,draws,feasible,failed,outage,outage_feasible,mean_power,mean_sum_se,mc_outage1,mc_outage2\n";
    for (const ModeSummary &s : result.summary)
        summary << to_string(s.mode) << ',' << fmt(s.gamma) << ',' << s.draws << ',' << s.feasible << ',' << s.failed
                << ',' << opt(s.outage) << ',' << opt(s.outage_feasible) << ',' << opt(s.mean_power) << ','
                << opt(s.mean_sum_se) << ',' << opt(s.mc_outage1) << ',' << opt(s.mc_outage2) << '\n';

    nlohmann::ordered_json manifest;
    manifest["tool"] = "dtris";
    manifest["version"] = kVersion;
    manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);
    manifest["seed"] = result.config.seed;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto &[k, v] : config_entries(result.config))
        config[k] = v;
    manifest["config"] = config;
    manifest["records"] = result.records.size();
    nlohmann::ordered_json failures = nlohmann::ordered_json::array();
    for (const DrawRecord &r : result.records)
        if (r.failed)
            failures.push_back({{"draw", r.draw}, {"gamma", r.gamma}, {"mode", to_string(r.mode)}, {"error", r.error}});
    manifest["failures"] = failures;
    manifest["files"] = {"draws.csv", "cdf.csv", "summary.csv"};
    manifest["draws_header"] = kCsvHeader;

    const std::vector<std::pair<std::string, std::string>> files = {{"draws.csv", draws.str()},
                                                                    {"cdf.csv", cdf.str()},
                                                                    {"summary.csv", summary.str()},
                                                                    {"manifest.json", manifest.dump(2) + "\n"}};
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root))
        throw IoError("cannot create output directory " + dir);
    std::vector<fs::path> temps;
    try
    {
        for (const auto &[name, content] : files)
        {
            temps.push_back(root / ("." + name + ".tmp"));
            write_file(temps.back(), content);
        }
        for (std::size_t i = 0; i < files.size(); ++i)
        {
            fs::rename(temps[i], root / files[i].first, ec);
            if (ec)
                throw IoError("cannot move " + temps[i].string() + " into place");
        }
    }
    catch (...)
    {
        for (const fs::path &t : temps)
            fs::remove(t, ec);
        throw;
    }
}

std::vector<DrawRecord> read_draws_csv(std::istream &is)
{
    std::string line;
    if (!std::getline(is, line) || trim(line) != kCsvHeader)
        throw ValidationError("draws csv: unexpected header");
    std::vector<DrawRecord> out;
    while (std::getline(is, line))
    {
        if (trim(line).empty())
            continue;
        const auto f = split(line);
        if (f.size() != 14)
            throw ValidationError("draws csv: expected 14 fields");
        DrawRecord r;
        r.draw = to_integer<int>(f[0], "draw");
        r.gamma = to_double(f[1], "gamma");
        r.mode = parse_mode(f[2]);
        r.feasible = to_bool(f[3], "feasible");
        r.failed = to_bool(f[4], "failed");
        r.se1 = to_double(f[5], "se1");
        r.se2 = to_double(f[6], "se2");
        r.power = to_double(f[8], "power");
        r.outage1 = to_bool(f[9], "outage1");
        r.outage2 = to_bool(f[10], "outage2");
        if (!f[12].empty())
            r.mc_outage1 = to_double(f[12], "mc_outage1");
        if (!f[13].empty())
            r.mc_outage2 = to_double(f[13], "mc_outage2");
        out.push_back(r);
    }
    return out;
}

} // namespace dtris
