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

#include "dtris/robust.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <thread>

#include <Eigen/Cholesky>

#include "dtris/matrix_io.hpp"
#include "dtris/random.hpp"

namespace dtris
{

namespace
{

double lemma_a(double rho) { return std::sqrt(2.0 * std::log(1.0 / rho)); }
double lemma_b(double rho) { return std::log(1.0 / rho); }

void check_rho(double rho)
{
    if (!(rho > 0.0 && rho < 1.0))
        throw ValidationError("robust: rho must lie in (0, 1)");
}

// Hermitian coefficient A with <A, X> = Re X_pq (p == q gives X_pp).
CMat re_entry(int n, int p, int q)
{
    CMat a = CMat::Zero(n, n);
    if (p == q)
        a(p, p) = 1.0;
    else
    {
        a(p, q) = 0.5;
        a(q, p) = 0.5;
    }
    return a;
}

// <A, X> = Im X_pq, p != q.
CMat im_entry(int n, int p, int q)
{
    CMat a = CMat::Zero(n, n);
    a(p, q) = cd(0.0, 0.5);
    a(q, p) = cd(0.0, -0.5);
    return a;
}

// Orthonormal basis of n x n Hermitian matrices under Re tr(A^H B).
std::vector<CMat> hermitian_basis(int n)
{
    std::vector<CMat> b;
    const double r = 1.0 / std::sqrt(2.0);
    for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q)
        {
            if (p == q)
            {
                b.push_back(re_entry(n, p, p));
                continue;
            }
            CMat s = CMat::Zero(n, n);
            s(p, q) = r;
            s(q, p) = r;
            b.push_back(s);
            CMat a = CMat::Zero(n, n);
            a(p, q) = cd(0.0, r);
            a(q, p) = cd(0.0, -r);
            b.push_back(a);
        }
    return b;
}

// U = cU * Ubar and u = cu * ubar as real linear functionals of the program
// variable, plus the functional tr U + u0.
struct BernsteinTerms
{
    int d = 0;
    std::vector<CMat> ubar_re, ubar_im; // index p * d + q, p <= q
    std::vector<CMat> lin_re, lin_im;
    CMat mean;
    double c_u_mat = 1.0;
    double c_u_vec = 1.0;
};

BernsteinFragment emit(conic::ConicProgram &prog, conic::MatVar var, const BernsteinTerms &f, double rho,
                       double gain, const conic::AffineExpr &rhs, bool full_lmi)
{
    check_rho(rho);
    if (!(gain > 0.0))
        throw ValidationError("bernstein_restrict: gain must be positive");
    const int d = f.d;
    const double s2 = std::sqrt(2.0);

    std::vector<CMat> coef;
    for (int p = 0; p < d; ++p)
        for (int q = p; q < d; ++q)
        {
            const auto k = static_cast<std::size_t>(p * d + q);
            if (p == q)
                coef.push_back(f.c_u_mat * f.ubar_re[k]);
            else
            {
                coef.push_back(s2 * f.c_u_mat * f.ubar_re[k]);
                coef.push_back(s2 * f.c_u_mat * f.ubar_im[k]);
            }
        }
    for (int p = 0; p < d; ++p)
    {
        coef.push_back(s2 * f.c_u_vec * f.lin_re[static_cast<std::size_t>(p)]);
        coef.push_back(s2 * f.c_u_vec * f.lin_im[static_cast<std::size_t>(p)]);
    }
    double biggest = 0.0;
    for (const CMat &c : coef)
        biggest = std::max(biggest, c.norm());
    const double lambda = biggest > 0.0 ? 1.0 / biggest : 1.0;

    BernsteinFragment out;
    out.x = prog.add_scalar_var("bernstein_x");
    out.x_scale = lambda;
    std::vector<conic::AffineExpr> entries;
    entries.reserve(coef.size());
    for (const CMat &c : coef)
    {
        conic::AffineExpr e;
        if (c.norm() > 0.0)
            e.add(var, lambda * c);
        entries.push_back(std::move(e));
    }
    prog.add_soc(std::move(entries), conic::term(out.x), "bernstein (ii)");

    conic::AffineExpr lhs;
    lhs.add(var, gain * f.mean).add(out.x, -gain * lemma_a(rho) / lambda);
    if (full_lmi)
    {
        // Z = yhat I + Ubar with y = c_u_mat * yhat.
        out.y = prog.add_scalar_var("bernstein_y");
        lhs.add(out.y, -gain * lemma_b(rho) * f.c_u_mat);
        const conic::MatVar z = prog.add_matrix_var("bernstein_Z", d);
        for (int p = 0; p < d; ++p)
            for (int q = p; q < d; ++q)
            {
                const auto k = static_cast<std::size_t>(p * d + q);
                conic::AffineExpr re;
                re.add(z, re_entry(d, p, q)).add(var, -f.ubar_re[k]);
                if (p == q)
                    re.add(out.y, -1.0);
                prog.add_linear(re, conic::Relation::Equal, 0.0, "bernstein (iii)");
                if (p != q)
                {
                    conic::AffineExpr im;
                    im.add(z, im_entry(d, p, q)).add(var, -f.ubar_im[k]);
                    prog.add_linear(im, conic::Relation::Equal, 0.0, "bernstein (iii)");
                }
            }
    }
    conic::AffineExpr neg = rhs;
    neg *= -1.0;
    lhs += neg;
    prog.add_linear(lhs, conic::Relation::GreaterEqual, 0.0, "bernstein (i)");
    return out;
}

} // namespace

ErrorStatistics ErrorStatistics::with_prior(int dim, double prior)
{
    if (dim < 1 || !(prior >= 0.0))
        throw ValidationError("error statistics: invalid prior");
    ErrorStatistics s;
    s.sigma = prior * CMat::Identity(dim, dim);
    s.n = 0;
    return s;
}

void ErrorStatistics::validate() const
{
    if (sigma.rows() < 1 || sigma.rows() != sigma.cols())
        throw ValidationError("error statistics: covariance must be square and non-empty");
    linalg::require_finite(sigma, "error statistics");
    if (!linalg::is_hermitian(sigma, 1e-10))
        throw ValidationError("error statistics: covariance is not Hermitian");
}

const char *to_string(WhiteningKind k)
{
    switch (k)
    {
    case WhiteningKind::Zca:
        return "zca";
    case WhiteningKind::Cholesky:
        return "cholesky";
    case WhiteningKind::Pca:
        return "pca";
    }
    return "zca";
}

WhiteningKind parse_whitening(const std::string &s)
{
    if (s == "zca")
        return WhiteningKind::Zca;
    if (s == "cholesky")
        return WhiteningKind::Cholesky;
    if (s == "pca")
        return WhiteningKind::Pca;
    throw ValidationError("unknown whitening kind '" + s + "'");
}

void RobustOptions::validate() const
{
    check_rho(rho);
    if (conv_window < 1)
        throw ValidationError("robust options: conv_window must be >= 1");
    if (!std::isfinite(reg))
        throw ValidationError("robust options: reg must be finite");
}

double RobustOptions::regularizer(const CMat &sigma) const
{
    if (reg >= 0.0)
        return reg;
    const double tr = sigma.trace().real();
    // A zero covariance (twin equals reality) still needs an invertible
    // whitening; the restriction is scale-free in T, so any floor works.
    return tr > 0.0 ? 1e-8 * tr / static_cast<double>(sigma.rows()) : 1e-20;
}

ErrorStatistics update_covariance(const ErrorStatistics &st, const CMat &delta_ups)
{
    st.validate();
    if (delta_ups.size() != st.sigma.rows())
        throw ValidationError("update_covariance: sample dimension does not match the statistics");
    const CVec v = linalg::vec(delta_ups.adjoint());
    ErrorStatistics out;
    out.n = st.n + 1;
    const double inv = 1.0 / static_cast<double>(out.n);
    out.sigma = (1.0 - inv) * st.sigma + inv * (v * v.adjoint());
    out.sigma = linalg::hermitian_part(out.sigma);
    return out;
}

CMat whitening(const CMat &sigma, WhiteningKind kind, double reg)
{
    if (!(reg >= 0.0))
        throw ValidationError("whitening: reg must be >= 0");
    if (sigma.rows() < 1 || sigma.rows() != sigma.cols())
        throw ValidationError("whitening: covariance must be square and non-empty");
    if (!linalg::is_hermitian(sigma, 1e-10))
        throw ValidationError("whitening: covariance is not Hermitian");
    const auto n = sigma.rows();
    const CMat s = linalg::hermitian_part(sigma) + reg * CMat::Identity(n, n);
    const linalg::HermitianEig eig = linalg::eigh(s);
    const double lmax = eig.values(n - 1);
    const double lmin = eig.values(0);
    if (lmin < -1e-8 * std::abs(lmax))
        throw NotPsdError("whitening: covariance is not PSD");
    if (!(lmax > 0.0) || !(lmin > 1e-12 * lmax))
        throw NumericalError("whitening: covariance is not invertible (rank deficient)");
    switch (kind)
    {
    case WhiteningKind::Zca:
        return linalg::inv_sqrt_psd(s, 0.0);
    case WhiteningKind::Cholesky:
    {
        Eigen::LLT<CMat> llt(s);
        if (llt.info() != Eigen::Success)
            throw NumericalError("whitening: Cholesky factorization failed");
        const CMat l = llt.matrixL();
        return l.triangularView<Eigen::Lower>().solve(CMat::Identity(n, n));
    }
    case WhiteningKind::Pca:
    {
        const RVec isq = eig.values.cwiseSqrt().cwiseInverse();
        return isq.cast<cd>().asDiagonal() * eig.vectors.adjoint();
    }
    }
    throw ValidationError("whitening: unknown kind");
}

double bernstein_margin(const BernsteinParams &p, double rho)
{
    check_rho(rho);
    const double lmin = linalg::eigh(p.U, 1e-10).values(0);
    const double lam = std::max(0.0, -lmin);
    return p.U.trace().real() + p.u0 - lemma_a(rho) * std::sqrt(p.U.squaredNorm() + 2.0 * p.u.squaredNorm()) -
           lemma_b(rho) * lam;
}

bool bernstein_slack_feasible(const BernsteinParams &p, double rho, double x, double y, double tol)
{
    check_rho(rho);
    const double scale = std::max({1.0, std::abs(p.u0), p.U.norm(), p.u.norm()});
    const double i = p.U.trace().real() - lemma_a(rho) * x + std::log(rho) * y + p.u0;
    const double ii = std::sqrt(p.U.squaredNorm() + 2.0 * p.u.squaredNorm()) - x;
    const auto n = p.U.rows();
    const double iii = linalg::eigh(y * CMat::Identity(n, n) + p.U, 1e-10).values(0);
    return i >= -tol * scale && ii <= tol * scale && iii >= -tol * scale && y >= -tol * scale;
}

BernsteinSlacks bernstein_slacks(const BernsteinParams &p, double rho)
{
    BernsteinSlacks s;
    s.x = std::sqrt(p.U.squaredNorm() + 2.0 * p.u.squaredNorm());
    s.y = std::max(0.0, -linalg::eigh(p.U, 1e-10).values(0));
    s.feasible = bernstein_margin(p, rho) >= 0.0;
    return s;
}

BernsteinFragment bernstein_restrict(conic::ConicProgram &prog, conic::MatVar f_var, const StackedChannel &ups_tilde,
                                     const LiftedPhase &e, const CMat &t, double rho, double gain,
                                     const conic::AffineExpr &rhs, bool full_lmi)
{
    const int nt = static_cast<int>(ups_tilde.n_tx());
    if (f_var.id < 0 || f_var.id >= static_cast<int>(prog.matrix_vars().size()) ||
        prog.matrix_vars()[static_cast<std::size_t>(f_var.id)].dim != nt)
        throw ValidationError("bernstein_restrict: beam variable must be N_t x N_t");
    if (t.rows() != t.cols())
        throw ValidationError("bernstein_restrict: whitening matrix must be square");
    Eigen::PartialPivLU<CMat> lu(t);
    if (!(lu.rcond() > 1e-14))
        throw NumericalError("bernstein_restrict: whitening matrix is singular");
    const CMat tinv = lu.inverse();

    const std::vector<CMat> basis = hermitian_basis(nt);
    std::vector<BernsteinParams> par;
    par.reserve(basis.size());
    for (const CMat &b : basis)
        par.push_back(bernstein_params_from_inverse(ups_tilde, e, BeamGram{b}, tinv));

    BernsteinTerms f;
    f.d = static_cast<int>(t.rows());
    const int d = f.d;
    f.ubar_re.assign(static_cast<std::size_t>(d * d), CMat());
    f.ubar_im.assign(static_cast<std::size_t>(d * d), CMat());
    for (int p = 0; p < d; ++p)
        for (int q = p; q < d; ++q)
        {
            CMat re = CMat::Zero(nt, nt), im = CMat::Zero(nt, nt);
            for (std::size_t k = 0; k < basis.size(); ++k)
            {
                re += par[k].U(p, q).real() * basis[k];
                im += par[k].U(p, q).imag() * basis[k];
            }
            f.ubar_re[static_cast<std::size_t>(p * d + q)] = re;
            f.ubar_im[static_cast<std::size_t>(p * d + q)] = im;
        }
    for (int p = 0; p < d; ++p)
    {
        CMat re = CMat::Zero(nt, nt), im = CMat::Zero(nt, nt);
        for (std::size_t k = 0; k < basis.size(); ++k)
        {
            re += par[k].u(p).real() * basis[k];
            im += par[k].u(p).imag() * basis[k];
        }
        f.lin_re.push_back(re);
        f.lin_im.push_back(im);
    }
    f.mean = CMat::Zero(nt, nt);
    for (std::size_t k = 0; k < basis.size(); ++k)
        f.mean += (par[k].U.trace().real() + par[k].u0) * basis[k];
    return emit(prog, f_var, f, rho, gain, rhs, full_lmi);
}

BernsteinFragment bernstein_restrict_direct(conic::ConicProgram &prog, conic::MatVar f_var,
                                            const StackedChannel &ups_tilde, const LiftedPhase &e, const CMat &t,
                                            double rho, double gain, const conic::AffineExpr &rhs, bool full_lmi)
{
    const int nt = static_cast<int>(ups_tilde.n_tx());
    if (t.rows() != nt || t.cols() != nt)
        throw ValidationError("bernstein_restrict_direct: whitening must have dimension N_t");
    if (e.dim() != ups_tilde.upsilon.rows())
        throw ValidationError("bernstein_restrict_direct: E and Upsilon are not conformable");
    Eigen::PartialPivLU<CMat> lu(t);
    if (!(lu.rcond() > 1e-14))
        throw NumericalError("bernstein_restrict_direct: whitening matrix is singular");
    const CMat a = lu.inverse();
    const cd i(0.0, 1.0);

    // U_pq = a_p^H F a_q and u_p = a_p^H F w over the columns a_p of T^{-1}.
    BernsteinTerms f;
    f.d = nt;
    f.c_u_mat = e.e(0, 0).real();
    f.ubar_re.assign(static_cast<std::size_t>(nt * nt), CMat());
    f.ubar_im.assign(static_cast<std::size_t>(nt * nt), CMat());
    for (int p = 0; p < nt; ++p)
        for (int q = p; q < nt; ++q)
        {
            const CMat w = a.col(p) * a.col(q).adjoint();
            f.ubar_re[static_cast<std::size_t>(p * nt + q)] = linalg::hermitian_part(w);
            f.ubar_im[static_cast<std::size_t>(p * nt + q)] =
                p == q ? CMat::Zero(nt, nt) : linalg::hermitian_part(i * w);
        }
    const CVec w = ups_tilde.upsilon.adjoint() * e.e.col(0);
    for (int p = 0; p < nt; ++p)
    {
        const CMat c = a.col(p) * w.adjoint();
        f.lin_re.push_back(linalg::hermitian_part(c));
        f.lin_im.push_back(linalg::hermitian_part(i * c));
    }
    f.mean = linalg::hermitian_part(f.c_u_mat * a * a.adjoint() +
                                    ups_tilde.upsilon.adjoint() * e.e * ups_tilde.upsilon);
    return emit(prog, f_var, f, rho, gain, rhs, full_lmi);
}

RobustModel make_robust_model(const ErrorStatistics &st, const RobustOptions &ropt)
{
    st.validate();
    ropt.validate();
    RobustModel m;
    m.t_whiten = whitening(st.sigma, ropt.whitening, ropt.regularizer(st.sigma));
    m.rho = ropt.rho;
    m.full_lmi = ropt.full_lmi;
    return m;
}

DesignSolution robust_optimize(const ChannelSet &ch_dt, const DesignTargets &tg, const ErrorStatistics &st,
                               const AoOptions &opt, const RobustOptions &ropt)
{
    ch_dt.validate();
    if (ch_dt.n_rx() != 1)
        throw ValidationError("robust_optimize: one receive antenna per user is required");
    if (st.dim() != ch_dt.n_tx())
        throw ValidationError("robust_optimize: statistics must describe the N_t-dimensional BS -> user-1 error");
    const RobustModel model = make_robust_model(st, ropt);
    return ao_design(ch_dt, tg, opt, &model);
}

Algorithm1Result algorithm1_run(const std::vector<CoherenceBlock> &stream, const DesignTargets &tg,
                                const AoOptions &opt, const RobustOptions &ropt, ErrorStatistics initial)
{
    if (stream.empty())
        throw ValidationError("algorithm1_run: empty stream");
    ropt.validate();
    const int nt = stream.front().dt.n_tx();
    ErrorStatistics st = initial.sigma.size() ? initial : ErrorStatistics::with_prior(nt);
    st.validate();

    Algorithm1Result out;
    bool frozen = false;
    std::vector<double> traces, objectives;
    const auto w = static_cast<std::size_t>(ropt.conv_window);
    for (std::size_t b = 0; b < stream.size(); ++b)
    {
        const CoherenceBlock &blk = stream[b];
        BlockOutcome o;
        if (!frozen)
        {
            st = update_covariance(st, channel_error(blk.real.h1, blk.dt.h1));
            o.learned = true;
        }
        o.sigma_trace = st.sigma.trace().real();
        AoOptions ob = opt;
        ob.seed = derive_seed(opt.seed, b);
        try
        {
            o.solution = robust_optimize(blk.dt, tg, st, ob, ropt);
            if (!o.solution.feasible)
            {
                o.failed = true;
                o.error = o.solution.diagnostics;
            }
        }
        catch (const std::exception &e)
        {
            o.failed = true;
            o.error = e.what();
        }
        traces.push_back(o.sigma_trace);
        objectives.push_back(o.failed ? std::numeric_limits<double>::quiet_NaN() : o.solution.power);
        out.blocks.push_back(std::move(o));
        out.trajectory.push_back(st);

        // Gate: tr(Sigma) against w blocks back, and the mean objective of
        // the last window against the window before it.
        if (!frozen && traces.size() >= 2 * w)
        {
            const std::size_t n = traces.size();
            const double tr_now = traces[n - 1], tr_then = traces[n - 1 - w];
            double cur = 0.0, prev = 0.0;
            bool ok = true;
            for (std::size_t i = 0; i < w; ++i)
            {
                const double a = objectives[n - 1 - i], c = objectives[n - 1 - w - i];
                ok = ok && std::isfinite(a) && std::isfinite(c);
                cur += a;
                prev += c;
            }
            if (ok && tr_now > 0.0 && cur > 0.0)
            {
                const bool tr_ok = std::abs(tr_now - tr_then) <= 0.01 * tr_now;
                const bool obj_ok = std::abs(cur - prev) <= 0.01 * cur;
                frozen = tr_ok && obj_ok;
            }
        }
    }
    out.final_stats = st;
    return out;
}

OutageEstimate monte_carlo_outage(const DesignSolution &sol, const ChannelSampler &sampler, const DesignTargets &tg,
                                  std::size_t n_samples, unsigned threads)
{
    if (n_samples < 1)
        throw ValidationError("monte_carlo_outage: n_samples must be >= 1");
    tg.validate();
    std::vector<unsigned char> miss1(n_samples, 0), miss2(n_samples, 0);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n_samples; i += stride)
        {
            const SePair se = effective_se(sampler(i), sol, tg);
            miss1[i] = se.se1 < tg.gamma1 - 1e-9;
            miss2[i] = se.se2 < tg.gamma2 - 1e-9;
        }
    };
    unsigned nthreads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, n_samples));
    if (nthreads <= 1)
        work(0, 1);
    else
    {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t)
            pool.emplace_back(work, t, nthreads);
        for (auto &th : pool)
            th.join();
    }
    OutageEstimate o;
    o.samples = n_samples;
    const double n = static_cast<double>(n_samples);
    o.outage1 = std::accumulate(miss1.begin(), miss1.end(), 0.0) / n;
    o.outage2 = std::accumulate(miss2.begin(), miss2.end(), 0.0) / n;
    o.stderr1 = std::sqrt(o.outage1 * (1.0 - o.outage1) / n);
    o.stderr2 = std::sqrt(o.outage2 * (1.0 - o.outage2) / n);
    return o;
}

ChannelSampler gaussian_error_sampler(const ChannelSet &dt, const CMat &sigma, std::uint64_t seed)
{
    dt.validate();
    if (dt.n_rx() != 1 || sigma.rows() != dt.n_tx() || sigma.cols() != dt.n_tx())
        throw ValidationError("gaussian_error_sampler: expects one receive antenna and an N_t covariance");
    const CMat root = linalg::sqrt_psd(sigma);
    return [dt, root, seed](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        const CVec z = complex_normal_vector(rng, root.rows());
        ChannelSet real = dt;
        real.h1 += (root * z).adjoint();
        real.provenance = Provenance::Real;
        return real;
    };
}

void write_statistics(std::ostream &os, const ErrorStatistics &st)
{
    st.validate();
    io::MatrixRecord rec;
    rec.fields["kind"] = "error_statistics";
    rec.fields["n"] = std::to_string(st.n);
    rec.data = st.sigma;
    io::write_record(os, rec);
}

ErrorStatistics read_statistics(std::istream &is)
{
    for (const auto &rec : io::read_records(is))
    {
        if (!rec.has("kind") || rec.field("kind") != "error_statistics")
            continue;
        ErrorStatistics st;
        st.sigma = rec.data;
        try
        {
            st.n = static_cast<std::size_t>(std::stoull(rec.field("n")));
        }
        catch (const std::exception &)
        {
            throw ValidationError("error statistics: invalid sample count");
        }
        st.validate();
        return st;
    }
    throw ValidationError("error statistics: no record found");
}

} // namespace dtris
