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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dtris/conic.hpp"

namespace dtris::conic
{
namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

// Upper-triangle entry of a Hermitian coefficient (p <= q).
struct Triplet
{
    int p;
    int q;
    cd v;
};

struct PsdEntry
{
    int block;
    bool dense;
    CMat mat;
    std::vector<Triplet> trip;
};

struct SocEntry
{
    int block;
    int index;
    double v;
};

struct Row
{
    std::vector<PsdEntry> psd;
    std::vector<std::pair<int, double>> lp;
    std::vector<SocEntry> soc;
};

struct Point
{
    std::vector<CMat> psd;
    RVec lp;
    std::vector<RVec> soc;
};

struct Layout
{
    std::vector<int> psd;
    int lp = 0;
    std::vector<int> soc;

    int degree() const
    {
        int d = lp + static_cast<int>(soc.size());
        for (int n : psd)
            d += n;
        return d;
    }
};

Point zeros(const Layout &l)
{
    Point p;
    for (int n : l.psd)
        p.psd.push_back(CMat::Zero(n, n));
    p.lp = RVec::Zero(l.lp);
    for (int n : l.soc)
        p.soc.push_back(RVec::Zero(n));
    return p;
}

Point identity(const Layout &l)
{
    Point p;
    for (int n : l.psd)
        p.psd.push_back(CMat::Identity(n, n));
    p.lp = RVec::Ones(l.lp);
    for (int n : l.soc)
    {
        RVec e = RVec::Zero(n);
        e(0) = 1.0;
        p.soc.push_back(e);
    }
    return p;
}

double dot(const Point &a, const Point &b)
{
    double s = a.lp.dot(b.lp);
    for (std::size_t i = 0; i < a.psd.size(); ++i)
        s += linalg::inner(a.psd[i], b.psd[i]);
    for (std::size_t i = 0; i < a.soc.size(); ++i)
        s += a.soc[i].dot(b.soc[i]);
    return s;
}

double norm(const Point &a) { return std::sqrt(std::max(0.0, dot(a, a))); }

// y += alpha * x
void axpy(double alpha, const Point &x, Point &y)
{
    y.lp += alpha * x.lp;
    for (std::size_t i = 0; i < y.psd.size(); ++i)
        y.psd[i] += alpha * x.psd[i];
    for (std::size_t i = 0; i < y.soc.size(); ++i)
        y.soc[i] += alpha * x.soc[i];
}

Point combine(double a, const Point &x, double b, const Point &y)
{
    Point r = x;
    r.lp = a * x.lp + b * y.lp;
    for (std::size_t i = 0; i < r.psd.size(); ++i)
        r.psd[i] = a * x.psd[i] + b * y.psd[i];
    for (std::size_t i = 0; i < r.soc.size(); ++i)
        r.soc[i] = a * x.soc[i] + b * y.soc[i];
    return r;
}

double entry_inner(const PsdEntry &e, const CMat &x)
{
    if (e.dense)
        return linalg::inner(e.mat, x);
    double s = 0.0;
    for (const auto &t : e.trip)
    {
        const double r = (std::conj(t.v) * x(t.p, t.q)).real();
        s += (t.p == t.q) ? r : 2.0 * r;
    }
    return s;
}

void entry_add(const PsdEntry &e, double alpha, CMat &x)
{
    if (e.dense)
    {
        x += alpha * e.mat;
        return;
    }
    for (const auto &t : e.trip)
    {
        x(t.p, t.q) += alpha * t.v;
        if (t.p != t.q)
            x(t.q, t.p) += alpha * std::conj(t.v);
    }
}

double entry_norm2(const PsdEntry &e)
{
    if (e.dense)
        return e.mat.squaredNorm();
    double s = 0.0;
    for (const auto &t : e.trip)
        s += (t.p == t.q ? 1.0 : 2.0) * std::norm(t.v);
    return s;
}

// Standard form: min <c,x> s.t. <a_i,x> = b_i, x in K.
struct StandardForm
{
    Layout layout;
    std::vector<Row> rows;
    RVec b;
    Point c;

    // Map from program variables to blocks.
    std::vector<std::pair<int, int>> mat_blocks;  // (pos block, neg block or -1)
    std::vector<std::pair<int, int>> scalar_cols; // (pos lp, neg lp or -1)

    RVec apply(const Point &x) const
    {
        RVec r(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
        {
            const Row &row = rows[i];
            double s = 0.0;
            for (const auto &e : row.psd)
                s += entry_inner(e, x.psd[static_cast<std::size_t>(e.block)]);
            for (const auto &[k, v] : row.lp)
                s += v * x.lp(k);
            for (const auto &e : row.soc)
                s += e.v * x.soc[static_cast<std::size_t>(e.block)](e.index);
            r(static_cast<Eigen::Index>(i)) = s;
        }
        return r;
    }

    Point adjoint(const RVec &y) const
    {
        Point p = zeros(layout);
        for (std::size_t i = 0; i < rows.size(); ++i)
        {
            const double yi = y(static_cast<Eigen::Index>(i));
            if (yi == 0.0)
                continue;
            const Row &row = rows[i];
            for (const auto &e : row.psd)
                entry_add(e, yi, p.psd[static_cast<std::size_t>(e.block)]);
            for (const auto &[k, v] : row.lp)
                p.lp(k) += yi * v;
            for (const auto &e : row.soc)
                p.soc[static_cast<std::size_t>(e.block)](e.index) += yi * e.v;
        }
        return p;
    }
};

PsdEntry make_psd_entry(int block, const CMat &a)
{
    const CMat h = linalg::hermitian_part(a);
    const auto n = h.rows();
    PsdEntry e{block, false, {}, {}};
    for (Eigen::Index q = 0; q < n; ++q)
        for (Eigen::Index p = 0; p <= q; ++p)
            if (h(p, q) != cd(0.0, 0.0))
                e.trip.push_back({static_cast<int>(p), static_cast<int>(q), h(p, q)});
    if (static_cast<Eigen::Index>(e.trip.size()) > n)
    {
        e.dense = true;
        e.mat = h;
        e.trip.clear();
    }
    return e;
}

class RowBuilder
{
public:
    explicit RowBuilder(const StandardForm &sf) : sf_(sf) {}

    void add_expr(const AffineExpr &e, double scale)
    {
        for (const auto &[id, a] : e.mat_terms)
        {
            const auto [pos, neg] = sf_.mat_blocks[static_cast<std::size_t>(id)];
            accumulate(pos, scale * a);
            if (neg >= 0)
                accumulate(neg, -scale * a);
        }
        for (const auto &[id, c] : e.scalar_terms)
        {
            const auto [pos, neg] = sf_.scalar_cols[static_cast<std::size_t>(id)];
            lp_[pos] += scale * c;
            if (neg >= 0)
                lp_[neg] -= scale * c;
        }
    }

    void add_lp(int k, double v) { lp_[k] += v; }
    void add_soc(int block, int index, double v) { soc_.push_back({block, index, v}); }

    Row finish() const
    {
        Row r;
        for (const auto &[blk, m] : psd_)
        {
            PsdEntry e = make_psd_entry(blk, m);
            if (e.dense || !e.trip.empty())
                r.psd.push_back(std::move(e));
        }
        for (const auto &[k, v] : lp_)
            if (v != 0.0)
                r.lp.emplace_back(k, v);
        r.soc = soc_;
        return r;
    }

private:
    void accumulate(int block, const CMat &a)
    {
        auto it = psd_.find(block);
        if (it == psd_.end())
            psd_.emplace(block, a);
        else
            it->second += a;
    }

    const StandardForm &sf_;
    std::map<int, CMat> psd_;
    std::map<int, double> lp_;
    std::vector<SocEntry> soc_;
};

StandardForm compile(const ConicProgram &prog)
{
    StandardForm sf;
    Layout &L = sf.layout;
    for (const auto &m : prog.matrix_vars())
    {
        const int pos = static_cast<int>(L.psd.size());
        L.psd.push_back(m.dim);
        int neg = -1;
        if (!m.psd)
        {
            neg = static_cast<int>(L.psd.size());
            L.psd.push_back(m.dim);
        }
        sf.mat_blocks.emplace_back(pos, neg);
    }
    for (const auto &s : prog.scalar_vars())
    {
        const int pos = L.lp++;
        const int neg = (s.sign == Sign::Free) ? L.lp++ : -1;
        sf.scalar_cols.emplace_back(pos, neg);
    }
    std::vector<int> slack;
    for (const auto &c : prog.linear_constraints())
        slack.push_back(c.rel == Relation::Equal ? -1 : L.lp++);
    for (const auto &c : prog.soc_constraints())
        L.soc.push_back(static_cast<int>(c.vec.size()) + 1);

    std::vector<Row> rows;
    std::vector<double> rhs;
    const auto &lin = prog.linear_constraints();
    for (std::size_t i = 0; i < lin.size(); ++i)
    {
        RowBuilder rb(sf);
        rb.add_expr(lin[i].lhs, 1.0);
        if (lin[i].rel == Relation::LessEqual)
            rb.add_lp(slack[i], 1.0);
        else if (lin[i].rel == Relation::GreaterEqual)
            rb.add_lp(slack[i], -1.0);
        rows.push_back(rb.finish());
        rhs.push_back(lin[i].rhs - lin[i].lhs.constant);
    }
    const auto &soc = prog.soc_constraints();
    for (std::size_t k = 0; k < soc.size(); ++k)
    {
        const int blk = static_cast<int>(k);
        {
            RowBuilder rb(sf);
            rb.add_soc(blk, 0, 1.0);
            rb.add_expr(soc[k].bound, -1.0);
            rows.push_back(rb.finish());
            rhs.push_back(soc[k].bound.constant);
        }
        for (std::size_t j = 0; j < soc[k].vec.size(); ++j)
        {
            RowBuilder rb(sf);
            rb.add_soc(blk, static_cast<int>(j) + 1, 1.0);
            rb.add_expr(soc[k].vec[j], -1.0);
            rows.push_back(rb.finish());
            rhs.push_back(soc[k].vec[j].constant);
        }
    }
    sf.rows = std::move(rows);
    sf.b = Eigen::Map<RVec>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));

    sf.c = zeros(L);
    for (const auto &[id, a] : prog.objective().mat_terms)
    {
        const auto [pos, neg] = sf.mat_blocks[static_cast<std::size_t>(id)];
        const CMat h = linalg::hermitian_part(a);
        sf.c.psd[static_cast<std::size_t>(pos)] += h;
        if (neg >= 0)
            sf.c.psd[static_cast<std::size_t>(neg)] -= h;
    }
    for (const auto &[id, v] : prog.objective().scalar_terms)
    {
        const auto [pos, neg] = sf.scalar_cols[static_cast<std::size_t>(id)];
        sf.c.lp(pos) += v;
        if (neg >= 0)
            sf.c.lp(neg) -= v;
    }
    return sf;
}

struct PsdScaling
{
    CMat R;
    CMat Rinv;
    CMat Wm; // R R^H
    RVec lambda;
};

struct SocScaling
{
    RVec v;
    double beta = 1.0;
    RVec lambda;
};

struct Scaling
{
    std::vector<PsdScaling> psd;
    RVec lp_w;
    RVec lp_lambda;
    std::vector<SocScaling> soc;
};

// Factored to avoid cancellation near the cone boundary.
double soc_det(const RVec &x)
{
    const double t = x.tail(x.size() - 1).norm();
    return (x(0) - t) * (x(0) + t);
}

// Strict interior test used to guard steps against scaled-space round-off.
bool interior(const Point &x)
{
    for (const CMat &b : x.psd)
    {
        Eigen::LLT<CMat> c(b);
        if (c.info() != Eigen::Success)
            return false;
    }
    if (x.lp.size() > 0 && !(x.lp.minCoeff() > 0.0))
        return false;
    for (const RVec &v : x.soc)
        if (!(v(0) > 0.0) || !(soc_det(v) > 0.0))
            return false;
    return true;
}

RVec soc_J(const RVec &x)
{
    RVec r = -x;
    r(0) = x(0);
    return r;
}

bool compute_scaling(const Point &x, const Point &z, Scaling &s)
{
    s.psd.clear();
    s.soc.clear();
    for (std::size_t i = 0; i < x.psd.size(); ++i)
    {
        Eigen::LLT<CMat> c1(x.psd[i]);
        Eigen::LLT<CMat> c2(z.psd[i]);
        if (c1.info() != Eigen::Success || c2.info() != Eigen::Success)
            return false;
        const CMat L1 = c1.matrixL();
        const CMat L2 = c2.matrixL();
        Eigen::JacobiSVD<CMat> svd(L2.adjoint() * L1, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const RVec sig = svd.singularValues();
        if (!(sig.minCoeff() > 0.0) || !sig.allFinite())
            return false;
        const auto n = sig.size();
        const CMat L1inv = L1.triangularView<Eigen::Lower>().solve(CMat::Identity(n, n));
        PsdScaling ps;
        const RVec isq = sig.cwiseSqrt().cwiseInverse();
        ps.R = L1 * svd.matrixV() * isq.asDiagonal();
        ps.Rinv = sig.cwiseSqrt().asDiagonal() * svd.matrixV().adjoint() * L1inv;
        ps.Wm = ps.R * ps.R.adjoint();
        ps.lambda = sig;
        s.psd.push_back(std::move(ps));
    }
    if (x.lp.size() > 0)
    {
        if (!(x.lp.minCoeff() > 0.0) || !(z.lp.minCoeff() > 0.0))
            return false;
        s.lp_w = (x.lp.array() / z.lp.array()).sqrt();
        s.lp_lambda = (x.lp.array() * z.lp.array()).sqrt();
    }
    else
    {
        s.lp_w.resize(0);
        s.lp_lambda.resize(0);
    }
    for (std::size_t i = 0; i < x.soc.size(); ++i)
    {
        const double dx = soc_det(x.soc[i]);
        const double dz = soc_det(z.soc[i]);
        if (!(dx > 0.0) || !(dz > 0.0) || x.soc[i](0) <= 0.0 || z.soc[i](0) <= 0.0)
            return false;
        const double xn = std::sqrt(dx);
        const double zn = std::sqrt(dz);
        const RVec xb = x.soc[i] / xn;
        const RVec zb = z.soc[i] / zn;
        const double gamma = std::sqrt((1.0 + xb.dot(zb)) / 2.0);
        const RVec wb = (xb + soc_J(zb)) / (2.0 * gamma);
        RVec e = RVec::Zero(wb.size());
        e(0) = 1.0;
        SocScaling sc;
        sc.v = (wb + e) / std::sqrt(2.0 * (wb(0) + 1.0));
        sc.beta = std::sqrt(xn / zn);
        sc.lambda = sc.beta * (2.0 * sc.v * sc.v.dot(z.soc[i]) - soc_J(z.soc[i]));
        s.soc.push_back(std::move(sc));
    }
    return true;
}

// W z (dual -> lambda space)
Point apply_W(const Scaling &s, const Point &z)
{
    Point r = z;
    for (std::size_t i = 0; i < z.psd.size(); ++i)
        r.psd[i] = s.psd[i].R.adjoint() * z.psd[i] * s.psd[i].R;
    r.lp = s.lp_w.cwiseProduct(z.lp);
    for (std::size_t i = 0; i < z.soc.size(); ++i)
    {
        const auto &sc = s.soc[i];
        r.soc[i] = sc.beta * (2.0 * sc.v * sc.v.dot(z.soc[i]) - soc_J(z.soc[i]));
    }
    return r;
}

// W^{-T} x (primal -> lambda space)
Point apply_Winv_T(const Scaling &s, const Point &x)
{
    Point r = x;
    for (std::size_t i = 0; i < x.psd.size(); ++i)
        r.psd[i] = s.psd[i].Rinv * x.psd[i] * s.psd[i].Rinv.adjoint();
    r.lp = x.lp.cwiseQuotient(s.lp_w);
    for (std::size_t i = 0; i < x.soc.size(); ++i)
    {
        const auto &sc = s.soc[i];
        const RVec jv = soc_J(sc.v);
        r.soc[i] = (2.0 * jv * jv.dot(x.soc[i]) - soc_J(x.soc[i])) / sc.beta;
    }
    return r;
}

// W^T u (lambda space -> primal)
Point apply_W_T(const Scaling &s, const Point &u)
{
    Point r = u;
    for (std::size_t i = 0; i < u.psd.size(); ++i)
        r.psd[i] = s.psd[i].R * u.psd[i] * s.psd[i].R.adjoint();
    r.lp = s.lp_w.cwiseProduct(u.lp);
    for (std::size_t i = 0; i < u.soc.size(); ++i)
    {
        const auto &sc = s.soc[i];
        r.soc[i] = sc.beta * (2.0 * sc.v * sc.v.dot(u.soc[i]) - soc_J(u.soc[i]));
    }
    return r;
}

// W^T W z
Point apply_W2(const Scaling &s, const Point &z)
{
    Point r = z;
    for (std::size_t i = 0; i < z.psd.size(); ++i)
        r.psd[i] = s.psd[i].Wm * z.psd[i] * s.psd[i].Wm;
    r.lp = s.lp_w.cwiseAbs2().cwiseProduct(z.lp);
    for (std::size_t i = 0; i < z.soc.size(); ++i)
    {
        const auto &sc = s.soc[i];
        const RVec &a = z.soc[i];
        const RVec jv = soc_J(sc.v);
        const double va = sc.v.dot(a);
        r.soc[i] = sc.beta * sc.beta *
                   (a + 4.0 * sc.v.squaredNorm() * va * sc.v - 2.0 * jv.dot(a) * sc.v - 2.0 * va * jv);
    }
    return r;
}

Point lambda_point(const Scaling &s)
{
    Point p;
    for (const auto &ps : s.psd)
        p.psd.push_back(ps.lambda.cast<cd>().asDiagonal());
    p.lp = s.lp_lambda;
    for (const auto &sc : s.soc)
        p.soc.push_back(sc.lambda);
    return p;
}

Point jordan(const Point &u, const Point &v)
{
    Point r = u;
    for (std::size_t i = 0; i < u.psd.size(); ++i)
        r.psd[i] = 0.5 * (u.psd[i] * v.psd[i] + v.psd[i] * u.psd[i]);
    r.lp = u.lp.cwiseProduct(v.lp);
    for (std::size_t i = 0; i < u.soc.size(); ++i)
    {
        const RVec &a = u.soc[i];
        const RVec &b = v.soc[i];
        const auto n = a.size();
        RVec c(n);
        c(0) = a.dot(b);
        c.tail(n - 1) = a(0) * b.tail(n - 1) + b(0) * a.tail(n - 1);
        r.soc[i] = c;
    }
    return r;
}

// Solves lambda o u = r.
Point lambda_solve(const Scaling &s, const Point &r)
{
    Point u = r;
    for (std::size_t i = 0; i < r.psd.size(); ++i)
    {
        const RVec &l = s.psd[i].lambda;
        for (Eigen::Index q = 0; q < l.size(); ++q)
            for (Eigen::Index p = 0; p < l.size(); ++p)
                u.psd[i](p, q) = 2.0 * r.psd[i](p, q) / (l(p) + l(q));
    }
    u.lp = r.lp.cwiseQuotient(s.lp_lambda);
    for (std::size_t i = 0; i < r.soc.size(); ++i)
    {
        const RVec &l = s.soc[i].lambda;
        const RVec &b = r.soc[i];
        const auto n = l.size();
        const double det = soc_det(l);
        RVec c(n);
        c(0) = (l(0) * b(0) - l.tail(n - 1).dot(b.tail(n - 1))) / det;
        c.tail(n - 1) = (b.tail(n - 1) - c(0) * l.tail(n - 1)) / l(0);
        u.soc[i] = c;
    }
    return u;
}

double soc_max_step(const RVec &l, const RVec &d)
{
    const double a = soc_det(d);
    const double b = l(0) * d(0) - l.tail(l.size() - 1).dot(d.tail(d.size() - 1));
    const double c = soc_det(l);
    double alpha = kInf;
    if (a == 0.0)
    {
        if (b < 0.0)
            alpha = -c / (2.0 * b);
    }
    else
    {
        const double disc = b * b - a * c;
        if (disc >= 0.0)
        {
            const double sq = std::sqrt(disc);
            const double qq = -(b + std::copysign(sq, b));
            double r1 = (qq != 0.0) ? qq / a : kInf;
            double r2 = (qq != 0.0) ? c / qq : kInf;
            if (a < 0.0 || b < 0.0)
            {
                double best = kInf;
                for (double r : {r1, r2})
                    if (r > 0.0 && r < best)
                        best = r;
                alpha = best;
            }
        }
    }
    return alpha;
}

// Largest alpha with lambda + alpha d in K.
double max_step(const Scaling &s, const Point &d)
{
    double alpha = kInf;
    for (std::size_t i = 0; i < d.psd.size(); ++i)
    {
        const RVec isq = s.psd[i].lambda.cwiseSqrt().cwiseInverse();
        const CMat m = isq.cast<cd>().asDiagonal() * d.psd[i] * isq.cast<cd>().asDiagonal();
        Eigen::SelfAdjointEigenSolver<CMat> es(linalg::hermitian_part(m), Eigen::EigenvaluesOnly);
        const double mn = es.eigenvalues()(0);
        if (mn < 0.0)
            alpha = std::min(alpha, -1.0 / mn);
    }
    for (Eigen::Index k = 0; k < d.lp.size(); ++k)
        if (d.lp(k) < 0.0)
            alpha = std::min(alpha, -s.lp_lambda(k) / d.lp(k));
    for (std::size_t i = 0; i < d.soc.size(); ++i)
        alpha = std::min(alpha, soc_max_step(s.soc[i].lambda, d.soc[i]));
    return alpha;
}

// Incidence lists used to assemble the Schur complement.
struct Incidence
{
    std::vector<std::vector<std::pair<int, const PsdEntry *>>> psd; // per block
    std::vector<std::vector<std::pair<int, double>>> lp;            // per lp coordinate
    std::vector<std::vector<std::vector<std::pair<int, double>>>> soc; // per block, per coordinate
    std::vector<std::vector<int>> soc_rows;                          // per block
};

Incidence build_incidence(const StandardForm &sf)
{
    Incidence inc;
    const Layout &L = sf.layout;
    inc.psd.resize(L.psd.size());
    inc.lp.resize(static_cast<std::size_t>(L.lp));
    inc.soc.resize(L.soc.size());
    inc.soc_rows.resize(L.soc.size());
    for (std::size_t k = 0; k < L.soc.size(); ++k)
        inc.soc[k].resize(static_cast<std::size_t>(L.soc[k]));
    for (std::size_t i = 0; i < sf.rows.size(); ++i)
    {
        const int ii = static_cast<int>(i);
        for (const auto &e : sf.rows[i].psd)
            inc.psd[static_cast<std::size_t>(e.block)].emplace_back(ii, &e);
        for (const auto &[k, v] : sf.rows[i].lp)
            inc.lp[static_cast<std::size_t>(k)].emplace_back(ii, v);
        for (const auto &e : sf.rows[i].soc)
        {
            inc.soc[static_cast<std::size_t>(e.block)][static_cast<std::size_t>(e.index)].emplace_back(ii, e.v);
            auto &rr = inc.soc_rows[static_cast<std::size_t>(e.block)];
            if (rr.empty() || rr.back() != ii)
                rr.push_back(ii);
        }
    }
    return inc;
}

RMat schur(const StandardForm &sf, const Incidence &inc, const Scaling &s)
{
    const auto m = static_cast<Eigen::Index>(sf.rows.size());
    RMat M = RMat::Zero(m, m);
    for (std::size_t b = 0; b < inc.psd.size(); ++b)
    {
        const auto &list = inc.psd[b];
        const CMat &W = s.psd[b].Wm;
        for (std::size_t jj = 0; jj < list.size(); ++jj)
        {
            const PsdEntry &ej = *list[jj].second;
            CMat B;
            if (ej.dense)
                B = W * ej.mat * W;
            else
            {
                B = CMat::Zero(W.rows(), W.cols());
                for (const auto &t : ej.trip)
                {
                    B.noalias() += t.v * W.col(t.p) * W.row(t.q);
                    if (t.p != t.q)
                        B.noalias() += std::conj(t.v) * W.col(t.q) * W.row(t.p);
                }
            }
            const int j = list[jj].first;
            for (std::size_t ii = 0; ii <= jj; ++ii)
            {
                const int i = list[ii].first;
                M(std::min(i, j), std::max(i, j)) += entry_inner(*list[ii].second, B);
            }
        }
    }
    for (std::size_t k = 0; k < inc.lp.size(); ++k)
    {
        const double d = s.lp_w(static_cast<Eigen::Index>(k)) * s.lp_w(static_cast<Eigen::Index>(k));
        const auto &list = inc.lp[k];
        for (std::size_t jj = 0; jj < list.size(); ++jj)
            for (std::size_t ii = 0; ii <= jj; ++ii)
            {
                const int i = list[ii].first;
                const int j = list[jj].first;
                M(std::min(i, j), std::max(i, j)) += d * list[ii].second * list[jj].second;
            }
    }
    for (std::size_t b = 0; b < inc.soc.size(); ++b)
    {
        const auto &sc = s.soc[b];
        const double b2 = sc.beta * sc.beta;
        const RVec jv = soc_J(sc.v);
        const double vv = sc.v.squaredNorm();
        for (const auto &list : inc.soc[b])
            for (std::size_t jj = 0; jj < list.size(); ++jj)
                for (std::size_t ii = 0; ii <= jj; ++ii)
                {
                    const int i = list[ii].first;
                    const int j = list[jj].first;
                    M(std::min(i, j), std::max(i, j)) += b2 * list[ii].second * list[jj].second;
                }
        const auto &rows = inc.soc_rows[b];
        std::vector<double> p(rows.size(), 0.0);
        std::vector<double> q(rows.size(), 0.0);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (const auto &e : sf.rows[static_cast<std::size_t>(rows[r])].soc)
                if (e.block == static_cast<int>(b))
                {
                    p[r] += sc.v(e.index) * e.v;
                    q[r] += jv(e.index) * e.v;
                }
        for (std::size_t jj = 0; jj < rows.size(); ++jj)
            for (std::size_t ii = 0; ii <= jj; ++ii)
            {
                const int i = rows[ii];
                const int j = rows[jj];
                M(std::min(i, j), std::max(i, j)) +=
                    b2 * (4.0 * vv * p[ii] * p[jj] - 2.0 * p[ii] * q[jj] - 2.0 * q[ii] * p[jj]);
            }
    }
    return M.selfadjointView<Eigen::Upper>();
}

class SchurSolver
{
public:
    bool factor(const RMat &M)
    {
        const double scale = std::max(1e-300, M.diagonal().cwiseAbs().maxCoeff());
        double reg = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt)
        {
            RMat Mr = M;
            if (reg > 0.0)
                Mr.diagonal().array() += reg * scale;
            llt_.compute(Mr);
            if (llt_.info() == Eigen::Success)
                return true;
            reg = (reg == 0.0) ? 1e-14 : reg * 100.0;
        }
        return false;
    }
    RVec solve(const RVec &r) const { return llt_.solve(r); }

private:
    Eigen::LLT<RMat> llt_;
};

struct Direction
{
    Point dx;
    RVec dy;
    Point dz;
    double dtau = 0.0;
    double dkappa = 0.0;
};

struct Iterate
{
    Point x;
    RVec y;
    Point z;
    double tau = 1.0;
    double kappa = 1.0;
};

} // namespace

SolverResult solve(const ConicProgram &program, const SolverOptions &opt)
{
    program.validate();
    if (!(opt.tol > 0.0) || opt.max_iterations < 1 || !(opt.step_fraction > 0.0 && opt.step_fraction < 1.0))
        throw ValidationError("conic: invalid solver options");

    StandardForm sf = compile(program);
    const Layout &L = sf.layout;
    const auto m = static_cast<Eigen::Index>(sf.rows.size());

    // Row equilibration, then unit-norm b and c.
    for (Eigen::Index i = 0; i < m; ++i)
    {
        Row &row = sf.rows[static_cast<std::size_t>(i)];
        double n2 = 0.0;
        for (const auto &e : row.psd)
            n2 += entry_norm2(e);
        for (const auto &[k, v] : row.lp)
            n2 += v * v;
        for (const auto &e : row.soc)
            n2 += e.v * e.v;
        if (n2 == 0.0)
        {
            if (sf.b(i) != 0.0)
            {
                SolverResult r;
                r.status = Status::Infeasible;
                return r;
            }
            continue;
        }
        const double f = 1.0 / std::sqrt(n2);
        for (auto &e : row.psd)
        {
            e.mat *= f;
            for (auto &t : e.trip)
                t.v *= f;
        }
        for (auto &[k, v] : row.lp)
            v *= f;
        for (auto &e : row.soc)
            e.v *= f;
        sf.b(i) *= f;
    }
    const double bscale = (sf.b.norm() > 0.0) ? sf.b.norm() : 1.0;
    const double cnorm = norm(sf.c);
    const double cscale = (cnorm > 0.0) ? cnorm : 1.0;
    sf.b /= bscale;
    sf.c = combine(1.0 / cscale, sf.c, 0.0, sf.c);

    const Incidence inc = build_incidence(sf);
    const double nu = static_cast<double>(L.degree());

    Iterate it;
    it.x = identity(L);
    it.z = identity(L);
    it.y = RVec::Zero(m);

    SolverResult result;
    Scaling sc;
    SchurSolver schur_solver;
    int stalls = 0;

    auto finish = [&](Status status, const Iterate &at, int iters) {
        result.status = status;
        result.iterations = iters;
        const double t = (status == Status::Optimal || status == Status::Inaccurate) ? at.tau : 1.0;
        Point xs = combine(bscale / t, at.x, 0.0, at.x);
        result.matrices.clear();
        result.scalars.clear();
        for (std::size_t v = 0; v < program.matrix_vars().size(); ++v)
        {
            const auto [pos, neg] = sf.mat_blocks[v];
            CMat X = xs.psd[static_cast<std::size_t>(pos)];
            if (neg >= 0)
                X -= xs.psd[static_cast<std::size_t>(neg)];
            result.matrices.push_back(linalg::hermitian_part(X));
        }
        for (std::size_t v = 0; v < program.scalar_vars().size(); ++v)
        {
            const auto [pos, neg] = sf.scalar_cols[v];
            double s = xs.lp(pos);
            if (neg >= 0)
                s -= xs.lp(neg);
            result.scalars.push_back(s);
        }
        result.objective = evaluate(program.objective(), result);
        return result;
    };

    // Late steps can lose accuracy; the stall fallback uses the best iterate.
    Iterate best = it;
    double best_merit = kInf, best_pres = kInf, best_dres = kInf, best_gap = kInf;
    for (int iter = 0; iter <= opt.max_iterations; ++iter)
    {
        const RVec Ax = sf.apply(it.x);
        const Point ATy = sf.adjoint(it.y);
        const RVec rp = sf.b * it.tau - Ax;
        Point rd = combine(it.tau, sf.c, -1.0, ATy);
        axpy(-1.0, it.z, rd);
        const double cx = dot(sf.c, it.x);
        const double by = sf.b.dot(it.y);
        const double rg = it.kappa + cx - by;
        const double xz = dot(it.x, it.z);
        const double mu = (xz + it.tau * it.kappa) / (nu + 1.0);

        const double pres = rp.norm() / it.tau;
        const double dres = norm(rd) / it.tau;
        const double pobj = cx / it.tau;
        const double dobj = by / it.tau;
        const double gap = xz / (it.tau * it.tau);
        result.primal_residual = pres;
        result.dual_residual = dres;
        result.gap = gap;

        if (opt.verbose)
            std::fprintf(stderr, "%3d pobj=% .6e dobj=% .6e pres=%.2e dres=%.2e gap=%.2e tau=%.2e kappa=%.2e\n",
                         iter, pobj * bscale * cscale, dobj * bscale * cscale, pres, dres, gap, it.tau, it.kappa);

        const double gap_ref = std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));
        const double merit = std::max({pres, dres, std::abs(gap) / std::max(1.0, std::abs(pobj))});
        if (merit < best_merit)
        {
            best = it;
            best_merit = merit;
            best_pres = pres;
            best_dres = dres;
            best_gap = std::abs(gap) / std::max(1.0, std::abs(pobj));
        }
        if (pres <= opt.tol && dres <= opt.tol && gap >= 0.0 &&
            (gap <= opt.tol * gap_ref || std::abs(pobj - dobj) <= opt.tol * gap_ref))
            return finish(Status::Optimal, it, iter);

        if (by > 0.0)
        {
            Point cert = ATy;
            axpy(1.0, it.z, cert);
            if (norm(cert) / by <= opt.tol)
                return finish(Status::Infeasible, it, iter);
        }
        if (cx < 0.0 && Ax.norm() / (-cx) <= opt.tol)
            return finish(Status::Unbounded, it, iter);

        if (iter == opt.max_iterations)
            break;

        if (!compute_scaling(it.x, it.z, sc))
        {
            if (opt.verbose)
                std::fprintf(stderr, "stop: scaling failed\n");
            break;
        }
        const RMat M = schur(sf, inc, sc);
        if (!schur_solver.factor(M))
        {
            if (opt.verbose)
                std::fprintf(stderr, "stop: Schur factorization failed\n");
            break;
        }

        const Point W2c = apply_W2(sc, sf.c);
        const RVec dy2 = schur_solver.solve(sf.b + sf.apply(W2c));
        Point dx2 = apply_W2(sc, sf.adjoint(dy2));
        axpy(-1.0, W2c, dx2);
        const Point W2rd = apply_W2(sc, rd);
        const RVec AW2rd = sf.apply(W2rd);
        const double denom = sf.b.dot(dy2) - dot(sf.c, dx2) + it.kappa / it.tau;

        auto newton = [&](double eta, const Point &rlam, double rtau) {
            Direction d;
            const Point rc = apply_W_T(sc, lambda_solve(sc, rlam));
            const RVec dy1 = schur_solver.solve(eta * rp - sf.apply(rc) + eta * AW2rd);
            Point dx1 = apply_W2(sc, sf.adjoint(dy1));
            axpy(1.0, rc, dx1);
            axpy(-eta, W2rd, dx1);
            d.dtau = (eta * rg + rtau / it.tau - sf.b.dot(dy1) + dot(sf.c, dx1)) / denom;
            d.dy = dy1 + d.dtau * dy2;
            d.dx = dx1;
            axpy(d.dtau, dx2, d.dx);
            d.dz = combine(eta, rd, d.dtau, sf.c);
            axpy(-1.0, sf.adjoint(d.dy), d.dz);
            d.dkappa = (rtau - it.kappa * d.dtau) / it.tau;
            return d;
        };

        auto step_length = [&](const Direction &d) {
            double a = std::min(max_step(sc, apply_Winv_T(sc, d.dx)), max_step(sc, apply_W(sc, d.dz)));
            if (d.dtau < 0.0)
                a = std::min(a, -it.tau / d.dtau);
            if (d.dkappa < 0.0)
                a = std::min(a, -it.kappa / d.dkappa);
            return a;
        };

        const Point lam = lambda_point(sc);
        const Point lam2 = jordan(lam, lam);
        Point r_aff = combine(-1.0, lam2, 0.0, lam2);
        const Direction da = newton(1.0, r_aff, -it.tau * it.kappa);
        const double alpha_a = std::min(1.0, step_length(da));
        const double sigma = std::clamp(std::pow(1.0 - alpha_a, 3.0), 0.0, 1.0);

        Point r_cor = combine(sigma * mu, identity(L), -1.0, lam2);
        axpy(-1.0, jordan(apply_Winv_T(sc, da.dx), apply_W(sc, da.dz)), r_cor);
        const double rtau = sigma * mu - it.tau * it.kappa - da.dtau * da.dkappa;
        const Direction d = newton(1.0 - sigma, r_cor, rtau);
        double alpha = std::min(1.0, opt.step_fraction * step_length(d));
        for (int back = 0; back < 20 && std::isfinite(alpha) && alpha > 0.0; ++back)
        {
            if (interior(combine(1.0, it.x, alpha, d.dx)) && interior(combine(1.0, it.z, alpha, d.dz)))
                break;
            alpha *= 0.7;
        }
        if (!std::isfinite(alpha) || alpha < 1e-10)
        {
            if (opt.verbose)
                std::fprintf(stderr, "short step %.2e\n", alpha);
            if (++stalls >= 2)
                break;
        }
        else
            stalls = 0;

        axpy(alpha, d.dx, it.x);
        it.y += alpha * d.dy;
        axpy(alpha, d.dz, it.z);
        it.tau += alpha * d.dtau;
        it.kappa += alpha * d.dkappa;
        // Rounding in the scaled solves leaves an anti-Hermitian residue that
        // accumulates and can make tr(XZ) negative.
        for (std::size_t i = 0; i < it.x.psd.size(); ++i)
        {
            it.x.psd[i] = linalg::hermitian_part(it.x.psd[i]);
            it.z.psd[i] = linalg::hermitian_part(it.z.psd[i]);
        }
        result.iterations = iter + 1;
    }

    if (opt.verbose)
        std::fprintf(stderr, "exit: best pres=%.2e dres=%.2e gap=%.2e\n", best_pres, best_dres, best_gap);
    for (const auto &[level, status] : {std::pair{100.0, Status::Optimal}, std::pair{1e4, Status::Inaccurate}})
    {
        const double loose = level * opt.tol;
        if (best_pres <= loose && best_dres <= loose && best_gap <= loose)
        {
            result.primal_residual = best_pres;
            result.dual_residual = best_dres;
            result.gap = best_gap;
            return finish(status, best, result.iterations);
        }
    }
    return finish(Status::NumericalFailure, it, result.iterations);
}

} // namespace dtris::conic
