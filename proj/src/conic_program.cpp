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

#include "dtris/conic.hpp"

#include <cmath>

namespace dtris::conic
{

const char *to_string(Status s)
{
    switch (s)
    {
    case Status::Optimal:
        return "optimal";
    case Status::Inaccurate:
        return "inaccurate";
    case Status::Infeasible:
        return "infeasible";
    case Status::Unbounded:
        return "unbounded";
    case Status::NumericalFailure:
        return "numerical_failure";
    }
    return "unknown";
}

AffineExpr &AffineExpr::add(MatVar x, const CMat &coeff)
{
    mat_terms.emplace_back(x.id, coeff);
    return *this;
}

AffineExpr &AffineExpr::add(ScalarVar s, double coeff)
{
    scalar_terms.emplace_back(s.id, coeff);
    return *this;
}

AffineExpr &AffineExpr::add_constant(double c)
{
    constant += c;
    return *this;
}

AffineExpr &AffineExpr::operator+=(const AffineExpr &other)
{
    mat_terms.insert(mat_terms.end(), other.mat_terms.begin(), other.mat_terms.end());
    scalar_terms.insert(scalar_terms.end(), other.scalar_terms.begin(), other.scalar_terms.end());
    constant += other.constant;
    return *this;
}

AffineExpr &AffineExpr::operator*=(double k)
{
    for (auto &[id, a] : mat_terms)
        a *= k;
    for (auto &[id, c] : scalar_terms)
        c *= k;
    constant *= k;
    return *this;
}

AffineExpr trace_of(MatVar x, int dim)
{
    AffineExpr e;
    e.add(x, CMat::Identity(dim, dim));
    return e;
}

AffineExpr term(ScalarVar s, double coeff)
{
    AffineExpr e;
    e.add(s, coeff);
    return e;
}

MatVar ConicProgram::add_matrix_var(std::string name, int dim, bool psd)
{
    if (dim < 1)
        throw ValidationError("conic: matrix variable dimension must be >= 1");
    mats_.push_back({std::move(name), dim, psd});
    return {static_cast<int>(mats_.size()) - 1};
}

ScalarVar ConicProgram::add_scalar_var(std::string name, Sign sign)
{
    scalars_.push_back({std::move(name), sign});
    return {static_cast<int>(scalars_.size()) - 1};
}

void ConicProgram::add_linear(AffineExpr lhs, Relation rel, double rhs, std::string label)
{
    check_expr(lhs);
    if (!std::isfinite(rhs))
        throw ValidationError("conic: non-finite right-hand side");
    linear_.push_back({std::move(lhs), rel, rhs, std::move(label)});
}

void ConicProgram::add_soc(std::vector<AffineExpr> vec, AffineExpr bound, std::string label)
{
    for (const auto &e : vec)
        check_expr(e);
    check_expr(bound);
    soc_.push_back({std::move(vec), std::move(bound), std::move(label)});
}

void ConicProgram::minimize(AffineExpr objective)
{
    check_expr(objective);
    objective_ = std::move(objective);
}

void ConicProgram::check_expr(const AffineExpr &e) const
{
    for (const auto &[id, a] : e.mat_terms)
    {
        if (id < 0 || id >= static_cast<int>(mats_.size()))
            throw ValidationError("conic: expression references an undeclared matrix variable");
        const int n = mats_[static_cast<std::size_t>(id)].dim;
        if (a.rows() != n || a.cols() != n)
            throw ValidationError("conic: coefficient shape does not match variable '" +
                                  mats_[static_cast<std::size_t>(id)].name + "'");
        if (!a.allFinite())
            throw ValidationError("conic: non-finite coefficient");
        if (!linalg::is_hermitian(a, 1e-10))
            throw ValidationError("conic: coefficient matrix is not Hermitian");
    }
    for (const auto &[id, c] : e.scalar_terms)
    {
        if (id < 0 || id >= static_cast<int>(scalars_.size()))
            throw ValidationError("conic: expression references an undeclared scalar variable");
        if (!std::isfinite(c))
            throw ValidationError("conic: non-finite coefficient");
    }
    if (!std::isfinite(e.constant))
        throw ValidationError("conic: non-finite constant");
}

void ConicProgram::validate() const
{
    for (const auto &c : linear_)
        check_expr(c.lhs);
    for (const auto &c : soc_)
    {
        for (const auto &e : c.vec)
            check_expr(e);
        check_expr(c.bound);
    }
    check_expr(objective_);
}

double evaluate(const AffineExpr &e, const SolverResult &r)
{
    double v = e.constant;
    for (const auto &[id, a] : e.mat_terms)
        v += linalg::inner(a, r.matrices.at(static_cast<std::size_t>(id)));
    for (const auto &[id, c] : e.scalar_terms)
        v += c * r.scalars.at(static_cast<std::size_t>(id));
    return v;
}

} // namespace dtris::conic
