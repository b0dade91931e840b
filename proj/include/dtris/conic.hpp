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

#include <string>
#include <utility>
#include <vector>

#include "dtris/linalg.hpp"

namespace dtris::conic
{

struct MatVar
{
    int id = -1;
};

struct ScalarVar
{
    int id = -1;
};

enum class Sign
{
    Free,
    Nonneg
};

enum class Relation
{
    LessEqual,
    Equal,
    GreaterEqual
};

enum class Status
{
    Optimal,
    Inaccurate, // stalled; best iterate within 1e4 * tol
    Infeasible,
    Unbounded,
    NumericalFailure
};

const char *to_string(Status s);

// sum_i tr(A_i X_i) + sum_j c_j s_j + constant, with Hermitian A_i.
struct AffineExpr
{
    std::vector<std::pair<int, CMat>> mat_terms;
    std::vector<std::pair<int, double>> scalar_terms;
    double constant = 0.0;

    AffineExpr() = default;
    AffineExpr(double c) : constant(c) {}

    AffineExpr &add(MatVar x, const CMat &coeff);
    AffineExpr &add(ScalarVar s, double coeff);
    AffineExpr &add_constant(double c);
    AffineExpr &operator+=(const AffineExpr &other);
    AffineExpr &operator*=(double k);
};

AffineExpr trace_of(MatVar x, int dim);
AffineExpr term(ScalarVar s, double coeff = 1.0);

struct LinearConstraint
{
    AffineExpr lhs;
    Relation rel = Relation::Equal;
    double rhs = 0.0;
    std::string label;
};

// || (vec_1, ..., vec_k) ||_2 <= bound
struct SocConstraint
{
    std::vector<AffineExpr> vec;
    AffineExpr bound;
    std::string label;
};

struct MatVarInfo
{
    std::string name;
    int dim = 0;
    bool psd = true;
};

struct ScalarVarInfo
{
    std::string name;
    Sign sign = Sign::Nonneg;
};

// Solver-agnostic description of a minimization over Hermitian matrix
// variables and real scalars with linear, second-order-cone and PSD
// constraints.
class ConicProgram
{
public:
    MatVar add_matrix_var(std::string name, int dim, bool psd = true);
    ScalarVar add_scalar_var(std::string name, Sign sign = Sign::Nonneg);

    void add_linear(AffineExpr lhs, Relation rel, double rhs, std::string label = {});
    void add_soc(std::vector<AffineExpr> vec, AffineExpr bound, std::string label = {});
    void minimize(AffineExpr objective);

    // Throws ValidationError on unknown variables, wrong coefficient shapes
    // or non-Hermitian coefficients.
    void validate() const;

    const std::vector<MatVarInfo> &matrix_vars() const { return mats_; }
    const std::vector<ScalarVarInfo> &scalar_vars() const { return scalars_; }
    const std::vector<LinearConstraint> &linear_constraints() const { return linear_; }
    const std::vector<SocConstraint> &soc_constraints() const { return soc_; }
    const AffineExpr &objective() const { return objective_; }

private:
    void check_expr(const AffineExpr &e) const;

    std::vector<MatVarInfo> mats_;
    std::vector<ScalarVarInfo> scalars_;
    std::vector<LinearConstraint> linear_;
    std::vector<SocConstraint> soc_;
    AffineExpr objective_;
};

struct SolverOptions
{
    double tol = 1e-8;
    int max_iterations = 120;
    double step_fraction = 0.99;
    bool verbose = false;
};

struct SolverResult
{
    Status status = Status::NumericalFailure;
    std::vector<CMat> matrices;
    std::vector<double> scalars;
    double objective = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;

    const CMat &value(MatVar x) const { return matrices.at(static_cast<std::size_t>(x.id)); }
    double value(ScalarVar s) const { return scalars.at(static_cast<std::size_t>(s.id)); }
    bool optimal() const { return status == Status::Optimal; }
    bool usable() const { return status == Status::Optimal || status == Status::Inaccurate; }
};

// Homogeneous self-dual interior-point method with Nesterov-Todd scaling
// over Hermitian PSD, second-order and nonnegative cones. Deterministic.
SolverResult solve(const ConicProgram &program, const SolverOptions &options = {});

// Value of an affine expression at a solution.
double evaluate(const AffineExpr &e, const SolverResult &r);

} // namespace dtris::conic
