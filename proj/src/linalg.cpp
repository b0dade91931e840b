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

#include "dtris/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace dtris::linalg
{

CVec vec(const CMat &a)
{
    if (a.size() == 0)
        throw ValidationError("vec: empty matrix");
    return Eigen::Map<const CVec>(a.data(), a.size());
}

CMat unvec(const CVec &v, Eigen::Index rows, Eigen::Index cols)
{
    if (rows * cols != v.size())
        throw ValidationError("unvec: size mismatch");
    return Eigen::Map<const CMat>(v.data(), rows, cols);
}

CMat kron(const CMat &a, const CMat &b)
{
    if (a.size() == 0 || b.size() == 0)
        throw ValidationError("kron: empty operand");
    const Eigen::Index rb = b.rows(), cb = b.cols();
    CMat out(a.rows() * rb, a.cols() * cb);
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            out.block(i * rb, j * cb, rb, cb) = a(i, j) * b;
    return out;
}

bool is_hermitian(const CMat &a, double rel_tol)
{
    if (a.rows() != a.cols())
        return false;
    if (a.size() == 0)
        return true;
    const double scale = a.cwiseAbs().maxCoeff();
    if (scale == 0.0)
        return true;
    const double asym = (a - a.adjoint()).cwiseAbs().maxCoeff();
    return asym <= rel_tol * scale;
}

CMat hermitian_part(const CMat &a)
{
    return 0.5 * (a + a.adjoint());
}

HermitianEig eigh(const CMat &a, double hermitian_tol)
{
    if (a.rows() != a.cols() || a.size() == 0)
        throw ValidationError("eigh: expected a non-empty square matrix");
    if (!is_hermitian(a, hermitian_tol))
        throw ValidationError("eigh: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(a));
    if (es.info() != Eigen::Success)
        throw NumericalError("eigh: eigendecomposition failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

CMat inv_sqrt_psd(const CMat &s, double reg)
{
    if (reg < 0.0)
        throw ValidationError("inv_sqrt_psd: negative regularizer");
    const auto [lam, v] = eigh(s);
    const Eigen::Index n = lam.size();
    const double lmax = std::max(lam.maxCoeff(), 0.0);
    if (lam.minCoeff() < -1e-8 * lmax)
        throw NotPsdError("inv_sqrt_psd: matrix is not positive semidefinite");

    if (reg == 0.0 && lmax > 0.0 && lam.minCoeff() <= 1e-12 * lmax)
        reg = 1e-10 * std::max(s.trace().real(), lmax) / static_cast<double>(n);
    if (lmax == 0.0 && reg == 0.0)
        throw NumericalError("inv_sqrt_psd: zero matrix is not invertible");

    RVec d(n);
    for (Eigen::Index i = 0; i < n; ++i)
        d(i) = 1.0 / std::sqrt(std::max(lam(i), 0.0) + reg);
    CMat t = v * d.asDiagonal() * v.adjoint();
    t = hermitian_part(t);
    require_finite(t, "inv_sqrt_psd");
    return t;
}

CMat sqrt_psd(const CMat &s)
{
    const auto [lam, v] = eigh(s);
    RVec d = lam.cwiseMax(0.0).cwiseSqrt();
    return hermitian_part(v * d.asDiagonal() * v.adjoint());
}

double lambda_max(const CMat &a)
{
    return eigh(a).values.maxCoeff();
}

std::pair<double, CVec> dominant_eig(const CMat &a)
{
    const auto es = eigh(a);
    const Eigen::Index k = es.values.size() - 1;
    return {es.values(k), es.vectors.col(k)};
}

void require_finite(const CMat &a, const std::string &what)
{
    if (!a.allFinite())
        throw NumericalError(what + ": non-finite entries");
}

double inner(const CMat &a, const CMat &b)
{
    return (a.conjugate().cwiseProduct(b)).sum().real();
}

} // namespace dtris::linalg
