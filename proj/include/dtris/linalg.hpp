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

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dtris
{

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

// Input violates a documented precondition (shape, range, symmetry).
class ValidationError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

// A computation could not be carried out to the required accuracy.
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Hermitian input has a significantly negative eigenvalue.
class NotPsdError : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

namespace linalg
{

// Column-stacking: vec(A)[i + j*rows] = A(i, j).
CVec vec(const CMat &a);

// Inverse of vec for a rows x cols matrix.
CMat unvec(const CVec &v, Eigen::Index rows, Eigen::Index cols);

// Standard Kronecker product, size (rA*rB) x (cA*cB).
CMat kron(const CMat &a, const CMat &b);

// max|A - A^H| <= rel_tol * max|A|. Empty and all-zero matrices count as Hermitian.
bool is_hermitian(const CMat &a, double rel_tol = 1e-12);

// (A + A^H) / 2
CMat hermitian_part(const CMat &a);

struct HermitianEig
{
    RVec values;  // ascending
    CMat vectors; // columns are orthonormal eigenvectors
};

// Eigendecomposition of a Hermitian matrix. The input is validated against
// is_hermitian(tol) and symmetrized before decomposition.
HermitianEig eigh(const CMat &a, double hermitian_tol = 1e-12);

// T = (S + reg*I)^{-1/2}, Hermitian PSD. Eigenvalues of S are clamped at zero
// before adding reg. If reg == 0 and S is numerically singular (condition
// estimate above 1e12), reg falls back to 1e-10 * trace(S) / dim.
// Throws ValidationError for non-Hermitian S and NotPsdError when an
// eigenvalue is below -1e-8 * lambda_max.
CMat inv_sqrt_psd(const CMat &s, double reg = 0.0);

// (S)^{1/2} for Hermitian PSD S (negative round-off eigenvalues clamped).
CMat sqrt_psd(const CMat &s);

// Largest eigenvalue of a Hermitian matrix.
double lambda_max(const CMat &a);

// Dominant eigenpair of a Hermitian matrix, eigenvector unit norm.
std::pair<double, CVec> dominant_eig(const CMat &a);

// Throws NumericalError naming `what` if any entry is NaN or Inf.
void require_finite(const CMat &a, const std::string &what);

// Real inner product <A, B> = Re tr(A^H B).
double inner(const CMat &a, const CMat &b);

} // namespace linalg
} // namespace dtris
