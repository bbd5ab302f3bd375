#pragma once

#include "sonoedit/matrix.hpp"

namespace sonoedit {

struct SymEig {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // column j pairs with eigenvalues[j]
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix. The input is
// symmetrized before rotation; asymmetry beyond 1e-10 * ||A||_F is rejected.
// Each eigenvector is sign-normalized so its largest-magnitude entry is
// positive.
SymEig sym_eig(const Matrix & a);

// Solves X * M = B for X. M must be positive definite: its symmetric part is
// Cholesky-factored as a certificate and any pivot below
// 1e-12 * trace(M) / d raises NotPositiveDefinite. Symmetric M is solved with
// that factor; non-symmetric M falls back to pivoted LU.
Matrix solve_spd(const Matrix & m, const Matrix & b);

// Solves X * M = B for general square M with partially pivoted LU.
// Raises Singular when a pivot underflows 1e-14 * max|M|.
Matrix solve_right(const Matrix & m, const Matrix & b);

} // namespace sonoedit
