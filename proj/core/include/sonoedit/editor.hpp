#pragma once

#include "sonoedit/matrix.hpp"
#include "sonoedit/nullspace.hpp"

#include <cstddef>

namespace sonoedit {

inline constexpr double kDefaultTau = 1e-6;

struct EditRequest {
    Vector key;    // k*, input to the edited layer at the error location
    Vector value;  // v*, desired output of the edited layer for k*
};

// Keys of every edit already committed to the layer, one column per edit.
struct SequentialEditState {
    Matrix prev_keys;
    std::size_t edit_count = 0;

    static SequentialEditState empty(std::size_t dim) { return {Matrix(dim, 0), 0}; }
};

struct EditResult {
    Matrix delta;                      // dW, d_out x d_in; never applied in place
    double target_residual = 0.0;      // ||(W + dW) K1 - V1||_F
    double constraint_residual = 0.0;  // ||dW K0||_F / (||dW||_F ||K0||_F); 0 without a sample
    double null_component = 0.0;       // ||P K1||_F (||P k*|| for a single key)
};

// ||dW K0||_F / (||dW||_F ||K0||_F), defined as 0 when either norm is 0.
double constraint_residual_rel(const Matrix & delta, const Matrix & k0);

// Null-space constrained rank-one edit
//   dW = (v* - W k*) (P k*)^T / (k*^T P k*)
// which satisfies (W + dW) k* = v* and dW = dW P. Raises DegenerateKey when
// ||P k*|| <= tau ||k*||, i.e. the key lies in the preserved span.
// `k0_sample` (optional) fills EditResult::constraint_residual.
EditResult rank_one_edit(const Matrix & w, const EditRequest & req, const NullProjector & proj,
                         double tau = kDefaultTau, const Matrix & k0_sample = {});

// Batched edit that also protects previously edited keys. Minimizes
//   J = ||(W + X P) K1 - V1||^2 + reg ||X P||^2 + ||X P K_prev||^2
// with closed form  dW = R K1^T P (S P + reg I)^{-1},  R = V1 - W K1,
// S = K_prev K_prev^T + K1 K1^T. Any solution satisfies dW = dW P, so the
// same dW solves the symmetric system dW (P S P + reg I) = R K1^T P, which
// is what gets factored (Cholesky, eigenvalues >= reg). The result is
// right-multiplied by P once more so the range constraint holds to rounding.
EditResult sequential_edit(const Matrix & w, const Matrix & k1, const Matrix & v1,
                           const SequentialEditState & state, const NullProjector & proj,
                           double reg = 1.0, const Matrix & k0_sample = {});

// Appends k1's columns to the ledger.
SequentialEditState record_edit(const SequentialEditState & state, const Matrix & k1);

// Unconstrained baseline: the rank-one edit with P = I,
//   dW = (v* - W k*) k*^T / ||k*||^2.
EditResult naive_edit(const Matrix & w, const EditRequest & req, const Matrix & k0_sample = {});

} // namespace sonoedit
