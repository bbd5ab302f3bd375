#pragma once

#include "sonoedit/matrix.hpp"

#include <cstddef>

namespace sonoedit {

inline constexpr double kDefaultCutoff = 1e-8;

// Running uncentered covariance  sigma = K0 * K0^T  over key columns. No
// division by the sample count: the projector only depends on the
// eigenvectors and on eigenvalue ratios.
class CovarianceAccumulator {
public:
    explicit CovarianceAccumulator(std::size_t dim);

    // keys: dim x n_batch. gram += keys * keys^T.
    void accumulate(const Matrix & keys);
    // Adds another accumulator's Gram; the merge order is the caller's.
    void merge(const CovarianceAccumulator & other);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t samples() const noexcept { return samples_; }
    const Matrix & gram() const noexcept { return gram_; }

private:
    std::size_t dim_;
    std::size_t samples_ = 0;
    Matrix gram_;
};

// Orthogonal projector onto the (near-)null space of the preserved
// covariance, with its eigenbasis split into a dominant block and a null
// block:  P = U_null * U_null^T = I - U_dom * U_dom^T.
class NullProjector {
public:
    // Rebuilds a projector from a persisted null basis. u_dom is left empty.
    static NullProjector from_null_basis(Vector eigenvalues, Matrix u_null, double cutoff);

    std::size_t dim() const noexcept { return p_.rows(); }
    std::size_t null_rank() const noexcept { return u_null_.cols(); }
    double cutoff() const noexcept { return cutoff_; }
    const Matrix & matrix() const noexcept { return p_; }
    const Matrix & u_null() const noexcept { return u_null_; }
    const Matrix & u_dom() const noexcept { return u_dom_; }
    const Vector & eigenvalues() const noexcept { return eigenvalues_; }

    Vector apply(std::span<const double> x) const { return matvec(p_, x); }

private:
    friend NullProjector build_projector(const CovarianceAccumulator & acc, double cutoff);
    NullProjector() = default;

    Matrix p_;
    Matrix u_null_;
    Matrix u_dom_;
    Vector eigenvalues_;
    double cutoff_ = kDefaultCutoff;
};

// Eigenvalues with lambda <= cutoff * lambda_max go to the null block.
// Values within 1e-12 * lambda_max of the threshold are kept dominant.
// A zero covariance yields P = I.
NullProjector build_projector(const CovarianceAccumulator & acc, double cutoff = kDefaultCutoff);

struct SharedNullspaceReport {
    double lhs_residual = 0.0;  // ||probe^T K0||
    double rhs_residual = 0.0;  // ||probe^T K0 K0^T||
};

// Evaluates both sides of the left-null-space equivalence between K0 and
// K0 K0^T: the key-side residual on `keys_sample` (held-out columns) and the
// covariance-side residual on the accumulated Gram.
SharedNullspaceReport shared_nullspace_check(const CovarianceAccumulator & acc,
                                             const Matrix & keys_sample,
                                             std::span<const double> probe);

struct HoldoutSplit {
    Matrix train;
    Matrix heldout;
};

// Every tenth column (index % 10 == 9) is held out; the rest are kept for
// accumulation in their original order.
HoldoutSplit split_holdout(const Matrix & keys);

} // namespace sonoedit
