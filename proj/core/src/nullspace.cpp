#include "sonoedit/nullspace.hpp"

#include "sonoedit/error.hpp"
#include "sonoedit/linalg.hpp"

#include <algorithm>
#include <string>

namespace sonoedit {

CovarianceAccumulator::CovarianceAccumulator(std::size_t dim) : dim_(dim), gram_(dim, dim) {}

void CovarianceAccumulator::accumulate(const Matrix & keys) {
    if (keys.rows() != dim_) {
        fail(Errc::DimMismatch, "accumulate: keys have " + std::to_string(keys.rows()) +
                                    " rows, accumulator dim is " + std::to_string(dim_));
    }
    if (!all_finite(keys.data())) fail(Errc::NonFinite, "accumulate: non-finite key entries");
    if (keys.cols() == 0) return;
    gram_ = add(gram_, sonoedit::gram(keys));
    samples_ += keys.cols();
}

void CovarianceAccumulator::merge(const CovarianceAccumulator & other) {
    if (other.dim_ != dim_) fail(Errc::DimMismatch, "merge: accumulator dims differ");
    gram_ = add(gram_, other.gram_);
    samples_ += other.samples_;
}

NullProjector NullProjector::from_null_basis(Vector eigenvalues, Matrix u_null, double cutoff) {
    const std::size_t d = u_null.rows();
    if (eigenvalues.size() != d) fail(Errc::DimMismatch, "from_null_basis: eigenvalue count != dim");
    if (u_null.cols() > d) fail(Errc::DimMismatch, "from_null_basis: null rank exceeds dim");
    NullProjector proj;
    proj.p_ = gram(u_null);
    proj.u_null_ = std::move(u_null);
    proj.u_dom_ = Matrix(d, 0);
    proj.eigenvalues_ = std::move(eigenvalues);
    proj.cutoff_ = cutoff;
    return proj;
}

NullProjector build_projector(const CovarianceAccumulator & acc, double cutoff) {
    const std::size_t d = acc.dim();
    if (d == 0) fail(Errc::EmptyDim, "build_projector: dimension is zero");
    if (!(cutoff > 0.0 && cutoff < 1.0)) {
        fail(Errc::InvalidArgument, "build_projector: cutoff must lie in (0, 1)");
    }
    if (!all_finite(acc.gram().data())) fail(Errc::NonFinite, "build_projector: non-finite covariance");

    SymEig eig = sym_eig(acc.gram());
    const double lambda_max = std::max(eig.eigenvalues.front(), 0.0);

    std::size_t dominant = 0;
    if (lambda_max > 0.0) {
        const double threshold = cutoff * lambda_max;
        const double tie_band = 1e-12 * lambda_max;
        // Sorted descending: the null block is a suffix.
        while (dominant < d && !(eig.eigenvalues[dominant] < threshold - tie_band)) ++dominant;
    }

    NullProjector proj;
    proj.u_dom_ = col_range(eig.eigenvectors, 0, dominant);
    proj.u_null_ = col_range(eig.eigenvectors, dominant, d);
    proj.p_ = gram(proj.u_null_);
    proj.eigenvalues_ = std::move(eig.eigenvalues);
    proj.cutoff_ = cutoff;
    return proj;
}

SharedNullspaceReport shared_nullspace_check(const CovarianceAccumulator & acc,
                                             const Matrix & keys_sample,
                                             std::span<const double> probe) {
    if (probe.size() != acc.dim() || keys_sample.rows() != acc.dim()) {
        fail(Errc::DimMismatch, "shared_nullspace_check: dimension mismatch");
    }
    if (norm2(probe) == 0.0) fail(Errc::InvalidArgument, "shared_nullspace_check: probe is zero");
    SharedNullspaceReport report;
    report.lhs_residual = norm2(vecmat(probe, keys_sample));
    report.rhs_residual = norm2(vecmat(probe, acc.gram()));
    return report;
}

HoldoutSplit split_holdout(const Matrix & keys) {
    std::size_t held = 0;
    for (std::size_t j = 0; j < keys.cols(); ++j) held += (j % 10 == 9);
    HoldoutSplit split{Matrix(keys.rows(), keys.cols() - held), Matrix(keys.rows(), held)};
    std::size_t ti = 0;
    std::size_t hi = 0;
    for (std::size_t j = 0; j < keys.cols(); ++j) {
        const Vector c = keys.col(j);
        if (j % 10 == 9) {
            split.heldout.set_col(hi++, c);
        } else {
            split.train.set_col(ti++, c);
        }
    }
    return split;
}

} // namespace sonoedit
