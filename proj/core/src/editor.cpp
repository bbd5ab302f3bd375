#include "sonoedit/editor.hpp"

#include "sonoedit/error.hpp"
#include "sonoedit/linalg.hpp"

#include <sstream>
#include <string>

namespace sonoedit {

namespace {

void check_request(const Matrix & w, const EditRequest & req) {
    if (req.key.size() != w.cols()) {
        fail(Errc::DimMismatch, "edit: key length " + std::to_string(req.key.size()) +
                                    " != weight columns " + std::to_string(w.cols()));
    }
    if (req.value.size() != w.rows()) {
        fail(Errc::DimMismatch, "edit: value length " + std::to_string(req.value.size()) +
                                    " != weight rows " + std::to_string(w.rows()));
    }
    if (!all_finite(req.key) || !all_finite(req.value)) fail(Errc::NonFinite, "edit: non-finite request");
}

EditResult finish_single(const Matrix & w, const EditRequest & req, Matrix delta, double null_component,
                         const Matrix & k0_sample) {
    EditResult result;
    result.delta = std::move(delta);
    const Vector edited = matvec(add(w, result.delta), req.key);
    result.target_residual = norm2(sub(edited, req.value));
    result.null_component = null_component;
    if (!k0_sample.empty()) result.constraint_residual = constraint_residual_rel(result.delta, k0_sample);
    return result;
}

} // namespace

double constraint_residual_rel(const Matrix & delta, const Matrix & k0) {
    const double dn = frob_norm(delta);
    const double kn = frob_norm(k0);
    if (dn == 0.0 || kn == 0.0) return 0.0;
    return frob_norm(matmul(delta, k0)) / (dn * kn);
}

EditResult rank_one_edit(const Matrix & w, const EditRequest & req, const NullProjector & proj, double tau,
                         const Matrix & k0_sample) {
    check_request(w, req);
    if (proj.dim() != w.cols()) fail(Errc::DimMismatch, "rank_one_edit: projector dim != weight columns");
    if (!(tau > 0.0)) fail(Errc::InvalidArgument, "rank_one_edit: tau must be positive");

    const double key_norm = norm2(req.key);
    const Vector pk = proj.apply(req.key);
    const double pk_norm = norm2(pk);
    if (key_norm == 0.0 || pk_norm <= tau * key_norm) {
        std::ostringstream msg;
        msg << "key lies in the preserved span: |Pk|/|k| = " << (key_norm > 0.0 ? pk_norm / key_norm : 0.0)
            << " <= tau = " << tau;
        fail(Errc::DegenerateKey, msg.str());
    }

    const Vector residual = sub(req.value, matvec(w, req.key));
    // k^T P k taken against the same pk used in the outer product, so
    // dW k reproduces the residual up to a single rounding.
    const double denom = dot(req.key, pk);
    Matrix delta = outer(residual, pk);
    for (double & v : delta.data()) v /= denom;
    return finish_single(w, req, std::move(delta), pk_norm, k0_sample);
}

EditResult sequential_edit(const Matrix & w, const Matrix & k1, const Matrix & v1,
                           const SequentialEditState & state, const NullProjector & proj, double reg,
                           const Matrix & k0_sample) {
    const std::size_t d = w.cols();
    if (k1.rows() != d) fail(Errc::DimMismatch, "sequential_edit: K1 rows != weight columns");
    if (v1.rows() != w.rows()) fail(Errc::DimMismatch, "sequential_edit: V1 rows != weight rows");
    if (k1.cols() != v1.cols()) fail(Errc::DimMismatch, "sequential_edit: K1 and V1 column counts differ");
    if (k1.cols() == 0) fail(Errc::InvalidArgument, "sequential_edit: empty edit batch");
    if (proj.dim() != d) fail(Errc::DimMismatch, "sequential_edit: projector dim != weight columns");
    if (state.prev_keys.cols() > 0 && state.prev_keys.rows() != d) {
        fail(Errc::DimMismatch, "sequential_edit: K_prev rows != weight columns");
    }
    if (!(reg > 0.0)) fail(Errc::InvalidArgument, "sequential_edit: regularizer must be positive");
    if (!all_finite(k1.data()) || !all_finite(v1.data())) fail(Errc::NonFinite, "sequential_edit: non-finite batch");

    const Matrix & p = proj.matrix();
    const Matrix r = sub(v1, matmul(w, k1));

    Matrix s = gram(k1);
    if (state.prev_keys.cols() > 0) s = add(gram(state.prev_keys), s);
    Matrix m = symmetrize(matmul(matmul(p, s), p));
    for (std::size_t i = 0; i < d; ++i) m(i, i) += reg;

    const Matrix rhs = matmul(matmul(r, transpose(k1)), p);
    Matrix delta = matmul(solve_spd(m, rhs), p);

    EditResult result;
    result.delta = std::move(delta);
    result.target_residual = frob_norm(sub(matmul(add(w, result.delta), k1), v1));
    result.null_component = frob_norm(matmul(p, k1));
    if (!k0_sample.empty()) result.constraint_residual = constraint_residual_rel(result.delta, k0_sample);
    return result;
}

SequentialEditState record_edit(const SequentialEditState & state, const Matrix & k1) {
    if (state.prev_keys.cols() > 0 && state.prev_keys.rows() != k1.rows()) {
        fail(Errc::DimMismatch, "record_edit: key dimension differs from ledger");
    }
    SequentialEditState next;
    next.prev_keys = hcat(state.prev_keys, k1);
    next.edit_count = state.edit_count + k1.cols();
    return next;
}

EditResult naive_edit(const Matrix & w, const EditRequest & req, const Matrix & k0_sample) {
    check_request(w, req);
    const double kk = dot(req.key, req.key);
    if (kk == 0.0) fail(Errc::DegenerateKey, "naive_edit: key is zero");
    const Vector residual = sub(req.value, matvec(w, req.key));
    Matrix delta = outer(residual, req.key);
    for (double & v : delta.data()) v /= kk;
    return finish_single(w, req, std::move(delta), norm2(req.key), k0_sample);
}

} // namespace sonoedit
