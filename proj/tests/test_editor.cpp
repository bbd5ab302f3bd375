#include "oracles.hpp"

#include "sonoedit/editor.hpp"
#include "sonoedit/error.hpp"
#include "sonoedit/linalg.hpp"
#include "sonoedit/nullspace.hpp"

#include <doctest.h>

#include <cmath>

using namespace sonoedit;

namespace {

NullProjector projector_of(const Matrix & k0) {
    CovarianceAccumulator acc(k0.rows());
    acc.accumulate(k0);
    return build_projector(acc);
}

NullProjector identity_projector(std::size_t d) { return build_projector(CovarianceAccumulator(d)); }

Errc code_of(auto && fn) {
    try {
        fn();
    } catch (const Error & e) {
        return e.code();
    }
    return Errc::Io;
}

struct Setup {
    Matrix w;
    Matrix k0;
    NullProjector proj;
};

Setup random_setup(Rng & rng, std::size_t d_out, std::size_t d_in, std::size_t rank) {
    Matrix w = oracle::random_matrix(rng, d_out, d_in);
    Matrix k0 = oracle::random_low_rank(rng, d_in, 3 * d_in, rank);
    NullProjector proj = projector_of(k0);
    return {std::move(w), std::move(k0), std::move(proj)};
}

} // namespace

TEST_CASE("rank-one edit on P = diag(0, 1, 1)") {
    const NullProjector proj = projector_of(Matrix::column(Vector{1, 0, 0}));
    const Matrix w(2, 3);
    const EditResult r = rank_one_edit(w, {Vector{1, 1, 0}, Vector{1, 2}}, proj);
    CHECK(frob_norm(sub(r.delta, Matrix::from_rows({{0, 1, 0}, {0, 2, 0}}))) <= 1e-15);
    CHECK(r.target_residual <= 1e-15);
    CHECK(r.null_component == doctest::Approx(1.0));

    CHECK(code_of([&] { rank_one_edit(w, {Vector{1, 0, 0}, Vector{1, 2}}, proj); }) == Errc::DegenerateKey);
    CHECK(code_of([&] { rank_one_edit(w, {Vector{1, 1}, Vector{1, 2}}, proj); }) == Errc::DimMismatch);
}

TEST_CASE("rank-one edit with P = I equals the naive edit") {
    Rng rng(31);
    const Matrix w = oracle::random_matrix(rng, 4, 5);
    const EditRequest req{oracle::random_vector(rng, 5), oracle::random_vector(rng, 4)};
    const EditResult a = rank_one_edit(w, req, identity_projector(5));
    const EditResult b = naive_edit(w, req);
    CHECK(frob_norm(sub(a.delta, b.delta)) <= 1e-13 * frob_norm(b.delta));
    CHECK(norm2(sub(matvec(add(w, b.delta), req.key), req.value)) <= 1e-12 * norm2(req.value));
}

TEST_CASE("rank-one edit hits the target, respects the null space and is rank one") {
    Rng rng(32);
    for (int t = 0; t < 50; ++t) {
        const std::size_t d_in = 3 + rng.below(14);
        const std::size_t d_out = 1 + rng.below(10);
        const Setup s = random_setup(rng, d_out, d_in, 1 + rng.below(d_in - 1));
        const EditRequest req{oracle::random_vector(rng, d_in), oracle::random_vector(rng, d_out)};
        const EditResult r = rank_one_edit(s.w, req, s.proj, kDefaultTau, s.k0);

        const double size = norm2(req.value) + frob_norm(s.w) * norm2(req.key);
        CHECK(norm2(sub(matvec(add(s.w, r.delta), req.key), req.value)) <= 1e-10 * size);
        CHECK(frob_norm(sub(matmul(r.delta, s.proj.matrix()), r.delta)) <= 1e-12 * frob_norm(r.delta));
        CHECK(r.constraint_residual <= 1e-9);
        CHECK(constraint_residual_rel(r.delta, s.k0) == doctest::Approx(r.constraint_residual));
        // Rank one: every row is parallel to P k*.
        const Vector pk = s.proj.apply(req.key);
        const Matrix along = scale(matmul(matmul(r.delta, Matrix::column(pk)), Matrix::row_vector(pk)),
                                   1.0 / dot(pk, pk));
        CHECK(frob_norm(sub(r.delta, along)) <= 1e-12 * frob_norm(r.delta));
    }
}

TEST_CASE("rank-one edit is the minimum-norm update in range(P)") {
    Rng rng(33);
    for (int t = 0; t < 20; ++t) {
        const Setup s = random_setup(rng, 4, 8, 4);
        const EditRequest req{oracle::random_vector(rng, 8), oracle::random_vector(rng, 4)};
        const Matrix delta = rank_one_edit(s.w, req, s.proj).delta;
        const Vector pk = s.proj.apply(req.key);
        const Vector px = s.proj.apply(oracle::random_vector(rng, 8));
        // b in range(P) with b . k = 0, so delta + a b^T is still feasible.
        const Vector b = axpy(-dot(req.key, px) / dot(req.key, pk), pk, px);
        const Matrix other = add(delta, outer(oracle::random_vector(rng, 4), b));
        CHECK(norm2(sub(matvec(add(s.w, other), req.key), req.value)) <= 1e-9 * (1.0 + norm2(req.value)));
        CHECK(frob_norm(other) >= frob_norm(delta));
    }
}

TEST_CASE("constraint_residual_rel is zero for zero operands") {
    CHECK(constraint_residual_rel(Matrix(2, 3), Matrix(3, 4, 1.0)) == 0.0);
    CHECK(constraint_residual_rel(Matrix(2, 3, 1.0), Matrix(3, 0)) == 0.0);
    CHECK(constraint_residual_rel(Matrix(2, 3, 1.0), Matrix(3, 2)) == 0.0);
}

TEST_CASE("sequential edit on an empty ledger with S = e1 e1^T") {
    const Matrix w(2, 3);
    const Matrix k1 = Matrix::column(Vector{1, 0, 0});
    const Matrix v1 = Matrix::column(Vector{2, -4});
    // (PSP + I) = diag(2, 1, 1), so dW = (r / 2) e1^T.
    const EditResult r = sequential_edit(w, k1, v1, SequentialEditState::empty(3), identity_projector(3));
    CHECK(frob_norm(sub(r.delta, Matrix::from_rows({{1, 0, 0}, {-2, 0, 0}}))) <= 1e-15);
}

TEST_CASE("sequential edit matches the gradient-descent minimizer") {
    Rng rng(34);
    for (int t = 0; t < 6; ++t) {
        const std::size_t d_in = 4 + rng.below(4);
        const std::size_t d_out = 2 + rng.below(3);
        const Setup s = random_setup(rng, d_out, d_in, 2);
        const Matrix k1 = oracle::random_matrix(rng, d_in, 2);
        const Matrix v1 = oracle::random_matrix(rng, d_out, 2);
        const Matrix kp = oracle::random_matrix(rng, d_in, 1 + rng.below(2));
        const SequentialEditState state{kp, kp.cols()};
        const double reg = 0.5;

        const EditResult r = sequential_edit(s.w, k1, v1, state, s.proj, reg);
        const oracle::DescentResult gd =
            oracle::minimize_sequential_objective(s.w, k1, v1, kp, s.proj.matrix(), reg, 1e-11);
        REQUIRE(gd.grad_norm <= 1e-11);
        CHECK(frob_norm(sub(r.delta, gd.delta)) <= 1e-8 * (1.0 + frob_norm(gd.delta)));
        const double j_closed = oracle::sequential_objective(s.w, k1, v1, kp, s.proj.matrix(), reg, r.delta);
        const double j_gd = oracle::sequential_objective(s.w, k1, v1, kp, s.proj.matrix(), reg, gd.delta);
        CHECK(j_closed <= j_gd * (1.0 + 1e-10) + 1e-14);
    }
}

TEST_CASE("sequential edit agrees with an LU solve of the unsymmetric closed form") {
    Rng rng(35);
    for (int t = 0; t < 20; ++t) {
        const Setup s = random_setup(rng, 5, 10, 6);
        const Matrix k1 = oracle::random_matrix(rng, 10, 3);
        const Matrix v1 = oracle::random_matrix(rng, 5, 3);
        const Matrix kp = oracle::random_matrix(rng, 10, 2);
        const double reg = 1.0;
        const Matrix & p = s.proj.matrix();
        // dW = R K1^T P (S P + reg I)^{-1}
        Matrix m = matmul(add(gram(kp), gram(k1)), p);
        for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += reg;
        const Matrix rhs = matmul(matmul(sub(v1, matmul(s.w, k1)), transpose(k1)), p);
        const Matrix lu = solve_right(m, rhs);
        const EditResult r = sequential_edit(s.w, k1, v1, {kp, 2}, s.proj, reg);
        CHECK(frob_norm(sub(r.delta, lu)) <= 1e-9 * (1.0 + frob_norm(lu)));
        CHECK(frob_norm(sub(matmul(r.delta, p), r.delta)) <= 1e-12 * (1.0 + frob_norm(r.delta)));
    }
}

TEST_CASE("previous keys act like extra targets pinned to W K_prev") {
    Rng rng(36);
    const Setup s = random_setup(rng, 3, 9, 3);
    const Matrix k1 = oracle::random_matrix(rng, 9, 2);
    const Matrix v1 = oracle::random_matrix(rng, 3, 2);
    const Matrix kp = oracle::random_matrix(rng, 9, 3);
    const EditResult with_state = sequential_edit(s.w, k1, v1, {kp, 3}, s.proj);
    const EditResult batched =
        sequential_edit(s.w, hcat(k1, kp), hcat(v1, matmul(s.w, kp)), SequentialEditState::empty(9), s.proj);
    CHECK(frob_norm(sub(with_state.delta, batched.delta)) <= 1e-10 * (1.0 + frob_norm(batched.delta)));
}

TEST_CASE("a second edit leaves the first one in place") {
    Rng rng(37);
    const Setup s = random_setup(rng, 6, 12, 4);
    const double reg = 1e-6;
    const Matrix ka = oracle::random_matrix(rng, 12, 1);
    const Matrix va = oracle::random_matrix(rng, 6, 1);
    const EditResult first = sequential_edit(s.w, ka, va, SequentialEditState::empty(12), s.proj, reg);
    const Matrix w1 = add(s.w, first.delta);
    CHECK(frob_norm(sub(matmul(w1, ka), va)) <= 1e-4 * frob_norm(va));

    const SequentialEditState state = record_edit(SequentialEditState::empty(12), ka);
    CHECK(state.edit_count == 1);
    CHECK(state.prev_keys == ka);

    const Matrix kb = oracle::random_matrix(rng, 12, 1);
    const Matrix vb = oracle::random_matrix(rng, 6, 1);
    const EditResult second = sequential_edit(w1, kb, vb, state, s.proj, reg, s.k0);
    const Matrix w2 = add(w1, second.delta);
    CHECK(frob_norm(sub(matmul(w2, kb), vb)) <= 1e-4 * frob_norm(vb));
    CHECK(frob_norm(sub(matmul(w2, ka), va)) <= 1e-4 * frob_norm(va));
    CHECK(second.constraint_residual <= 1e-9);
}

TEST_CASE("re-running a satisfied edit is a no-op") {
    Rng rng(38);
    const Setup s = random_setup(rng, 4, 8, 3);
    const EditRequest req{oracle::random_vector(rng, 8), oracle::random_vector(rng, 4)};
    const Matrix edited = add(s.w, rank_one_edit(s.w, req, s.proj).delta);
    CHECK(frob_norm(rank_one_edit(edited, req, s.proj).delta) <= 1e-12 * frob_norm(s.w));
    const Matrix k1 = Matrix::column(req.key);
    const Matrix v1 = Matrix::column(req.value);
    CHECK(frob_norm(sequential_edit(edited, k1, v1, SequentialEditState::empty(8), s.proj).delta) <=
          1e-12 * frob_norm(s.w));
}

TEST_CASE("sequential edit validates shapes") {
    const NullProjector proj = identity_projector(3);
    CHECK(code_of([&] { sequential_edit(Matrix(2, 3), Matrix(3, 1), Matrix(2, 2), SequentialEditState::empty(3), proj); }) ==
          Errc::DimMismatch);
    CHECK(code_of([&] { sequential_edit(Matrix(2, 4), Matrix(4, 1), Matrix(2, 1), SequentialEditState::empty(4), proj); }) ==
          Errc::DimMismatch);
}
