#include "sonoedit/linalg.hpp"

#include "sonoedit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sonoedit {

namespace {

constexpr int kMaxSweeps = 100;

double max_abs(const Matrix & a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double asymmetry(const Matrix & a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double d = a(i, j) - a(j, i);
            s += 2.0 * d * d;
        }
    }
    return std::sqrt(s);
}

void jacobi_rotate(Matrix & a, Matrix & v, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows();
    const double apq = a(p, q);
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    double t;
    if (std::abs(theta) > 1e150) {
        t = 0.5 / theta;
    } else {
        t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    }
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;
    const double tau = s / (1.0 + c);

    a(p, p) -= t * apq;
    a(q, q) += t * apq;
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (r == p || r == q) continue;
        const double arp = a(r, p);
        const double arq = a(r, q);
        const double nrp = arp - s * (arq + tau * arp);
        const double nrq = arq + s * (arp - tau * arq);
        a(r, p) = nrp;
        a(p, r) = nrp;
        a(r, q) = nrq;
        a(q, r) = nrq;
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double vrp = v(r, p);
        const double vrq = v(r, q);
        v(r, p) = vrp - s * (vrq + tau * vrp);
        v(r, q) = vrq + s * (vrp - tau * vrq);
    }
}

// Lower Cholesky factor of a symmetric matrix; throws when a pivot falls
// below `floor`.
Matrix cholesky(const Matrix & s, double floor) {
    const std::size_t n = s.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = s(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > floor)) {
            fail(Errc::NotPositiveDefinite,
                 "cholesky pivot " + std::to_string(j) + " = " + std::to_string(d) +
                     " below floor " + std::to_string(floor));
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double x = s(i, j);
            for (std::size_t k = 0; k < j; ++k) x -= l(i, k) * l(j, k);
            l(i, j) = x / ljj;
        }
    }
    return l;
}

void check_rhs(const Matrix & m, const Matrix & b) {
    if (!m.is_square()) fail(Errc::NotSquare, "solve: coefficient matrix is not square");
    if (b.cols() != m.rows()) {
        fail(Errc::ShapeError, "solve: rhs has " + std::to_string(b.cols()) + " columns, expected " +
                                   std::to_string(m.rows()));
    }
    if (!all_finite(m.data()) || !all_finite(b.data())) fail(Errc::NonFinite, "solve: non-finite input");
}

} // namespace

SymEig sym_eig(const Matrix & input) {
    if (!input.is_square()) fail(Errc::NotSquare, "sym_eig: matrix is not square");
    if (!all_finite(input.data())) fail(Errc::NonFinite, "sym_eig: non-finite entries");
    const double norm = frob_norm(input);
    if (asymmetry(input) > 1e-10 * norm) fail(Errc::NotSymmetric, "sym_eig: matrix is not symmetric");

    const std::size_t n = input.rows();
    Matrix a = symmetrize(input);
    Matrix v = Matrix::identity(n);
    const double negligible = 1e-17 * norm;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                if (std::abs(apq) <= negligible) {
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    continue;
                }
                jacobi_rotate(a, v, p, q);
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    SymEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.eigenvalues[j] = a(src, src);
        std::size_t pivot = 0;
        for (std::size_t r = 1; r < n; ++r) {
            if (std::abs(v(r, src)) > std::abs(v(pivot, src))) pivot = r;
        }
        const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, j) = sign * v(r, src);
    }
    return out;
}

Matrix solve_spd(const Matrix & m, const Matrix & b) {
    check_rhs(m, b);
    const std::size_t n = m.rows();
    if (n == 0) return b;

    const Matrix s = symmetrize(m);
    const double tr = trace(s);
    if (!(tr > 0.0)) fail(Errc::NotPositiveDefinite, "solve_spd: non-positive trace");
    const Matrix l = cholesky(s, 1e-12 * tr / static_cast<double>(n));

    const bool symmetric = asymmetry(m) <= 1e-14 * max_abs(m) * static_cast<double>(n);
    if (!symmetric) return solve_right(m, b);

    // Each row x of X satisfies M x^T = b^T; forward then back substitution.
    Matrix x(b.rows(), n);
    Vector y(n);
    for (std::size_t row = 0; row < b.rows(); ++row) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = b(row, i);
            for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * y[k];
            y[i] = acc / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * x(row, k);
            x(row, ii) = acc / l(ii, ii);
        }
    }
    return x;
}

Matrix solve_right(const Matrix & m, const Matrix & b) {
    check_rhs(m, b);
    const std::size_t n = m.rows();
    if (n == 0) return b;

    // Factor A = M^T = P^T L U; row x of X solves A x^T = b^T.
    Matrix lu = transpose(m);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const double floor = 1e-14 * max_abs(m);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
        }
        if (!(std::abs(lu(piv, k)) > floor)) {
            fail(Errc::Singular, "solve_right: pivot " + std::to_string(k) + " vanished");
        }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = lu(i, k) / lu(k, k);
            lu(i, k) = f;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
        }
    }

    Matrix x(b.rows(), n);
    Vector y(n);
    for (std::size_t row = 0; row < b.rows(); ++row) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = b(row, perm[i]);
            for (std::size_t k = 0; k < i; ++k) acc -= lu(i, k) * y[k];
            y[i] = acc;
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) acc -= lu(ii, k) * x(row, k);
            x(row, ii) = acc / lu(ii, ii);
        }
    }
    return x;
}

} // namespace sonoedit
