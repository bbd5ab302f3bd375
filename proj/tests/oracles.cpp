#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using sonoedit::TokenId;
using sonoedit::TokenSeq;
using sonoedit::ToyPlanner;

Matrix triple_loop_matmul(const Matrix & a, const Matrix & b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
    return c;
}

RangeBasis pivoted_qr_range(const Matrix & a, double rel_tol) {
    const std::size_t d = a.rows();
    const std::size_t n = a.cols();
    std::vector<Vector> cols(n, Vector(d));
    double max_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < d; ++i) cols[j][i] = a(i, j);
        double s = 0.0;
        for (double v : cols[j]) s += v * v;
        max_norm = std::max(max_norm, std::sqrt(s));
    }
    std::vector<Vector> basis;
    std::vector<bool> used(n, false);
    const double tol = rel_tol * max_norm;
    while (basis.size() < std::min(d, n)) {
        std::size_t best = n;
        double best_norm = tol;
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            double s = 0.0;
            for (double v : cols[j]) s += v * v;
            if (std::sqrt(s) > best_norm) {
                best_norm = std::sqrt(s);
                best = j;
            }
        }
        if (best == n) break;
        used[best] = true;
        Vector q = cols[best];
        for (int pass = 0; pass < 2; ++pass) {
            for (const Vector & b : basis) {
                double proj = 0.0;
                for (std::size_t i = 0; i < d; ++i) proj += b[i] * q[i];
                for (std::size_t i = 0; i < d; ++i) q[i] -= proj * b[i];
            }
        }
        double s = 0.0;
        for (double v : q) s += v * v;
        const double qn = std::sqrt(s);
        if (qn <= tol) continue;
        for (double & v : q) v /= qn;
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += q[i] * cols[j][i];
            for (std::size_t i = 0; i < d; ++i) cols[j][i] -= proj * q[i];
        }
        basis.push_back(std::move(q));
    }
    RangeBasis out{Matrix(d, basis.size()), basis.size()};
    for (std::size_t j = 0; j < basis.size(); ++j) out.q.set_col(j, basis[j]);
    return out;
}

Matrix null_projector_oracle(const Matrix & k0, double rel_tol) {
    const RangeBasis rb = pivoted_qr_range(k0, rel_tol);
    const std::size_t d = k0.rows();
    Matrix p = Matrix::identity(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < rb.rank; ++k) s += rb.q(i, k) * rb.q(j, k);
            p(i, j) -= s;
        }
    }
    return p;
}

Matrix random_matrix(sonoedit::Rng & rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double & v : m.data()) v = rng.normal();
    return m;
}

Vector random_vector(sonoedit::Rng & rng, std::size_t n) {
    Vector v(n);
    for (double & x : v) x = rng.normal();
    return v;
}

Matrix random_low_rank(sonoedit::Rng & rng, std::size_t d, std::size_t n, std::size_t r) {
    return triple_loop_matmul(random_matrix(rng, d, r), random_matrix(rng, r, n));
}

namespace {

Matrix plus(const Matrix & a, const Matrix & b) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix minus(const Matrix & a, const Matrix & b) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix t(const Matrix & a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

double sq(const Matrix & a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

Matrix mm(const Matrix & a, const Matrix & b) { return triple_loop_matmul(a, b); }

} // namespace

double sequential_objective(const Matrix & w, const Matrix & k1, const Matrix & v1, const Matrix & k_prev,
                            const Matrix & p, double reg, const Matrix & delta) {
    const Matrix dp = mm(delta, p);
    double j = sq(minus(mm(plus(w, dp), k1), v1)) + reg * sq(dp);
    if (k_prev.cols() > 0) j += sq(mm(dp, k_prev));
    return j;
}

DescentResult minimize_sequential_objective(const Matrix & w, const Matrix & k1, const Matrix & v1,
                                            const Matrix & k_prev, const Matrix & p, double reg, double grad_tol,
                                            std::size_t max_iter) {
    // Hessian (per row) is 2 P (K1 K1^T + reg I + Kp Kp^T) P; a Frobenius bound
    // on its spectral norm gives a safe step.
    Matrix s = mm(k1, t(k1));
    if (k_prev.cols() > 0) s = plus(s, mm(k_prev, t(k_prev)));
    const double lipschitz = 2.0 * (std::sqrt(sq(s)) + reg);
    const double step = 1.0 / lipschitz;
    const Matrix r = minus(v1, mm(w, k1));
    const Matrix rk = mm(r, t(k1));

    Matrix d(w.rows(), w.cols());
    DescentResult out{d, std::numeric_limits<double>::infinity(), 0};
    for (std::size_t it = 0; it < max_iter; ++it) {
        // grad = 2 (D S + reg D - R K1^T) P for D in range(P)
        Matrix g = minus(mm(d, s), rk);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = 2.0 * (g.data()[i] + reg * d.data()[i]);
        g = mm(g, p);
        const double gn = std::sqrt(sq(g));
        out.grad_norm = gn;
        out.iterations = it;
        if (gn <= grad_tol) break;
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] -= step * g.data()[i];
    }
    out.delta = d;
    return out;
}

Matrix one_layer_gradient(const ToyPlanner & model, const TokenSeq & prompt, TokenId target) {
    const std::size_t n = prompt.size();
    const std::size_t dm = model.config.d_model;
    const auto & w1 = model.blocks.at(0).w1;
    const auto & w2 = model.blocks.at(0).w2;
    // Keys at the last position only: its mix is h_last + mean(h).
    Vector mean(dm, 0.0);
    for (TokenId tok : prompt)
        for (std::size_t c = 0; c < dm; ++c) mean[c] += model.embed(tok, c);
    for (double & v : mean) v /= static_cast<double>(n);
    Vector mix(dm);
    for (std::size_t c = 0; c < dm; ++c) mix[c] = model.embed(prompt.back(), c) + mean[c];
    Vector key(w1.rows());
    for (std::size_t k = 0; k < w1.rows(); ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < dm; ++c) s += w1(k, c) * mix[c];
        key[k] = std::tanh(s);
    }
    Vector h(dm);
    for (std::size_t c = 0; c < dm; ++c) {
        double s = model.embed(prompt.back(), c);
        for (std::size_t k = 0; k < key.size(); ++k) s += w2(c, k) * key[k];
        h[c] = s;
    }
    Vector z(model.config.vocab);
    for (std::size_t v = 0; v < z.size(); ++v) {
        double s = 0.0;
        for (std::size_t c = 0; c < dm; ++c) s += model.unembed(v, c) * h[c];
        z[v] = s;
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - zmax);
    Vector err(z.size());
    for (std::size_t v = 0; v < z.size(); ++v) err[v] = std::exp(z[v] - zmax) / total - (v == target ? 1.0 : 0.0);
    Matrix g(dm, key.size());
    for (std::size_t c = 0; c < dm; ++c) {
        double back = 0.0;
        for (std::size_t v = 0; v < z.size(); ++v) back += model.unembed(v, c) * err[v];
        for (std::size_t k = 0; k < key.size(); ++k) g(c, k) = back * key[k];
    }
    return g;
}

ScaleInterval one_layer_value_scale(const ToyPlanner & model, const TokenSeq & prompt, TokenId target, double margin) {
    const auto clean = sonoedit::forward(model, prompt);
    const Vector & z0 = clean.logits;
    std::size_t rival = sonoedit::argmax(z0);
    if (rival == target) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < z0.size(); ++j) {
            if (j != target && z0[j] > best) {
                best = z0[j];
                rival = j;
            }
        }
    }
    const std::size_t dm = model.config.d_model;
    Vector u(dm);
    double un = 0.0;
    for (std::size_t c = 0; c < dm; ++c) {
        u[c] = model.unembed(target, c) - model.unembed(rival, c);
        un += u[c] * u[c];
    }
    un = std::sqrt(un);
    for (double & v : u) v /= un;
    // Forced logits are z0 + c * (U u), linear in c.
    double c_min = 0.0;
    double c_max = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < z0.size(); ++j) {
        if (j == target) continue;
        double slope = 0.0;
        for (std::size_t c = 0; c < dm; ++c) slope += (model.unembed(target, c) - model.unembed(j, c)) * u[c];
        // Need gap + c * slope >= margin.
        const double gap = z0[target] - z0[j];
        if (slope > 0.0) {
            c_min = std::max(c_min, (margin - gap) / slope);
        } else if (slope < 0.0) {
            c_max = std::min(c_max, (gap - margin) / -slope);
        } else if (gap < margin) {
            return {};
        }
    }
    return {c_min, c_max, c_min <= c_max};
}

} // namespace oracle
