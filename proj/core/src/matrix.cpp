#include "sonoedit/matrix.hpp"

#include "sonoedit/error.hpp"

#include <cmath>
#include <string>

namespace sonoedit {

namespace {

void require_same_shape(const Matrix & a, const Matrix & b, const char * op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        fail(Errc::ShapeError, std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                   "x" + std::to_string(b.cols()));
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        fail(Errc::ShapeError, "matrix data length " + std::to_string(data_.size()) +
                                   " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    if (!all_finite(data_)) fail(Errc::NonFinite, "matrix contains NaN or Inf");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto & row : rows) {
        if (row.size() != c) fail(Errc::ShapeError, "from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Vector Matrix::col(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) fail(Errc::ShapeError, "set_col: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

bool all_finite(std::span<const double> values) noexcept {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix transpose(const Matrix & a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

Matrix matmul(const Matrix & a, const Matrix & b) {
    if (a.cols() != b.rows()) {
        fail(Errc::ShapeError, "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                   " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    // i-k-j order: each c(i, j) still receives its terms in ascending k.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix gram(const Matrix & a) {
    const std::size_t n = a.rows();
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ri = a.row(i);
        for (std::size_t j = i; j < n; ++j) {
            const double v = dot(ri, a.row(j));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

Matrix add(const Matrix & a, const Matrix & b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
    return c;
}

Matrix sub(const Matrix & a, const Matrix & b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
    return c;
}

Matrix scale(const Matrix & a, double s) {
    Matrix c = a;
    for (double & v : c.data()) v *= s;
    return c;
}

Matrix symmetrize(const Matrix & a) {
    if (!a.is_square()) fail(Errc::NotSquare, "symmetrize: matrix is not square");
    Matrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        s(i, i) = a(i, i);
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

Matrix outer(std::span<const double> u, std::span<const double> v) {
    Matrix m(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) row[j] = u[i] * v[j];
    }
    return m;
}

Matrix hcat(const Matrix & a, const Matrix & b) {
    if (a.cols() == 0) return b;
    if (b.cols() == 0) return a;
    if (a.rows() != b.rows()) fail(Errc::ShapeError, "hcat: row count mismatch");
    Matrix c(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto row = c.row(i);
        const auto ra = a.row(i);
        const auto rb = b.row(i);
        std::copy(ra.begin(), ra.end(), row.begin());
        std::copy(rb.begin(), rb.end(), row.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return c;
}

Matrix col_range(const Matrix & a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.cols()) fail(Errc::ShapeError, "col_range: out of bounds");
    Matrix c(a.rows(), end - begin);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = begin; j < end; ++j) c(i, j - begin) = a(i, j);
    }
    return c;
}

Vector matvec(const Matrix & a, std::span<const double> x) {
    if (a.cols() != x.size()) fail(Errc::ShapeError, "matvec: length mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

Vector vecmat(std::span<const double> x, const Matrix & a) {
    if (a.rows() != x.size()) fail(Errc::ShapeError, "vecmat: length mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto row = a.row(k);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += x[k] * row[j];
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(Errc::ShapeError, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frob_norm(const Matrix & a) { return norm2(a.data()); }

double trace(const Matrix & a) {
    if (!a.is_square()) fail(Errc::NotSquare, "trace: matrix is not square");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

Vector axpy(double alpha, std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(Errc::ShapeError, "axpy: length mismatch");
    Vector out(y.begin(), y.end());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
    return out;
}

Vector sub(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(Errc::ShapeError, "sub: length mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

} // namespace sonoedit
