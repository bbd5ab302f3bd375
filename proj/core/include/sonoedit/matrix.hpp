#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace sonoedit {

using Vector = std::vector<double>;

// Dense row-major real matrix. All reductions (matmul, norms, dot products)
// accumulate left-to-right in index order so identical inputs give
// bit-identical outputs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    // Throws ShapeError on length mismatch and NonFinite on NaN/Inf entries.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diag(std::span<const double> values);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::span<const double> values);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double & operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Vector col(std::size_t c) const;
    void set_col(std::size_t c, std::span<const double> values);

    bool operator==(const Matrix & other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool all_finite(std::span<const double> values) noexcept;

Matrix transpose(const Matrix & a);
Matrix matmul(const Matrix & a, const Matrix & b);
// a * a^T, computed on the upper triangle and mirrored so the result is
// exactly symmetric.
Matrix gram(const Matrix & a);
Matrix add(const Matrix & a, const Matrix & b);
Matrix sub(const Matrix & a, const Matrix & b);
Matrix scale(const Matrix & a, double s);
Matrix symmetrize(const Matrix & a);
Matrix outer(std::span<const double> u, std::span<const double> v);

// Horizontal concatenation; an empty operand (0 columns) is the identity.
Matrix hcat(const Matrix & a, const Matrix & b);
Matrix col_range(const Matrix & a, std::size_t begin, std::size_t end);

Vector matvec(const Matrix & a, std::span<const double> x);
// x^T * a as a vector of length a.cols().
Vector vecmat(std::span<const double> x, const Matrix & a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frob_norm(const Matrix & a);
double trace(const Matrix & a);

Vector axpy(double alpha, std::span<const double> x, std::span<const double> y);
Vector sub(std::span<const double> a, std::span<const double> b);

inline Matrix operator+(const Matrix & a, const Matrix & b) { return add(a, b); }
inline Matrix operator-(const Matrix & a, const Matrix & b) { return sub(a, b); }
inline Matrix operator*(const Matrix & a, const Matrix & b) { return matmul(a, b); }
inline Matrix operator*(double s, const Matrix & a) { return scale(a, s); }

} // namespace sonoedit
