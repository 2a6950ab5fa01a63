#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace nexusflow {

/// Row-major dense matrix of doubles. Rows are samples throughout the library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::string shape() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T and a^T * b without materializing the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix matmul_at(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix& operator+=(Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

void add_row_vector(Matrix& a, std::span<const double> v);
std::vector<double> column_sums(const Matrix& a);
std::vector<double> column_means(const Matrix& a);

// Columns [begin, begin + count).
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count);
void assign_cols(Matrix& dst, std::size_t begin, const Matrix& src);
Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices);
Matrix vstack(std::span<const Matrix> parts);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);

// Throws ErrorKind::NonFinite naming `what` if any entry is NaN/Inf.
void require_finite(const Matrix& a, const std::string& what);

/// CSV: one line per row, '.' decimal, no header, shortest round-trip digits.
void write_csv(std::ostream& out, const Matrix& a);
Matrix read_csv(std::istream& in);

}  // namespace nexusflow
