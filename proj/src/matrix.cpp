#include "nexusflow/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "nexusflow/error.hpp"
#include "nexusflow/io.hpp"

namespace nexusflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                                  " does not match " + shape());
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorKind::ShapeMismatch, "ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::ShapeMismatch,
                    std::string(op) + ": " + a.shape() + " vs " + b.shape());
}

}  // namespace

void require_finite(const Matrix& a, const std::string& what) {
    if (!all_finite(a)) throw Error(ErrorKind::NonFinite, what + " produced NaN/Inf");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw Error(ErrorKind::ShapeMismatch, "matmul: " + a.shape() + " x " + b.shape());
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.cols();
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.row(i).data();
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
        }
    }
    require_finite(out, "matmul");
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw Error(ErrorKind::ShapeMismatch, "matmul_bt: " + a.shape() + " x " + b.shape() + "^T");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto br = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
            out(i, j) = s;
        }
    }
    require_finite(out, "matmul_bt");
    return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw Error(ErrorKind::ShapeMismatch, "matmul_at: " + a.shape() + "^T x " + b.shape());
    Matrix out(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto ar = a.row(r);
        auto br = b.row(r);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double v = ar[i];
            if (v == 0.0) continue;
            double* orow = out.row(i).data();
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += v * br[j];
        }
    }
    require_finite(out, "matmul_at");
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    out += b;
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    auto o = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return a;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
    return out;
}

void add_row_vector(Matrix& a, std::span<const double> v) {
    if (v.size() != a.cols())
        throw Error(ErrorKind::ShapeMismatch, "add_row_vector: " + a.shape() + " + vector of " +
                                                  std::to_string(v.size()));
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) r[j] += v[j];
    }
}

std::vector<double> column_sums(const Matrix& a) {
    std::vector<double> s(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) s[j] += r[j];
    }
    return s;
}

std::vector<double> column_means(const Matrix& a) {
    auto s = column_sums(a);
    if (a.rows() > 0)
        for (double& v : s) v /= static_cast<double>(a.rows());
    return s;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols())
        throw Error(ErrorKind::ShapeMismatch, "slice_cols: [" + std::to_string(begin) + ", " +
                                                  std::to_string(begin + count) + ") of " + a.shape());
    Matrix out(a.rows(), count);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto src = a.row(i);
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(i).begin());
    }
    return out;
}

void assign_cols(Matrix& dst, std::size_t begin, const Matrix& src) {
    if (dst.rows() != src.rows() || begin + src.cols() > dst.cols())
        throw Error(ErrorKind::ShapeMismatch, "assign_cols: " + src.shape() + " into " + dst.shape() +
                                                  " at column " + std::to_string(begin));
    for (std::size_t i = 0; i < src.rows(); ++i) {
        auto s = src.row(i);
        std::copy(s.begin(), s.end(), dst.row(i).begin() + static_cast<std::ptrdiff_t>(begin));
    }
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows())
            throw Error(ErrorKind::ShapeMismatch,
                        "select_rows: index " + std::to_string(indices[i]) + " out of " + a.shape());
        auto s = a.row(indices[i]);
        std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
}

Matrix vstack(std::span<const Matrix> parts) {
    if (parts.empty()) return {};
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != parts.front().cols())
            throw Error(ErrorKind::ShapeMismatch, "vstack: " + parts.front().shape() + " vs " + p.shape());
        rows += p.rows();
    }
    Matrix out(rows, parts.front().cols());
    std::size_t r = 0;
    for (const auto& p : parts)
        for (std::size_t i = 0; i < p.rows(); ++i, ++r) {
            auto s = p.row(i);
            std::copy(s.begin(), s.end(), out.row(r).begin());
        }
    return out;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) {
        const double d = std::abs(ad[i] - bd[i]);
        if (std::isnan(d)) return d;
        m = std::max(m, d);
    }
    return m;
}

bool all_finite(const Matrix& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void write_csv(std::ostream& out, const Matrix& a) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out << ',';
            out << io::format_double(r[j]);
        }
        out << '\n';
    }
}

Matrix read_csv(std::istream& in) {
    std::vector<double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = io::split(line, ',');
        if (rows == 0) {
            cols = fields.size();
        } else if (fields.size() != cols) {
            throw Error(ErrorKind::ShapeMismatch, "csv row " + std::to_string(rows) + " has " +
                                                      std::to_string(fields.size()) + " fields, expected " +
                                                      std::to_string(cols));
        }
        for (auto f : fields) data.push_back(io::parse_double(f));
        ++rows;
    }
    return Matrix(rows, cols, std::move(data));
}

}  // namespace nexusflow
