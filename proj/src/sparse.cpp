#include "mfg/sparse.hpp"

#include <algorithm>
#include <stdexcept>

namespace mfg {

CsrMatrix::CsrMatrix(std::size_t rows, std::vector<int> row_start, std::vector<int> columns,
                     std::vector<double> values)
    : rows_(rows), row_start_(std::move(row_start)), columns_(std::move(columns)),
      values_(std::move(values))
{
    if (row_start_.size() != rows_ + 1 || columns_.size() != values_.size() ||
        static_cast<std::size_t>(row_start_.back()) != values_.size())
        throw std::invalid_argument("CsrMatrix: inconsistent storage");
}

CsrMatrix CsrMatrix::from_eigen(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m)
{
    if (m.rows() != m.cols())
        throw std::invalid_argument("CsrMatrix: matrix must be square");
    const auto rows = static_cast<std::size_t>(m.rows());
    std::vector<int> starts(rows + 1, 0);
    std::vector<int> cols;
    std::vector<double> vals;
    cols.reserve(static_cast<std::size_t>(m.nonZeros()));
    vals.reserve(static_cast<std::size_t>(m.nonZeros()));
    for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
            if (it.value() == 0.0)
                continue;
            cols.push_back(static_cast<int>(it.col()));
            vals.push_back(it.value());
        }
        starts[static_cast<std::size_t>(r) + 1] = static_cast<int>(cols.size());
    }
    return CsrMatrix(rows, std::move(starts), std::move(cols), std::move(vals));
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const
{
    if (x.size() != rows_ || y.size() != rows_)
        throw std::invalid_argument("CsrMatrix::multiply: size mismatch");
    for (std::size_t r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (int p = row_start_[r]; p < row_start_[r + 1]; ++p)
            acc += values_[p] * x[columns_[p]];
        y[r] = acc;
    }
}

void CsrMatrix::residual(std::span<const double> x, std::span<const double> b,
                         std::span<double> y) const
{
    if (x.size() != rows_ || b.size() != rows_ || y.size() != rows_)
        throw std::invalid_argument("CsrMatrix::residual: size mismatch");
    for (std::size_t r = 0; r < rows_; ++r) {
        double acc = b[r];
        for (int p = row_start_[r]; p < row_start_[r + 1]; ++p)
            acc -= values_[p] * x[columns_[p]];
        y[r] = acc;
    }
}

double CsrMatrix::at(std::size_t r, std::size_t c) const
{
    const auto first = columns_.begin() + row_start_[r];
    const auto last = columns_.begin() + row_start_[r + 1];
    const auto it = std::lower_bound(first, last, static_cast<int>(c));
    if (it == last || *it != static_cast<int>(c))
        return 0.0;
    return values_[static_cast<std::size_t>(it - columns_.begin())];
}

std::vector<double> CsrMatrix::diagonal() const
{
    std::vector<double> d(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
        d[r] = at(r, r);
    return d;
}

Eigen::MatrixXd CsrMatrix::to_dense() const
{
    const auto n = static_cast<Eigen::Index>(rows_);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t r = 0; r < rows_; ++r)
        for (int p = row_start_[r]; p < row_start_[r + 1]; ++p)
            dense(static_cast<Eigen::Index>(r), columns_[p]) = values_[p];
    return dense;
}

} // namespace mfg
