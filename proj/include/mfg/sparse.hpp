#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace mfg {

/// Compressed-row sparse matrix.  Both triangles are stored so Gauss-Seidel
/// can sweep rows directly; column indices are sorted within each row.
class CsrMatrix {
public:
    CsrMatrix() = default;
    CsrMatrix(std::size_t rows, std::vector<int> row_start, std::vector<int> columns,
              std::vector<double> values);

    static CsrMatrix from_eigen(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m);

    std::size_t rows() const { return rows_; }
    std::size_t nonzeros() const { return values_.size(); }
    std::span<const int> row_start() const { return row_start_; }
    std::span<const int> columns() const { return columns_; }
    std::span<const double> values() const { return values_; }
    std::size_t row_nonzeros(std::size_t r) const
    {
        return static_cast<std::size_t>(row_start_[r + 1] - row_start_[r]);
    }

    /// y = A x
    void multiply(std::span<const double> x, std::span<double> y) const;
    /// y = b - A x
    void residual(std::span<const double> x, std::span<const double> b, std::span<double> y) const;

    double at(std::size_t r, std::size_t c) const;
    std::vector<double> diagonal() const;
    Eigen::MatrixXd to_dense() const;

private:
    std::size_t rows_ = 0;
    std::vector<int> row_start_{0};
    std::vector<int> columns_;
    std::vector<double> values_;
};

} // namespace mfg
