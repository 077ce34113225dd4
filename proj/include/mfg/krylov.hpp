#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfg/sparse.hpp"

namespace mfg {

/// A linear map on R^n given by its action.
struct LinearOperator {
    std::size_t size = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;

    std::vector<double> operator()(std::span<const double> x) const;
};

LinearOperator identity_operator(std::size_t n);
LinearOperator matrix_operator(const CsrMatrix& matrix);
/// x -> D^{-1} x with D the diagonal of `matrix`.
LinearOperator jacobi_operator(const CsrMatrix& matrix);

/// Stopping threshold max(absolute, relative * ||r_0||) on the Euclidean norm
/// of the true residual b - A x.
struct Tolerance {
    double absolute = 0.0;
    double relative = 0.0;

    double threshold(double initial_residual) const;
};

struct SolveReport {
    std::vector<double> solution;
    /// Completed iterations.  BiCGStab counts an exit after the first half
    /// of an iteration as 0.5.
    double iterations = 0.0;
    double initial_residual = 0.0;
    double final_residual = 0.0;
    bool converged = false;
    int restarts = 0;
    std::optional<std::string> breakdown;
};

/// Preconditioned conjugate gradients.  Reports a breakdown on non-positive
/// curvature or non-finite iterates instead of returning a silently wrong answer.
SolveReport conjugate_gradient(const LinearOperator& op, std::span<const double> b,
                               const LinearOperator& precond, Tolerance tol, int max_iterations,
                               std::span<const double> x0 = {});

/// BiCGStab on P_L A P_R x_hat = P_L (b - A x0), x = x0 + P_R x_hat.
/// The scalars are built from the preconditioned residuals, the stopping
/// test uses the true residual ||b - A x||.  On a vanishing denominator the
/// iteration restarts once from the current iterate before reporting a breakdown.
SolveReport bicgstab(const LinearOperator& op, std::span<const double> b,
                     const LinearOperator& left, const LinearOperator& right,
                     std::span<const double> x0, Tolerance tol, int max_iterations);

/// Dense Cholesky factorization; throws std::runtime_error on a non-positive pivot.
class DenseCholesky {
public:
    explicit DenseCholesky(const Eigen::MatrixXd& matrix);

    std::size_t size() const { return static_cast<std::size_t>(factor_.rows()); }
    void solve(std::span<const double> b, std::span<double> x) const;
    std::vector<double> solve(std::span<const double> b) const;

private:
    Eigen::LLT<Eigen::MatrixXd> factor_;
};

std::vector<double> dense_cholesky_solve(const Eigen::MatrixXd& matrix, std::span<const double> b);

struct ConditionEstimate {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double kappa = 0.0;
    int iterations = 0;
    /// max over the two extreme Ritz pairs of beta_k |s_k| / |theta|, an upper
    /// bound on the relative distance of each Ritz value to the spectrum.
    double ritz_residual = 0.0;
    /// Both extreme Ritz pairs met the requested tolerance (always false when
    /// no tolerance was requested, unless the Krylov space became invariant).
    bool converged = false;
};

struct LanczosOptions {
    int max_iterations = 300;
    /// Stop once both extreme Ritz pairs have relative residual bound below
    /// this value; 0 runs exactly max_iterations steps (or n, if smaller).
    double ritz_tolerance = 0.0;
    /// Inner product <x, M y>: estimates the spectrum of an operator that is
    /// self-adjoint in that inner product (for instance P Q with symmetric P, M = Q).
    const LinearOperator* metric = nullptr;
    unsigned seed = 12345;
};

/// Extreme Ritz values of a symmetric positive definite operator from Lanczos
/// with full reorthogonalization.  Throws std::runtime_error when the smallest
/// Ritz value is not positive.
ConditionEstimate lanczos_condition_estimate(const LinearOperator& op, std::size_t n,
                                             const LanczosOptions& options);

/// Fixed number of steps, no convergence test.
ConditionEstimate lanczos_condition_estimate(const LinearOperator& op, std::size_t n,
                                             int iterations,
                                             const LinearOperator* metric = nullptr,
                                             unsigned seed = 12345);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

} // namespace mfg
