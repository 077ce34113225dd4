#include "mfg/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace mfg {

double dot(std::span<const double> a, std::span<const double> b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> LinearOperator::operator()(std::span<const double> x) const
{
    std::vector<double> y(size);
    apply(x, y);
    return y;
}

LinearOperator identity_operator(std::size_t n)
{
    return {n, [](std::span<const double> x, std::span<double> y) {
                std::copy(x.begin(), x.end(), y.begin());
            }};
}

LinearOperator matrix_operator(const CsrMatrix& matrix)
{
    return {matrix.rows(),
            [&matrix](std::span<const double> x, std::span<double> y) { matrix.multiply(x, y); }};
}

LinearOperator jacobi_operator(const CsrMatrix& matrix)
{
    std::vector<double> inv = matrix.diagonal();
    for (double& d : inv) {
        if (d == 0.0)
            throw std::invalid_argument("jacobi_operator: zero diagonal entry");
        d = 1.0 / d;
    }
    return {matrix.rows(), [inv = std::move(inv)](std::span<const double> x, std::span<double> y) {
                for (std::size_t i = 0; i < x.size(); ++i)
                    y[i] = inv[i] * x[i];
            }};
}

double Tolerance::threshold(double initial_residual) const
{
    return std::max(absolute, relative * initial_residual);
}

namespace {

void axpy(double a, std::span<const double> x, std::span<double> y)
{
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] += a * x[i];
}

bool all_finite(std::span<const double> x)
{
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

void check_sizes(const LinearOperator& op, std::span<const double> b, std::span<const double> x0,
                 const char* who)
{
    if (b.size() != op.size || (!x0.empty() && x0.size() != op.size))
        throw std::invalid_argument(std::string(who) + ": vector size does not match operator");
}

} // namespace

SolveReport conjugate_gradient(const LinearOperator& op, std::span<const double> b,
                               const LinearOperator& precond, Tolerance tol, int max_iterations,
                               std::span<const double> x0)
{
    check_sizes(op, b, x0, "conjugate_gradient");
    const std::size_t n = op.size;
    SolveReport report;
    std::vector<double> x(n, 0.0);
    if (!x0.empty())
        std::copy(x0.begin(), x0.end(), x.begin());

    std::vector<double> r(n), z(n), p(n), q(n);
    op.apply(x, q);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - q[i];
    double res = norm2(r);
    report.initial_residual = res;
    const double threshold = tol.threshold(res);

    precond.apply(r, z);
    p = z;
    double rz = dot(r, z);
    int it = 0;
    while (res > threshold && it < max_iterations) {
        op.apply(p, q);
        const double curvature = dot(p, q);
        if (!(curvature > 0.0) || !std::isfinite(curvature)) {
            report.breakdown = "non-positive curvature";
            break;
        }
        const double alpha = rz / curvature;
        axpy(alpha, p, x);
        axpy(-alpha, q, r);
        ++it;
        res = norm2(r);
        if (!std::isfinite(res)) {
            report.breakdown = "non-finite residual";
            break;
        }
        if (res <= threshold)
            break;
        precond.apply(r, z);
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = z[i] + beta * p[i];
    }

    op.apply(x, q);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - q[i];
    report.final_residual = norm2(r);
    report.iterations = it;
    report.converged = !report.breakdown && all_finite(x) && report.final_residual <= threshold;
    report.solution = std::move(x);
    return report;
}

SolveReport bicgstab(const LinearOperator& op, std::span<const double> b,
                     const LinearOperator& left, const LinearOperator& right,
                     std::span<const double> x0, Tolerance tol, int max_iterations)
{
    check_sizes(op, b, x0, "bicgstab");
    const std::size_t n = op.size;
    SolveReport report;
    std::vector<double> x(n, 0.0);
    if (!x0.empty())
        std::copy(x0.begin(), x0.end(), x.begin());

    std::vector<double> r(n), r_hat(n), r_hat0(n), p_hat(n), v(n), v_hat(n), s(n), s_hat(n),
        t(n), t_hat(n), right_p(n), right_s(n);

    auto true_residual = [&]() {
        op.apply(x, v);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = b[i] - v[i];
        return norm2(r);
    };

    double res = true_residual();
    report.initial_residual = res;
    const double threshold = tol.threshold(res);
    double iterations = 0.0;
    constexpr int max_restarts = 1;
    constexpr double tiny = 1e-14;

    while (res > threshold && iterations < max_iterations) {
        // (re)start from the current iterate with r = b - A x
        left.apply(r, r_hat);
        r_hat0 = r_hat;
        p_hat = r_hat;
        double rho = dot(r_hat, r_hat0);
        const double r_hat0_norm = std::sqrt(rho);
        std::optional<std::string> failure;

        while (iterations < max_iterations) {
            right.apply(p_hat, right_p);
            op.apply(right_p, v);
            left.apply(v, v_hat);
            const double denom = dot(v_hat, r_hat0);
            if (!std::isfinite(denom) || std::abs(denom) <= tiny * norm2(v_hat) * r_hat0_norm) {
                failure = "<v_hat, r_hat0> vanished";
                break;
            }
            const double alpha = rho / denom;
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = r[i] - alpha * v[i];
                // P_L s = P_L r - alpha P_L v by linearity of P_L
                s_hat[i] = r_hat[i] - alpha * v_hat[i];
            }
            if (norm2(s) <= threshold) {
                axpy(alpha, right_p, x);
                r = s;
                iterations += 0.5;
                break;
            }
            right.apply(s_hat, right_s);
            op.apply(right_s, t);
            left.apply(t, t_hat);
            const double tt = dot(t_hat, t_hat);
            if (!(tt > 0.0) || !std::isfinite(tt)) {
                failure = "<t_hat, t_hat> vanished";
                break;
            }
            const double omega = dot(s_hat, t_hat) / tt;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += alpha * right_p[i] + omega * right_s[i];
                r[i] = s[i] - omega * t[i];
                r_hat[i] = s_hat[i] - omega * t_hat[i];
            }
            iterations += 1.0;
            if (!all_finite(r)) {
                failure = "non-finite residual";
                break;
            }
            if (norm2(r) <= threshold)
                break;
            const double rho_next = dot(r_hat, r_hat0);
            if (omega == 0.0 || std::abs(rho_next) <= tiny * norm2(r_hat) * r_hat0_norm) {
                failure = "rho or omega vanished";
                break;
            }
            const double beta = (alpha / omega) * (rho_next / rho);
            rho = rho_next;
            for (std::size_t i = 0; i < n; ++i)
                p_hat[i] = r_hat[i] + beta * (p_hat[i] - omega * v_hat[i]);
        }

        res = true_residual();
        if (failure) {
            if (!all_finite(x) || report.restarts >= max_restarts) {
                report.breakdown = failure;
                break;
            }
            ++report.restarts;
        }
        // the recurrence residual may drift from the true one; loop again if so
    }

    report.iterations = iterations;
    report.final_residual = res;
    report.converged = !report.breakdown && std::isfinite(res) && res <= threshold;
    report.solution = std::move(x);
    return report;
}

DenseCholesky::DenseCholesky(const Eigen::MatrixXd& matrix) : factor_(matrix)
{
    if (matrix.rows() != matrix.cols())
        throw std::invalid_argument("DenseCholesky: matrix must be square");
    if (factor_.info() != Eigen::Success)
        throw std::runtime_error("DenseCholesky: matrix is not positive definite");
    const auto diag = factor_.matrixLLT().diagonal();
    if (!(diag.minCoeff() > 0.0) || !diag.allFinite())
        throw std::runtime_error("DenseCholesky: non-positive pivot");
}

void DenseCholesky::solve(std::span<const double> b, std::span<double> x) const
{
    const auto n = static_cast<Eigen::Index>(size());
    if (static_cast<Eigen::Index>(b.size()) != n || static_cast<Eigen::Index>(x.size()) != n)
        throw std::invalid_argument("DenseCholesky::solve: size mismatch");
    Eigen::Map<const Eigen::VectorXd> rhs(b.data(), n);
    Eigen::Map<Eigen::VectorXd> out(x.data(), n);
    out = factor_.solve(rhs);
}

std::vector<double> DenseCholesky::solve(std::span<const double> b) const
{
    std::vector<double> x(size());
    solve(b, x);
    return x;
}

std::vector<double> dense_cholesky_solve(const Eigen::MatrixXd& matrix, std::span<const double> b)
{
    return DenseCholesky(matrix).solve(b);
}

namespace {

/// Number of eigenvalues below x of the symmetric tridiagonal (alpha, beta).
int sturm_count(const std::vector<double>& alpha, const std::vector<double>& beta, double x)
{
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double off = i == 0 ? 0.0 : beta[i - 1] * beta[i - 1];
        d = alpha[i] - x - (i == 0 ? 0.0 : off / d);
        if (d == 0.0)
            d = -std::numeric_limits<double>::min();
        if (d < 0.0)
            ++count;
    }
    return count;
}

/// Smallest (largest = false) or largest eigenvalue by bisection on the Sturm count.
double extreme_eigenvalue(const std::vector<double>& alpha, const std::vector<double>& beta,
                          bool largest)
{
    const std::size_t m = alpha.size();
    double lo = alpha[0], hi = alpha[0];
    for (std::size_t i = 0; i < m; ++i) {
        const double r = (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i + 1 < m ? std::abs(beta[i]) : 0.0);
        lo = std::min(lo, alpha[i] - r);
        hi = std::max(hi, alpha[i] + r);
    }
    const int target = largest ? static_cast<int>(m) : 1;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        (sturm_count(alpha, beta, mid) >= target ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// |last component| of the unit eigenvector for the extreme eigenvalue theta.
/// sign * (T - theta I) is positive semi-definite for an extreme theta, so a
/// slightly shifted LDL^T inverse iteration is stable without pivoting.
double last_eigenvector_component(const std::vector<double>& alpha, const std::vector<double>& beta,
                                  double theta, bool largest)
{
    const std::size_t m = alpha.size();
    if (m == 1)
        return 1.0;
    const double sign = largest ? -1.0 : 1.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        scale = std::max(scale, std::abs(alpha[i]) + (i + 1 < m ? std::abs(beta[i]) : 0.0));
    const double shift = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    std::vector<double> d(m), l(m, 0.0), x(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double diag = sign * (alpha[i] - theta) + shift;
        if (i == 0) {
            d[i] = diag;
        } else {
            l[i] = sign * beta[i - 1] / d[i - 1];
            d[i] = diag - l[i] * l[i] * d[i - 1];
        }
        if (!(d[i] > 0.0))
            d[i] = shift;
    }
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 1; i < m; ++i)
            x[i] -= l[i] * x[i - 1];
        for (std::size_t i = 0; i < m; ++i)
            x[i] /= d[i];
        for (std::size_t i = m - 1; i-- > 0;)
            x[i] -= l[i + 1] * x[i + 1];
        double norm = 0.0;
        for (double v : x)
            norm = std::max(norm, std::abs(v));
        for (double& v : x)
            v /= norm;
    }
    double n2 = 0.0;
    for (double v : x)
        n2 += v * v;
    return std::abs(x.back()) / std::sqrt(n2);
}

} // namespace

ConditionEstimate lanczos_condition_estimate(const LinearOperator& op, std::size_t n,
                                             int iterations, const LinearOperator* metric,
                                             unsigned seed)
{
    LanczosOptions options;
    options.max_iterations = iterations;
    options.metric = metric;
    options.seed = seed;
    return lanczos_condition_estimate(op, n, options);
}

ConditionEstimate lanczos_condition_estimate(const LinearOperator& op, std::size_t n,
                                             const LanczosOptions& options)
{
    const LinearOperator* metric = options.metric;
    if (op.size != n || (metric && metric->size != n))
        throw std::invalid_argument("lanczos_condition_estimate: operator size mismatch");
    if (options.max_iterations < 1)
        throw std::invalid_argument("lanczos_condition_estimate: iterations must be positive");
    if (!(options.ritz_tolerance >= 0.0))
        throw std::invalid_argument("lanczos_condition_estimate: ritz_tolerance must be >= 0");
    const int steps =
        static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(options.max_iterations), n));

    auto apply_metric = [&](std::span<const double> x, std::span<double> y) {
        if (metric)
            metric->apply(x, y);
        else
            std::copy(x.begin(), x.end(), y.begin());
    };

    // v_i, and M v_i only when a metric is given
    std::vector<std::vector<double>> basis, weighted;
    auto weighted_at = [&](std::size_t i) -> const std::vector<double>& {
        return metric ? weighted[i] : basis[i];
    };

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss;
    std::vector<double> v(n), mv(n), w(n), mw(n);
    for (double& x : v)
        x = gauss(rng);
    apply_metric(v, mv);
    {
        const double scale = 1.0 / std::sqrt(dot(v, mv));
        for (std::size_t i = 0; i < n; ++i) {
            v[i] *= scale;
            mv[i] *= scale;
        }
    }
    basis.push_back(v);
    if (metric)
        weighted.push_back(mv);

    std::vector<double> alpha, beta;
    ConditionEstimate est;
    auto assess = [&](double next_beta) {
        est.lambda_min = extreme_eigenvalue(alpha, beta, false);
        est.lambda_max = extreme_eigenvalue(alpha, beta, true);
        const double rmin =
            next_beta * last_eigenvector_component(alpha, beta, est.lambda_min, false);
        const double rmax =
            next_beta * last_eigenvector_component(alpha, beta, est.lambda_max, true);
        est.ritz_residual =
            std::max(rmin / std::abs(est.lambda_min), rmax / std::abs(est.lambda_max));
    };

    for (int j = 0; j < steps; ++j) {
        op.apply(basis[static_cast<std::size_t>(j)], w);
        const double a = dot(w, weighted_at(static_cast<std::size_t>(j)));
        alpha.push_back(a);
        // full reorthogonalization, two passes of classical Gram-Schmidt
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < basis.size(); ++i) {
                const double c = dot(w, weighted_at(i));
                axpy(-c, basis[i], w);
            }
        }
        apply_metric(w, mw);
        const double b2 = dot(w, mw);
        const double b = b2 > 0.0 ? std::sqrt(b2) : 0.0;
        if (b <= 1e-12 * std::abs(a)) {
            // invariant subspace: the Ritz values are exact eigenvalues
            assess(0.0);
            est.converged = true;
            break;
        }
        const bool last = j + 1 == steps;
        if (last || (options.ritz_tolerance > 0.0 && (j + 1) % 10 == 0)) {
            assess(b);
            if (options.ritz_tolerance > 0.0 && est.ritz_residual <= options.ritz_tolerance) {
                est.converged = true;
                break;
            }
            if (last)
                break;
        }
        beta.push_back(b);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] /= b;
            mw[i] /= b;
        }
        basis.push_back(w);
        if (metric)
            weighted.push_back(mw);
    }

    est.iterations = static_cast<int>(alpha.size());
    if (!(est.lambda_min > 0.0))
        throw std::runtime_error("lanczos_condition_estimate: smallest Ritz value is not positive");
    est.kappa = est.lambda_max / est.lambda_min;
    return est;
}

} // namespace mfg
