#include <doctest.h>

#include "mfg/krylov.hpp"
#include "mfg/operators.hpp"
#include "support.hpp"

using namespace mfg;
using testing::uniform;

namespace {

Eigen::MatrixXd random_spd(int n, double shift)
{
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            g(i, j) = uniform(-1.0, 1.0);
    return g * g.transpose() + shift * Eigen::MatrixXd::Identity(n, n);
}

LinearOperator dense_operator(const Eigen::MatrixXd& a)
{
    return {static_cast<std::size_t>(a.rows()), [&a](std::span<const double> x, std::span<double> y) {
                Eigen::Map<Eigen::VectorXd>(y.data(), a.rows()) =
                    a * Eigen::Map<const Eigen::VectorXd>(x.data(), a.cols());
            }};
}

std::vector<double> random_vector(std::size_t n)
{
    std::vector<double> v(n);
    for (double& x : v)
        x = uniform(-1.0, 1.0);
    return v;
}

double relative_difference(std::span<const double> x, const Eigen::VectorXd& ref)
{
    return (testing::as_vector(x) - ref).norm() / ref.norm();
}

double true_residual(const LinearOperator& op, std::span<const double> b, std::span<const double> x)
{
    const std::vector<double> ax = op(x);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
        s += (b[i] - ax[i]) * (b[i] - ax[i]);
    return std::sqrt(s);
}

} // namespace

TEST_CASE("tolerance threshold")
{
    CHECK(Tolerance{1e-6, 0.0}.threshold(10.0) == 1e-6);
    CHECK(Tolerance{1e-6, 1e-3}.threshold(10.0) == doctest::Approx(1e-2));
    CHECK(Tolerance{1e-1, 1e-3}.threshold(10.0) == doctest::Approx(1e-1));
}

TEST_CASE("assembled and matrix-free operators are linear")
{
    const GridSpec g(8, 3, 1.0, 0.2);
    const CsrMatrix q = assemble_Q(g);
    const LinearOperator op = matrix_operator(q);
    const auto x = random_vector(op.size), y = random_vector(op.size);
    const double a = 0.7, b = -1.3;
    std::vector<double> combo(op.size);
    for (std::size_t i = 0; i < combo.size(); ++i)
        combo[i] = a * x[i] + b * y[i];
    const auto lhs = op(combo), ox = op(x), oy = op(y);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < combo.size(); ++i) {
        err = std::max(err, std::abs(lhs[i] - a * ox[i] - b * oy[i]));
        scale = std::max(scale, std::abs(lhs[i]));
    }
    CHECK(err <= 1e-10 * scale);
}

TEST_CASE("identity systems are solved immediately")
{
    const auto b = random_vector(30);
    const LinearOperator id = identity_operator(30);
    const auto cg = conjugate_gradient(id, b, id, {1e-12, 0.0}, 10);
    CHECK(cg.converged);
    CHECK(cg.iterations == 1.0);
    CHECK(testing::max_abs_diff(cg.solution, b) <= 1e-14);

    const auto bi = bicgstab(id, b, id, id, {}, {1e-12, 0.0}, 10);
    CHECK(bi.converged);
    CHECK(bi.iterations <= 1.0);
    CHECK(testing::max_abs_diff(bi.solution, b) <= 1e-14);
}

TEST_CASE("CG and BiCGStab match the dense solve of the normal matrix")
{
    const GridSpec g(8, 3, 1.0, 5e-4);
    const CsrMatrix q = assemble_Q(g);
    const Eigen::MatrixXd dense = q.to_dense();
    const LinearOperator op = matrix_operator(q);
    const auto b = random_vector(op.size);
    const Eigen::VectorXd ref = dense.llt().solve(testing::as_vector(b));
    const double bn = testing::as_vector(b).norm();

    const auto cg = conjugate_gradient(op, b, identity_operator(op.size), {1e-12 * bn, 0.0}, 5000);
    CHECK(cg.converged);
    CHECK(relative_difference(cg.solution, ref) <= 1e-8);

    const LinearOperator jac = jacobi_operator(q);
    const auto bi =
        bicgstab(op, b, jac, identity_operator(op.size), {}, {1e-12 * bn, 0.0}, 5000);
    CHECK(bi.converged);
    CHECK(relative_difference(bi.solution, ref) <= 1e-8);
    CHECK(true_residual(op, b, bi.solution) <= 1.01 * bi.final_residual);

    const auto pcg = conjugate_gradient(op, b, jac, {1e-12 * bn, 0.0}, 5000);
    CHECK(pcg.converged);
    CHECK(pcg.iterations <= cg.iterations);
    CHECK(relative_difference(pcg.solution, ref) <= 1e-8);

    const std::vector<double> dense_x = dense_cholesky_solve(dense, b);
    CHECK(relative_difference(dense_x, ref) <= 1e-12);
}

TEST_CASE("random SPD systems against the dense oracle")
{
    for (int t = 0; t < 20; ++t) {
        const int n = testing::uniform_int(5, 200);
        const Eigen::MatrixXd a = random_spd(n, uniform(0.1, 5.0));
        const LinearOperator op = dense_operator(a);
        const auto b = random_vector(static_cast<std::size_t>(n));
        const Eigen::VectorXd ref = a.llt().solve(testing::as_vector(b));
        const double bn = testing::as_vector(b).norm();
        const Tolerance tol{1e-14 * bn * a.norm(), 0.0};
        const LinearOperator id = identity_operator(static_cast<std::size_t>(n));

        const auto cg = conjugate_gradient(op, b, id, tol, 20 * n);
        CAPTURE(n);
        CHECK(cg.converged);
        CHECK(relative_difference(cg.solution, ref) <= 1e-8);
        CHECK(true_residual(op, b, cg.solution) <= 1.01 * cg.final_residual);

        const auto bi = bicgstab(op, b, id, id, {}, tol, 20 * n);
        CHECK(bi.converged);
        CHECK(relative_difference(bi.solution, ref) <= 1e-8);
        CHECK(true_residual(op, b, bi.solution) <= 1.01 * bi.final_residual);
    }
}

TEST_CASE("preconditioning does not change the converged solution")
{
    const int n = 80;
    const Eigen::MatrixXd a = random_spd(n, 1.0);
    const Eigen::MatrixXd p = random_spd(n, 2.0).inverse();
    const LinearOperator op = dense_operator(a), pop = dense_operator(p);
    const LinearOperator id = identity_operator(n);
    const auto b = random_vector(n);
    const Eigen::VectorXd ref = a.llt().solve(testing::as_vector(b));
    const double tol = 1e-10;
    const auto plain = bicgstab(op, b, id, id, {}, {tol, 0.0}, 2000);
    const auto left = bicgstab(op, b, pop, id, {}, {tol, 0.0}, 2000);
    const auto right = bicgstab(op, b, id, pop, {}, {tol, 0.0}, 2000);
    const auto pcg = conjugate_gradient(op, b, pop, {tol, 0.0}, 2000);
    REQUIRE(plain.converged);
    REQUIRE(left.converged);
    REQUIRE(right.converged);
    REQUIRE(pcg.converged);
    // x - x_ref = A^{-1} r, so 10 tol / lambda_min bounds the distance
    const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().minCoeff();
    const double bound = 10.0 * tol / lambda_min;
    for (const auto* r : {&plain, &left, &right, &pcg})
        CHECK((testing::as_vector(r->solution) - ref).norm() <= bound);
}

TEST_CASE("warm starts and convergence reports")
{
    const GridSpec g(8, 3, 1.0, 5e-4);
    const CsrMatrix q = assemble_Q(g);
    const LinearOperator op = matrix_operator(q);
    const auto b = random_vector(op.size);
    const LinearOperator id = identity_operator(op.size);
    const auto first = bicgstab(op, b, id, id, {}, {1e-10 * testing::as_vector(b).norm(), 0.0}, 5000);
    REQUIRE(first.converged);
    const auto again = bicgstab(op, b, id, id, first.solution, {1e-9 * testing::as_vector(b).norm(), 0.0}, 5000);
    CHECK(again.converged);
    CHECK(again.iterations == 0.0);
    CHECK(again.initial_residual <= 1e-9 * testing::as_vector(b).norm());

    const auto capped = bicgstab(op, b, id, id, {}, {1e-14, 0.0}, 2);
    CHECK_FALSE(capped.converged);
    CHECK(capped.iterations <= 2.0);
    CHECK(true_residual(op, b, capped.solution) <= 1.01 * capped.final_residual);
}

TEST_CASE("indefinite operators never produce a silent wrong answer")
{
    const int n = 40;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        a(i, i) = (i % 2 == 0) ? 1.0 + i : -1.0 - i;
    const LinearOperator op = dense_operator(a);
    const auto b = random_vector(n);
    const auto r = conjugate_gradient(op, b, identity_operator(n), {1e-10, 0.0}, 200);
    if (r.converged)
        CHECK(true_residual(op, b, r.solution) <= 1e-10 * 1.01);
    else
        CHECK((r.breakdown.has_value() || r.iterations >= 200));
    CHECK(r.breakdown.has_value());
}

TEST_CASE("dense Cholesky")
{
    const auto b = random_vector(12);
    CHECK(testing::max_abs_diff(dense_cholesky_solve(Eigen::MatrixXd::Identity(12, 12), b), b) == 0.0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(12, 12);
    for (int i = 0; i < 12; ++i)
        d(i, i) = 0.5 + i;
    const auto x = dense_cholesky_solve(d, b);
    for (int i = 0; i < 12; ++i)
        CHECK(x[i] == doctest::Approx(b[i] / (0.5 + i)).epsilon(1e-15));

    const Eigen::MatrixXd a = random_spd(50, 0.5);
    const auto b50 = random_vector(50);
    const auto x50 = dense_cholesky_solve(a, b50);
    CHECK((a * testing::as_vector(x50) - testing::as_vector(b50)).norm() <=
          1e-10 * testing::as_vector(b50).norm());

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(4, 4);
    bad(2, 2) = -1.0;
    CHECK_THROWS_AS(DenseCholesky{bad}, std::runtime_error);
}

TEST_CASE("Lanczos condition estimates")
{
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(10, 10);
    for (int i = 0; i < 10; ++i)
        d(i, i) = i + 1;
    const auto diag = lanczos_condition_estimate(dense_operator(d), 10, 10);
    CHECK(diag.kappa == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(diag.lambda_min == doctest::Approx(1.0).epsilon(1e-6));

    // normal matrix on 16^2 x 5 against the dense eigensolver
    const GridSpec g(16, 5, 1.0, 5e-4);
    const CsrMatrix q = assemble_Q(g);
    const auto est = lanczos_condition_estimate(matrix_operator(q), q.rows(), 300);
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q.to_dense(), Eigen::EigenvaluesOnly).eigenvalues();
    const double kappa = ev.maxCoeff() / ev.minCoeff();
    CHECK(std::abs(est.kappa - kappa) <= 0.05 * kappa);

    // P A with SPD P in the A inner product: spectrum of P A
    const int n = 60;
    const Eigen::MatrixXd a = random_spd(n, 0.5);
    const Eigen::MatrixXd p = random_spd(n, 1.0);
    const Eigen::MatrixXd pa = p * a;
    const LinearOperator aop = dense_operator(a);
    const auto gen = lanczos_condition_estimate(dense_operator(pa), n, n, &aop);
    const Eigen::VectorXd gev = Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd>(
                                    a, p.inverse(), Eigen::EigenvaluesOnly)
                                    .eigenvalues();
    CHECK(gen.kappa == doctest::Approx(gev.maxCoeff() / gev.minCoeff()).epsilon(1e-6));

    Eigen::MatrixXd indefinite = d;
    indefinite(0, 0) = -1.0;
    CHECK_THROWS_AS(lanczos_condition_estimate(dense_operator(indefinite), 10, 10), std::runtime_error);
}

TEST_CASE("Lanczos Ritz residual bound holds and drives the stopping rule")
{
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 40 + static_cast<int>(unit(rng) * 40);
        // spectrum spread over several decades with a tight cluster near the bottom
        Eigen::VectorXd lambda(n);
        for (int i = 0; i < n; ++i)
            lambda(i) = i < 5 ? 1e-3 * (1.0 + 0.01 * i) : std::pow(10.0, 3.0 * unit(rng) - 1.0);
        const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(
                                          Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return unit(rng) - 0.5; }))
                                          .householderQ();
        const Eigen::MatrixXd a = basis * lambda.asDiagonal() * basis.transpose();
        const int steps = 3 + static_cast<int>(unit(rng) * (n - 4));
        CAPTURE(trial);
        CAPTURE(steps);
        const auto est = lanczos_condition_estimate(dense_operator(a), n, steps);
        // each extreme Ritz value lies within its residual bound of some eigenvalue
        for (double theta : {est.lambda_min, est.lambda_max}) {
            const double gap = (lambda.array() - theta).abs().minCoeff();
            CHECK(gap <= est.ritz_residual * std::abs(theta) * (1.0 + 1e-8) + 1e-12);
        }
    }

    // with a tolerance the run stops early and lands on the dense answer
    const GridSpec g(16, 5, 1.0, 0.5);
    const CsrMatrix q = assemble_Q(g);
    LanczosOptions options;
    options.max_iterations = 4000;
    options.ritz_tolerance = 1e-4;
    const auto est = lanczos_condition_estimate(matrix_operator(q), q.rows(), options);
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q.to_dense(), Eigen::EigenvaluesOnly).eigenvalues();
    CHECK(est.converged);
    CHECK(est.iterations < static_cast<int>(q.rows()));
    CHECK(est.ritz_residual <= 1e-4);
    CHECK(est.lambda_min == doctest::Approx(ev.minCoeff()).epsilon(1e-3));
    CHECK(est.lambda_max == doctest::Approx(ev.maxCoeff()).epsilon(1e-3));

    LanczosOptions bad;
    bad.ritz_tolerance = -1.0;
    CHECK_THROWS_AS(lanczos_condition_estimate(matrix_operator(q), q.rows(), bad), std::invalid_argument);
}
