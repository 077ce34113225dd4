#pragma once

// Helpers shared by the unit tests: seeded random fields and dense reference
// matrices built entry by entry from the stencil definitions.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfg/grid.hpp"

namespace testing {

inline std::mt19937_64& rng()
{
    static std::mt19937_64 engine(20240611);
    return engine;
}

inline double uniform(double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline int uniform_int(int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng());
}

template <typename Field>
void fill_random(Field& f, double lo = -1.0, double hi = 1.0)
{
    for (double& v : f.values())
        v = uniform(lo, hi);
}

inline mfg::Plane random_plane(int n, double lo = -1.0, double hi = 1.0)
{
    mfg::Plane p(n);
    for (double& v : p.values())
        v = uniform(lo, hi);
    return p;
}

inline Eigen::VectorXd as_vector(std::span<const double> v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double max_abs(std::span<const double> a)
{
    double d = 0.0;
    for (double v : a)
        d = std::max(d, std::abs(v));
    return d;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

/// Flat index of (k, i, j) with periodic wrap.
inline Eigen::Index cell(int k, int i, int j, int n)
{
    const int a = ((i % n) + n) % n;
    const int b = ((j % n) + n) % n;
    return (static_cast<Eigen::Index>(k) * n + a) * n + b;
}

/// Dense A: rows (k, i, j), k < N_T; columns (k, i, j), k <= N_T.
inline Eigen::MatrixXd dense_A(const mfg::GridSpec& g)
{
    const int n = g.n_space(), nt = g.n_time();
    const double h2 = g.h() * g.h(), dt = g.dt(), nu = g.viscosity();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nt * n * n, (nt + 1) * n * n);
    for (int k = 0; k < nt; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const auto r = cell(k, i, j, n);
                a(r, cell(k + 1, i, j, n)) += 1.0 / dt + 4.0 * nu / h2;
                a(r, cell(k, i, j, n)) -= 1.0 / dt;
                a(r, cell(k + 1, i + 1, j, n)) -= nu / h2;
                a(r, cell(k + 1, i - 1, j, n)) -= nu / h2;
                a(r, cell(k + 1, i, j + 1, n)) -= nu / h2;
                a(r, cell(k + 1, i, j - 1, n)) -= nu / h2;
            }
    return a;
}

/// Dense B: columns ((k, i, j), c) with the four flux components innermost.
inline Eigen::MatrixXd dense_B(const mfg::GridSpec& g)
{
    const int n = g.n_space(), nt = g.n_time();
    const double ih = 1.0 / g.h();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nt * n * n, 4 * nt * n * n);
    auto col = [n](int k, int i, int j, int c) { return 4 * cell(k, i, j, n) + c; };
    for (int k = 0; k < nt; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const auto r = cell(k, i, j, n);
                // (D1 w1)_{i-1,j} + (D1 w2)_{ij} + (D2 w3)_{i,j-1} + (D2 w4)_{ij}
                b(r, col(k, i, j, 0)) += ih;
                b(r, col(k, i - 1, j, 0)) -= ih;
                b(r, col(k, i + 1, j, 1)) += ih;
                b(r, col(k, i, j, 1)) -= ih;
                b(r, col(k, i, j, 2)) += ih;
                b(r, col(k, i, j - 1, 2)) -= ih;
                b(r, col(k, i, j + 1, 3)) += ih;
                b(r, col(k, i, j, 3)) -= ih;
            }
    return b;
}

/// Dense C = [A~ | B~] with A~ = [E_0; A], B~ = [0; B].
inline Eigen::MatrixXd dense_C(const mfg::GridSpec& g)
{
    const int n = g.n_space(), nt = g.n_time();
    const Eigen::Index p = n * n;
    const Eigen::MatrixXd a = dense_A(g), b = dense_B(g);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero((nt + 1) * p, a.cols() + b.cols());
    c.topLeftCorner(p, p).setIdentity();
    c.block(p, 0, a.rows(), a.cols()) = a;
    c.block(p, a.cols(), b.rows(), b.cols()) = b;
    return c;
}

} // namespace testing
