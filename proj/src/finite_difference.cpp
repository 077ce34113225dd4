#include "mfg/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mfg {

namespace {

void check_plane(const Plane& y, const GridSpec& grid, const char* op)
{
    if (y.n() != grid.n_space())
        throw std::invalid_argument(std::string(op) + ": slice is " + std::to_string(y.n()) +
                                    "x" + std::to_string(y.n()) + ", grid expects " +
                                    std::to_string(grid.n_space()));
}

double positive_part(double a) { return std::max(a, 0.0); }
double negative_part(double a) { return std::max(a, 0.0) - a; }

} // namespace

Plane apply_d1(const Plane& y, const GridSpec& grid)
{
    check_plane(y, grid, "apply_d1");
    const int n = grid.n_space();
    const double inv_h = 1.0 / grid.h();
    Plane out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = (y(i + 1, j) - y(i, j)) * inv_h;
    return out;
}

Plane apply_d2(const Plane& y, const GridSpec& grid)
{
    check_plane(y, grid, "apply_d2");
    const int n = grid.n_space();
    const double inv_h = 1.0 / grid.h();
    Plane out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = (y(i, j + 1) - y(i, j)) * inv_h;
    return out;
}

VectorPlane apply_gradient(const Plane& y, const GridSpec& grid)
{
    check_plane(y, grid, "apply_gradient");
    const int n = grid.n_space();
    const Plane d1 = apply_d1(y, grid);
    const Plane d2 = apply_d2(y, grid);
    VectorPlane out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = {d1(i, j), d1(i - 1, j), d2(i, j), d2(i, j - 1)};
    return out;
}

VectorPlane apply_upwind_gradient(const Plane& y, const GridSpec& grid)
{
    check_plane(y, grid, "apply_upwind_gradient");
    const int n = grid.n_space();
    const Plane d1 = apply_d1(y, grid);
    const Plane d2 = apply_d2(y, grid);
    VectorPlane out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = {negative_part(d1(i, j)), -positive_part(d1(i - 1, j)),
                         negative_part(d2(i, j)), -positive_part(d2(i, j - 1))};
    return out;
}

Plane apply_laplacian(const Plane& y, const GridSpec& grid)
{
    check_plane(y, grid, "apply_laplacian");
    const int n = grid.n_space();
    Plane out(n);
    // Delta_h = -(-Delta_h)
    kernel::add_shifted_negative_laplacian(y.values().data(), out.values().data(), n, grid.h(),
                                           -1.0, 0.0);
    return out;
}

Plane time_derivative(const DensityField& y, int k, const GridSpec& grid)
{
    if (y.slices() != grid.n_time() + 1 || y.n_space() != grid.n_space())
        throw std::invalid_argument("time_derivative: field shape does not match grid");
    if (k < 0 || k >= grid.n_time())
        throw std::out_of_range("time_derivative: k = " + std::to_string(k) +
                                " outside [0, " + std::to_string(grid.n_time() - 1) + "]");
    const int n = grid.n_space();
    Plane out(n);
    const auto next = y.slice(k + 1);
    const auto cur = y.slice(k);
    const double inv_dt = 1.0 / grid.dt();
    auto dst = out.values();
    for (std::size_t p = 0; p < dst.size(); ++p)
        dst[p] = (next[p] - cur[p]) * inv_dt;
    return out;
}

Plane extract_plane(std::span<const double> slice, int n)
{
    Plane out(n);
    if (slice.size() != out.size())
        throw std::invalid_argument("extract_plane: slice size mismatch");
    std::copy(slice.begin(), slice.end(), out.values().begin());
    return out;
}

Plane extract_plane(const DensityField& field, int k)
{
    return extract_plane(field.slice(k), field.n_space());
}

void store_plane(DensityField& field, int k, const Plane& plane)
{
    if (plane.n() != field.n_space())
        throw std::invalid_argument("store_plane: plane size mismatch");
    std::copy(plane.values().begin(), plane.values().end(), field.slice(k).begin());
}

Plane discretize_initial_density(const std::function<double(double, double)>& m0,
                                 const GridSpec& grid, int subsamples)
{
    if (subsamples < 1)
        throw std::invalid_argument("discretize_initial_density: subsamples must be positive");
    const int n = grid.n_space();
    const double h = grid.h();
    const double sub_h = h / subsamples;
    Plane out(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int a = 0; a < subsamples; ++a) {
                for (int b = 0; b < subsamples; ++b) {
                    // cell of x_ij = (ih, jh) is [ih - h/2, ih + h/2]^2
                    const double x = i * h - 0.5 * h + (a + 0.5) * sub_h;
                    const double y = j * h - 0.5 * h + (b + 0.5) * sub_h;
                    const double value = m0(x, y);
                    if (!(value >= 0.0))
                        throw std::domain_error("discretize_initial_density: m0(" +
                                                std::to_string(x) + ", " + std::to_string(y) +
                                                ") = " + std::to_string(value) + " is negative");
                    acc += value;
                }
            }
            out(i, j) = acc / (subsamples * subsamples);
        }
    }
    return out;
}

namespace kernel {

void add_shifted_negative_laplacian(const double* in, double* out, int n, double h, double scale,
                                    double shift)
{
    const double c = scale / (h * h);
    for (int i = 0; i < n; ++i) {
        const int ip = (i + 1 == n) ? 0 : i + 1;
        const int im = (i == 0) ? n - 1 : i - 1;
        const double* row = in + static_cast<std::size_t>(i) * n;
        const double* up = in + static_cast<std::size_t>(ip) * n;
        const double* down = in + static_cast<std::size_t>(im) * n;
        double* dst = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const int jp = (j + 1 == n) ? 0 : j + 1;
            const int jm = (j == 0) ? n - 1 : j - 1;
            const double neg_lap = 4.0 * row[j] - up[j] - down[j] - row[jp] - row[jm];
            dst[j] = c * neg_lap + shift * row[j];
        }
    }
}

} // namespace kernel

} // namespace mfg
