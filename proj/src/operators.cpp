#include "mfg/operators.hpp"

#include <stdexcept>
#include <string>

#include "mfg/finite_difference.hpp"

namespace mfg {

namespace {

template <typename Field>
void check_shape(const Field& f, int slices, const GridSpec& grid, const char* op)
{
    if (f.slices() != slices || f.n_space() != grid.n_space())
        throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(slices) +
                                    " slices of " + std::to_string(grid.n_space()) + "^2, got " +
                                    std::to_string(f.slices()) + " slices of " +
                                    std::to_string(f.n_space()) + "^2");
}

/// out = divergence of one flux slice (w interleaved, 4 values per point).
void divergence_slice(const double* w, double* out, int n, double h)
{
    const double inv_h = 1.0 / h;
    for (int i = 0; i < n; ++i) {
        const int ip = (i + 1 == n) ? 0 : i + 1;
        const int im = (i == 0) ? n - 1 : i - 1;
        for (int j = 0; j < n; ++j) {
            const int jp = (j + 1 == n) ? 0 : j + 1;
            const int jm = (j == 0) ? n - 1 : j - 1;
            const double* c = w + 4 * (static_cast<std::size_t>(i) * n + j);
            const double* west = w + 4 * (static_cast<std::size_t>(im) * n + j);
            const double* east = w + 4 * (static_cast<std::size_t>(ip) * n + j);
            const double* south = w + 4 * (static_cast<std::size_t>(i) * n + jm);
            const double* north = w + 4 * (static_cast<std::size_t>(i) * n + jp);
            out[static_cast<std::size_t>(i) * n + j] =
                ((c[0] - west[0]) + (east[1] - c[1]) + (c[2] - south[2]) + (north[3] - c[3])) *
                inv_h;
        }
    }
}

/// w = -[D_h u] for one slice.
void negative_gradient_slice(const double* u, double* w, int n, double h)
{
    const double inv_h = 1.0 / h;
    for (int i = 0; i < n; ++i) {
        const int ip = (i + 1 == n) ? 0 : i + 1;
        const int im = (i == 0) ? n - 1 : i - 1;
        for (int j = 0; j < n; ++j) {
            const int jp = (j + 1 == n) ? 0 : j + 1;
            const int jm = (j == 0) ? n - 1 : j - 1;
            const double c = u[static_cast<std::size_t>(i) * n + j];
            double* dst = w + 4 * (static_cast<std::size_t>(i) * n + j);
            dst[0] = -(u[static_cast<std::size_t>(ip) * n + j] - c) * inv_h;
            dst[1] = -(c - u[static_cast<std::size_t>(im) * n + j]) * inv_h;
            dst[2] = -(u[static_cast<std::size_t>(i) * n + jp] - c) * inv_h;
            dst[3] = -(c - u[static_cast<std::size_t>(i) * n + jm]) * inv_h;
        }
    }
}

} // namespace

DualField apply_A(const DensityField& m, const GridSpec& grid)
{
    check_shape(m, grid.n_time() + 1, grid, "apply_A");
    DualField out = make_dual(grid);
    const int n = grid.n_space();
    const std::size_t np = grid.plane_size();
    const double inv_dt = 1.0 / grid.dt();
    for (int k = 0; k < grid.n_time(); ++k) {
        double* dst = out.slice(k).data();
        kernel::add_shifted_negative_laplacian(m.slice(k + 1).data(), dst, n, grid.h(),
                                               grid.viscosity(), inv_dt);
        const double* prev = m.slice(k).data();
        for (std::size_t p = 0; p < np; ++p)
            dst[p] -= prev[p] * inv_dt;
    }
    return out;
}

DensityField apply_A_adjoint(const DualField& u, const GridSpec& grid)
{
    check_shape(u, grid.n_time(), grid, "apply_A_adjoint");
    DensityField out = make_density(grid);
    const int n = grid.n_space();
    const int nt = grid.n_time();
    const std::size_t np = grid.plane_size();
    const double inv_dt = 1.0 / grid.dt();
    {
        const double* u0 = u.slice(0).data();
        double* dst = out.slice(0).data();
        for (std::size_t p = 0; p < np; ++p)
            dst[p] = -u0[p] * inv_dt;
    }
    for (int k = 1; k <= nt; ++k) {
        double* dst = out.slice(k).data();
        kernel::add_shifted_negative_laplacian(u.slice(k - 1).data(), dst, n, grid.h(),
                                               grid.viscosity(), inv_dt);
        if (k < nt) {
            const double* uk = u.slice(k).data();
            for (std::size_t p = 0; p < np; ++p)
                dst[p] -= uk[p] * inv_dt;
        }
    }
    return out;
}

DualField apply_B(const FluxField& w, const GridSpec& grid)
{
    check_shape(w, grid.n_time(), grid, "apply_B");
    DualField out = make_dual(grid);
    for (int k = 0; k < grid.n_time(); ++k)
        divergence_slice(w.slice(k).data(), out.slice(k).data(), grid.n_space(), grid.h());
    return out;
}

FluxField apply_B_adjoint(const DualField& u, const GridSpec& grid)
{
    check_shape(u, grid.n_time(), grid, "apply_B_adjoint");
    FluxField out = make_flux(grid);
    for (int k = 0; k < grid.n_time(); ++k)
        negative_gradient_slice(u.slice(k).data(), out.slice(k).data(), grid.n_space(), grid.h());
    return out;
}

ConstraintField apply_C(const DensityField& m, const FluxField& w, const GridSpec& grid)
{
    check_shape(m, grid.n_time() + 1, grid, "apply_C");
    check_shape(w, grid.n_time(), grid, "apply_C");
    ConstraintField out = make_constraint(grid);
    detail::apply_C_flat(m.values().data(), w.values().data(), out.values().data(), grid);
    return out;
}

PrimalPair apply_C_adjoint(const ConstraintField& z, const GridSpec& grid)
{
    check_shape(z, grid.n_time() + 1, grid, "apply_C_adjoint");
    PrimalPair out{make_density(grid), make_flux(grid)};
    detail::apply_C_adjoint_flat(z.values().data(), out.m.values().data(), out.w.values().data(),
                                 grid);
    return out;
}

ConstraintField apply_Q(const ConstraintField& z, const GridSpec& grid)
{
    check_shape(z, grid.n_time() + 1, grid, "apply_Q");
    const PrimalPair adj = apply_C_adjoint(z, grid);
    return apply_C(adj.m, adj.w, grid);
}

ConstraintField constraint_rhs(const Plane& initial_density, const GridSpec& grid)
{
    if (initial_density.n() != grid.n_space())
        throw std::invalid_argument("constraint_rhs: initial density does not match grid");
    ConstraintField rhs = make_constraint(grid);
    std::copy(initial_density.values().begin(), initial_density.values().end(),
              rhs.slice(0).begin());
    return rhs;
}

CsrMatrix assemble_Q(const GridSpec& grid)
{
    using Triplet = Eigen::Triplet<double>;
    using RowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    const int n = grid.n_space();
    const int nt = grid.n_time();
    const auto np = static_cast<int>(grid.plane_size());
    const int rows = (nt + 1) * np;
    const double inv_dt = 1.0 / grid.dt();
    const double inv_h = 1.0 / grid.h();
    const double nu_h2 = grid.viscosity() * inv_h * inv_h;
    auto at = [&](int i, int j) { return static_cast<int>(grid.index(i, j)); };

    std::vector<Triplet> a_entries;
    a_entries.reserve(static_cast<std::size_t>(rows) * 6);
    for (int p = 0; p < np; ++p)
        a_entries.emplace_back(p, p, 1.0);
    for (int r = 1; r <= nt; ++r) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const int row = r * np + at(i, j);
                a_entries.emplace_back(row, (r - 1) * np + at(i, j), -inv_dt);
                a_entries.emplace_back(row, r * np + at(i, j), inv_dt + 4.0 * nu_h2);
                a_entries.emplace_back(row, r * np + at(i + 1, j), -nu_h2);
                a_entries.emplace_back(row, r * np + at(i - 1, j), -nu_h2);
                a_entries.emplace_back(row, r * np + at(i, j + 1), -nu_h2);
                a_entries.emplace_back(row, r * np + at(i, j - 1), -nu_h2);
            }
        }
    }
    RowMatrix a_tilde(rows, rows);
    a_tilde.setFromTriplets(a_entries.begin(), a_entries.end());

    std::vector<Triplet> b_entries;
    b_entries.reserve(static_cast<std::size_t>(nt) * np * 8);
    const int flux_cols = nt * np * 4;
    for (int r = 1; r <= nt; ++r) {
        const int base = (r - 1) * np * 4;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const int row = r * np + at(i, j);
                b_entries.emplace_back(row, base + 4 * at(i, j) + 0, inv_h);
                b_entries.emplace_back(row, base + 4 * at(i - 1, j) + 0, -inv_h);
                b_entries.emplace_back(row, base + 4 * at(i + 1, j) + 1, inv_h);
                b_entries.emplace_back(row, base + 4 * at(i, j) + 1, -inv_h);
                b_entries.emplace_back(row, base + 4 * at(i, j) + 2, inv_h);
                b_entries.emplace_back(row, base + 4 * at(i, j - 1) + 2, -inv_h);
                b_entries.emplace_back(row, base + 4 * at(i, j + 1) + 3, inv_h);
                b_entries.emplace_back(row, base + 4 * at(i, j) + 3, -inv_h);
            }
        }
    }
    RowMatrix b_tilde(rows, flux_cols);
    b_tilde.setFromTriplets(b_entries.begin(), b_entries.end());

    const RowMatrix at_part = a_tilde * RowMatrix(a_tilde.transpose());
    const RowMatrix bt_part = b_tilde * RowMatrix(b_tilde.transpose());
    RowMatrix q = at_part + bt_part;
    q.makeCompressed();
    return CsrMatrix::from_eigen(q);
}

NormalOperator::NormalOperator(const GridSpec& grid)
    : grid_(grid), m_scratch_((grid.n_time() + 1) * grid.plane_size()),
      w_scratch_(grid.n_time() * grid.plane_size() * 4)
{}

void NormalOperator::apply(std::span<const double> z, std::span<double> out) const
{
    if (z.size() != size() || out.size() != size())
        throw std::invalid_argument("NormalOperator::apply: size mismatch");
    detail::apply_C_adjoint_flat(z.data(), m_scratch_.data(), w_scratch_.data(), grid_);
    detail::apply_C_flat(m_scratch_.data(), w_scratch_.data(), out.data(), grid_);
}

namespace detail {

void apply_C_flat(const double* m, const double* w, double* out, const GridSpec& grid)
{
    const int n = grid.n_space();
    const int nt = grid.n_time();
    const std::size_t np = grid.plane_size();
    const double inv_dt = 1.0 / grid.dt();
    for (std::size_t p = 0; p < np; ++p)
        out[p] = m[p];
    std::vector<double> div(np);
    for (int r = 1; r <= nt; ++r) {
        double* dst = out + r * np;
        kernel::add_shifted_negative_laplacian(m + r * np, dst, n, grid.h(), grid.viscosity(),
                                               inv_dt);
        divergence_slice(w + (r - 1) * np * 4, div.data(), n, grid.h());
        const double* prev = m + (r - 1) * np;
        for (std::size_t p = 0; p < np; ++p)
            dst[p] += div[p] - prev[p] * inv_dt;
    }
}

void apply_C_adjoint_flat(const double* z, double* m, double* w, const GridSpec& grid)
{
    const int n = grid.n_space();
    const int nt = grid.n_time();
    const std::size_t np = grid.plane_size();
    const double inv_dt = 1.0 / grid.dt();
    // density part: A~^* z; slice 0 gets lambda - u^0 / dt
    for (std::size_t p = 0; p < np; ++p)
        m[p] = z[p] - z[np + p] * inv_dt;
    for (int c = 1; c <= nt; ++c) {
        double* dst = m + c * np;
        kernel::add_shifted_negative_laplacian(z + c * np, dst, n, grid.h(), grid.viscosity(),
                                               inv_dt);
        if (c < nt) {
            const double* next = z + (c + 1) * np;
            for (std::size_t p = 0; p < np; ++p)
                dst[p] -= next[p] * inv_dt;
        }
    }
    // flux part: B~^* z = -[D_h u^k], u^k = z slice k + 1
    for (int k = 0; k < nt; ++k)
        negative_gradient_slice(z + (k + 1) * np, w + k * np * 4, n, grid.h());
}

} // namespace detail

} // namespace mfg
