#pragma once

#include <span>
#include <vector>

#include "mfg/grid.hpp"
#include "mfg/sparse.hpp"

namespace mfg {

// Linear constraint operators of the discrete variational problem.
//
//   (Am)^k_{ij} = (m^{k+1}_{ij} - m^k_{ij}) / dt - nu (Delta_h m^{k+1})_{ij},   k = 0..N_T-1
//   (Bw)^k_{ij} = (D1 w^{k,1})_{i-1,j} + (D1 w^{k,2})_{ij} + (D2 w^{k,3})_{i,j-1} + (D2 w^{k,4})_{ij}
//
// C = [A~ | B~] stacks the initial-condition row m^0 on top of A and a zero row
// on top of B, so C(m, w) = (m^0, Am + Bw) lives in a ConstraintField whose
// slice 0 is the m^0 block and slices 1..N_T hold Am + Bw.  Inner products
// are plain Euclidean sums over all entries.

DualField apply_A(const DensityField& m, const GridSpec& grid);
DensityField apply_A_adjoint(const DualField& u, const GridSpec& grid);
DualField apply_B(const FluxField& w, const GridSpec& grid);
FluxField apply_B_adjoint(const DualField& u, const GridSpec& grid);

struct PrimalPair {
    DensityField m;
    FluxField w;
};

ConstraintField apply_C(const DensityField& m, const FluxField& w, const GridSpec& grid);
PrimalPair apply_C_adjoint(const ConstraintField& z, const GridSpec& grid);

/// Q z = C C^* z, matrix-free.
ConstraintField apply_Q(const ConstraintField& z, const GridSpec& grid);

/// Q assembled as C C^* from sparse A~ and B~.  Each row couples time slices
/// k-1..k+1 and spatial neighbours up to graph distance 2, so a row holds at
/// most 3 * 13 + 1 = 40 nonzeros (23 for N_h >= 5).
CsrMatrix assemble_Q(const GridSpec& grid);

/// Right-hand side (m_bar, 0) of C(m, w) = (m_bar, 0).
ConstraintField constraint_rhs(const Plane& initial_density, const GridSpec& grid);

/// Matrix-free Q on flat vectors with reusable scratch storage.  Not
/// thread-safe: one apply at a time per instance.
class NormalOperator {
public:
    explicit NormalOperator(const GridSpec& grid);

    std::size_t size() const { return (grid_.n_time() + 1) * grid_.plane_size(); }
    const GridSpec& grid() const { return grid_; }
    void apply(std::span<const double> z, std::span<double> out) const;

private:
    GridSpec grid_;
    mutable std::vector<double> m_scratch_;
    mutable std::vector<double> w_scratch_;
};

namespace detail {

// Flat-buffer kernels shared by the field-level operators and the solvers.
void apply_C_flat(const double* m, const double* w, double* out, const GridSpec& grid);
void apply_C_adjoint_flat(const double* z, double* m, double* w, const GridSpec& grid);

} // namespace detail

} // namespace mfg
