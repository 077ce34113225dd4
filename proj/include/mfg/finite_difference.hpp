#pragma once

#include <functional>

#include "mfg/grid.hpp"

namespace mfg {

// Pointwise periodic finite-difference operators on a single time slice.
// All of them throw std::invalid_argument when the slice does not match the grid.

/// (D1 y)_{i,j} = (y_{i+1,j} - y_{i,j}) / h
Plane apply_d1(const Plane& y, const GridSpec& grid);
/// (D2 y)_{i,j} = (y_{i,j+1} - y_{i,j}) / h
Plane apply_d2(const Plane& y, const GridSpec& grid);

/// [D_h y]_{i,j} = ((D1y)_{i,j}, (D1y)_{i-1,j}, (D2y)_{i,j}, (D2y)_{i,j-1})
VectorPlane apply_gradient(const Plane& y, const GridSpec& grid);

/// Godunov upwind gradient
/// ((D1y)^-_{i,j}, -(D1y)^+_{i-1,j}, (D2y)^-_{i,j}, -(D2y)^+_{i,j-1}),
/// with a^+ = max(a,0) and a^- = a^+ - a.  Its sign pattern is (+,-,+,-).
VectorPlane apply_upwind_gradient(const Plane& y, const GridSpec& grid);

/// Five-point periodic Laplacian, -(4y_{ij} - y_{i+1,j} - y_{i-1,j} - y_{i,j+1} - y_{i,j-1}) / h^2.
Plane apply_laplacian(const Plane& y, const GridSpec& grid);

/// (y^{k+1} - y^k) / dt for 0 <= k < N_T.
Plane time_derivative(const DensityField& y, int k, const GridSpec& grid);

Plane extract_plane(std::span<const double> slice, int n);
Plane extract_plane(const DensityField& field, int k);
void store_plane(DensityField& field, int k, const Plane& plane);

/// Cell-average density of m0 on the cell |x - x_ij|_inf <= h/2, using an
/// s x s midpoint rule inside every cell.  The result is a density (mass / h^2),
/// so h^2 * sum = total mass of m0.  Throws if m0 is negative somewhere it is sampled.
Plane discretize_initial_density(const std::function<double(double, double)>& m0,
                                 const GridSpec& grid, int subsamples = 4);

namespace kernel {

// Raw slice kernels used by the space-time operators.  `in` and `out` are
// N_h x N_h row-major planes; `out` is overwritten unless stated otherwise.

/// out = scale * (-Delta_h in) + shift * in
void add_shifted_negative_laplacian(const double* in, double* out, int n, double h, double scale,
                                    double shift);

} // namespace kernel

} // namespace mfg
