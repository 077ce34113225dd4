#include "mfg/grid.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace mfg {

GridSpec::GridSpec(int n_space, int n_time, double horizon, double viscosity, double exponent)
    : n_space_(n_space), n_time_(n_time), horizon_(horizon), viscosity_(viscosity),
      exponent_(exponent)
{
    if (n_space < 1)
        throw std::invalid_argument("grid: n_space must be positive, got " + std::to_string(n_space));
    if (n_time < 1)
        throw std::invalid_argument("grid: n_time must be positive, got " + std::to_string(n_time));
    if (!(horizon > 0.0))
        throw std::invalid_argument("grid: horizon must be positive");
    if (!(viscosity >= 0.0))
        throw std::invalid_argument("grid: viscosity must be non-negative");
    if (!(exponent > 1.0))
        throw std::invalid_argument("grid: exponent q must be greater than 1");
}

GridSpec GridSpec::with_space_points(int n_space) const
{
    return GridSpec(n_space, n_time_, horizon_, viscosity_, exponent_);
}

Plane::Plane(int n, double fill) : n_(n), data_(static_cast<std::size_t>(n) * n, fill)
{
    if (n < 1)
        throw std::invalid_argument("plane: size must be positive");
}

double Plane::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

VectorPlane::VectorPlane(int n) : n_(n), data_(static_cast<std::size_t>(n) * n, Vec4{0, 0, 0, 0})
{
    if (n < 1)
        throw std::invalid_argument("vector plane: size must be positive");
}

DensityField make_density(const GridSpec& grid, double fill)
{
    return DensityField(grid.n_time() + 1, grid.n_space(), fill);
}

FluxField make_flux(const GridSpec& grid, double fill)
{
    return FluxField(grid.n_time(), grid.n_space(), fill);
}

DualField make_dual(const GridSpec& grid, double fill)
{
    return DualField(grid.n_time(), grid.n_space(), fill);
}

ConstraintField make_constraint(const GridSpec& grid, double fill)
{
    return ConstraintField(grid.n_time() + 1, grid.n_space(), fill);
}

} // namespace mfg
