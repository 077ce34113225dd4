#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace mfg {

/// Discretization of the torus [0,1)^2 x [0,T] together with the model
/// parameters that enter the discrete operators (viscosity and cost exponent).
class GridSpec {
public:
    GridSpec(int n_space, int n_time, double horizon, double viscosity, double exponent = 2.0);

    int n_space() const { return n_space_; }
    int n_time() const { return n_time_; }
    double horizon() const { return horizon_; }
    double viscosity() const { return viscosity_; }
    /// Cost exponent q > 1 of the flux penalty |w|^q / (q m^(q-1)).
    double exponent() const { return exponent_; }
    /// q' = q / (q - 1), exponent of the Hamiltonian |p|^q' / q'.
    double conjugate_exponent() const { return exponent_ / (exponent_ - 1.0); }
    double h() const { return 1.0 / n_space_; }
    double dt() const { return horizon_ / n_time_; }

    std::size_t plane_size() const { return static_cast<std::size_t>(n_space_) * n_space_; }

    /// Same time discretization and model, different spatial resolution.
    GridSpec with_space_points(int n_space) const;

    int wrap(int i) const
    {
        const int r = i % n_space_;
        return r < 0 ? r + n_space_ : r;
    }
    std::size_t index(int i, int j) const
    {
        return static_cast<std::size_t>(wrap(i)) * n_space_ + wrap(j);
    }

private:
    int n_space_;
    int n_time_;
    double horizon_;
    double viscosity_;
    double exponent_;
};

using Vec4 = std::array<double, 4>;

/// One time slice: N_h x N_h values, row-major (i outer, j inner), periodic access.
class Plane {
public:
    Plane() = default;
    explicit Plane(int n, double fill = 0.0);

    int n() const { return n_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[wrap_index(i, j)]; }
    double operator()(int i, int j) const { return data_[wrap_index(i, j)]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double sum() const;

private:
    std::size_t wrap_index(int i, int j) const
    {
        int a = i % n_, b = j % n_;
        if (a < 0) a += n_;
        if (b < 0) b += n_;
        return static_cast<std::size_t>(a) * n_ + b;
    }

    int n_ = 0;
    std::vector<double> data_;
};

/// A 4-vector per grid point, same layout as Plane.
class VectorPlane {
public:
    VectorPlane() = default;
    explicit VectorPlane(int n);

    int n() const { return n_; }
    Vec4& operator()(int i, int j) { return data_[wrap_index(i, j)]; }
    const Vec4& operator()(int i, int j) const { return data_[wrap_index(i, j)]; }
    std::span<Vec4> values() { return data_; }
    std::span<const Vec4> values() const { return data_; }

private:
    std::size_t wrap_index(int i, int j) const
    {
        int a = i % n_, b = j % n_;
        if (a < 0) a += n_;
        if (b < 0) b += n_;
        return static_cast<std::size_t>(a) * n_ + b;
    }

    int n_ = 0;
    std::vector<Vec4> data_;
};

/// Time-indexed stack of planes with `Components` values per grid point.
/// Memory layout is k-major, then i, then j, then component.  `Tag` keeps
/// densities, fluxes and multipliers apart at compile time.
template <typename Tag, int Components>
class SpaceTimeField {
public:
    static constexpr int components = Components;

    SpaceTimeField() = default;
    SpaceTimeField(int slices, int n_space, double fill = 0.0)
        : slices_(slices), n_(n_space),
          data_(static_cast<std::size_t>(slices) * n_space * n_space * Components, fill)
    {}

    int slices() const { return slices_; }
    int n_space() const { return n_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(n_) * n_; }
    std::size_t slice_stride() const { return plane_size() * Components; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int k, int i, int j, int c = 0) { return data_[offset(k, i, j, c)]; }
    double operator()(int k, int i, int j, int c = 0) const { return data_[offset(k, i, j, c)]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> slice(int k) { return {data_.data() + k * slice_stride(), slice_stride()}; }
    std::span<const double> slice(int k) const
    {
        return {data_.data() + k * slice_stride(), slice_stride()};
    }

    bool same_shape(const SpaceTimeField& other) const
    {
        return slices_ == other.slices_ && n_ == other.n_;
    }

private:
    std::size_t offset(int k, int i, int j, int c) const
    {
        int a = i % n_, b = j % n_;
        if (a < 0) a += n_;
        if (b < 0) b += n_;
        return ((static_cast<std::size_t>(k) * n_ + a) * n_ + b) * Components + c;
    }

    int slices_ = 0;
    int n_ = 0;
    std::vector<double> data_;
};

struct DensityTag {};
struct FluxTag {};
struct DualTag {};
struct ConstraintTag {};
struct ValueTag {};

/// m^k, k = 0..N_T.
using DensityField = SpaceTimeField<DensityTag, 1>;
/// w^k, k = 0..N_T-1, four components per point.
using FluxField = SpaceTimeField<FluxTag, 4>;
/// Range of A and B: N_T slices.
using DualField = SpaceTimeField<DualTag, 1>;
/// Range of C = [A~ | B~]: slice 0 holds the initial-condition block
/// (multiplier lambda), slices 1..N_T hold the N_T slices of Am + Bw (multiplier u).
using ConstraintField = SpaceTimeField<ConstraintTag, 1>;
/// Value function u^k, k = 0..N_T.
using ValueField = SpaceTimeField<ValueTag, 1>;

DensityField make_density(const GridSpec& grid, double fill = 0.0);
FluxField make_flux(const GridSpec& grid, double fill = 0.0);
DualField make_dual(const GridSpec& grid, double fill = 0.0);
ConstraintField make_constraint(const GridSpec& grid, double fill = 0.0);

} // namespace mfg
