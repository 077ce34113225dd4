#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "mfg/grid.hpp"
#include "mfg/krylov.hpp"
#include "mfg/sparse.hpp"

namespace mfg {

enum class CycleType { V, W, F };

const char* to_string(CycleType type);
CycleType parse_cycle_type(const std::string& text);

struct MultigridOptions {
    /// H: points per axis on the coarsest grid.
    int coarse_points = 2;
    /// Number of coarsenings l, so the finest grid has H * 2^l points per axis.
    /// 0 selects the largest l compatible with N_h.
    int levels = 0;
    int pre_sweeps = 2;
    int post_sweeps = 2;
    CycleType cycle = CycleType::F;
    /// Run post-smoothing sweeps in reverse lexicographic order, which makes a
    /// V-cycle a symmetric operator.  Off by default.
    bool symmetric = false;
};

/// Number of coarsenings l with n_space = coarse_points * 2^l.  Throws
/// std::invalid_argument if n_space has a different form or l < 1.
int coarsening_levels(int n_space, int coarse_points);

/// Counts of recursive cycle invocations per level and cycle type.
struct CycleTrace {
    std::vector<std::array<int, 3>> calls;

    void record(int level, CycleType type);
    int count(int level, CycleType type) const;
};

/// Nine-point full weighting in space, identity in time, periodic wrap:
/// (R X)_{ij} = (4 X_{2i,2j} + 2 (edge neighbours) + (corner neighbours)) / 16.
std::vector<double> restrict_field(std::span<const double> fine, int n_fine, int slices);
/// Bilinear interpolation in space, identity in time; equal to 4 R^T.
std::vector<double> interpolate_field(std::span<const double> coarse, int n_coarse, int slices);
/// fine += I coarse
void interpolate_add(std::span<const double> coarse, int n_coarse, int slices,
                     std::span<double> fine);

/// In-place lexicographic Gauss-Seidel sweeps (row order of the matrix, which
/// is the k-major, i, j unknown order).  Throws on a zero diagonal entry.
void gauss_seidel_sweep(const CsrMatrix& matrix, std::span<double> x, std::span<const double> b,
                        int sweeps);
/// Same sweep in reverse row order.
void gauss_seidel_backward_sweep(const CsrMatrix& matrix, std::span<double> x,
                                 std::span<const double> b, int sweeps);

/// Space-only (semi-coarsened) hierarchy of rediscretized normal operators
/// Q_k = A~_k A~_k^* + B~_k B~_k^* on grids with H * 2^k points per axis and
/// the fine time grid.  Immutable after construction; every cycle call
/// allocates its own scratch, so concurrent calls are safe.
class MultigridHierarchy {
public:
    MultigridHierarchy(const GridSpec& fine, const MultigridOptions& options);

    int finest_level() const { return static_cast<int>(grids_.size()) - 1; }
    const GridSpec& grid(int k) const { return grids_.at(static_cast<std::size_t>(k)); }
    const CsrMatrix& matrix(int k) const { return matrices_.at(static_cast<std::size_t>(k)); }
    const MultigridOptions& options() const { return options_; }
    std::size_t size(int k) const { return matrix(k).rows(); }

    /// One cycle of the given type on level k, updating x in place.
    void cycle(int k, std::span<double> x, std::span<const double> b, CycleType type,
               CycleTrace* trace = nullptr) const;

    /// One cycle of the configured type on the finest level from x = 0.
    std::vector<double> apply(std::span<const double> b) const;

    /// y -> cycle(finest, 0, y): a fixed linear operator usable as P_L.
    /// The hierarchy must outlive the returned operator.
    LinearOperator preconditioner() const;

private:
    MultigridOptions options_;
    std::vector<GridSpec> grids_;
    std::vector<CsrMatrix> matrices_;
    std::unique_ptr<DenseCholesky> coarse_;
};

} // namespace mfg
