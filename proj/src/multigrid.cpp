#include "mfg/multigrid.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "mfg/operators.hpp"

namespace mfg {

const char* to_string(CycleType type)
{
    switch (type) {
    case CycleType::V: return "V";
    case CycleType::W: return "W";
    case CycleType::F: return "F";
    }
    return "?";
}

CycleType parse_cycle_type(const std::string& text)
{
    if (text == "V" || text == "v") return CycleType::V;
    if (text == "W" || text == "w") return CycleType::W;
    if (text == "F" || text == "f") return CycleType::F;
    throw std::invalid_argument("unknown cycle type '" + text + "' (expected V, W or F)");
}

int coarsening_levels(int n_space, int coarse_points)
{
    if (coarse_points < 2)
        throw std::invalid_argument("multigrid: coarse_points must be at least 2");
    if (n_space % coarse_points != 0)
        throw std::invalid_argument("multigrid: n_space = " + std::to_string(n_space) +
                                    " is not a multiple of coarse_points = " +
                                    std::to_string(coarse_points));
    int ratio = n_space / coarse_points;
    int levels = 0;
    while (ratio > 1 && ratio % 2 == 0) {
        ratio /= 2;
        ++levels;
    }
    if (ratio != 1 || levels < 1)
        throw std::invalid_argument("multigrid: n_space = " + std::to_string(n_space) +
                                    " is not of the form " + std::to_string(coarse_points) +
                                    " * 2^l with l >= 1");
    return levels;
}

void CycleTrace::record(int level, CycleType type)
{
    if (static_cast<int>(calls.size()) <= level)
        calls.resize(static_cast<std::size_t>(level) + 1, {0, 0, 0});
    ++calls[static_cast<std::size_t>(level)][static_cast<std::size_t>(type)];
}

int CycleTrace::count(int level, CycleType type) const
{
    if (level < 0 || level >= static_cast<int>(calls.size()))
        return 0;
    return calls[static_cast<std::size_t>(level)][static_cast<std::size_t>(type)];
}

namespace {

inline std::size_t wrap(int i, int n) { return static_cast<std::size_t>((i % n + n) % n); }

void check_transfer_sizes(std::size_t fine, std::size_t coarse, int n_coarse, int slices)
{
    const std::size_t nc = static_cast<std::size_t>(n_coarse);
    if (coarse != nc * nc * slices || fine != 4 * nc * nc * slices)
        throw std::invalid_argument("grid transfer: vector sizes do not match the level shapes");
}

} // namespace

std::vector<double> restrict_field(std::span<const double> fine, int n_fine, int slices)
{
    if (n_fine % 2 != 0)
        throw std::invalid_argument("restrict_field: fine size must be even");
    const int nc = n_fine / 2;
    std::vector<double> coarse(static_cast<std::size_t>(nc) * nc * slices);
    check_transfer_sizes(fine.size(), coarse.size(), nc, slices);
    const int nf = n_fine;
    const std::size_t fine_plane = static_cast<std::size_t>(nf) * nf;
    const std::size_t coarse_plane = static_cast<std::size_t>(nc) * nc;
    for (int k = 0; k < slices; ++k) {
        const double* src = fine.data() + k * fine_plane;
        double* dst = coarse.data() + k * coarse_plane;
        auto at = [&](int i, int j) { return src[wrap(i, nf) * nf + wrap(j, nf)]; };
        for (int i = 0; i < nc; ++i) {
            for (int j = 0; j < nc; ++j) {
                const int fi = 2 * i, fj = 2 * j;
                dst[static_cast<std::size_t>(i) * nc + j] =
                    (4.0 * at(fi, fj) +
                     2.0 * (at(fi + 1, fj) + at(fi - 1, fj) + at(fi, fj + 1) + at(fi, fj - 1)) +
                     at(fi - 1, fj - 1) + at(fi - 1, fj + 1) + at(fi + 1, fj - 1) +
                     at(fi + 1, fj + 1)) /
                    16.0;
            }
        }
    }
    return coarse;
}

void interpolate_add(std::span<const double> coarse, int n_coarse, int slices,
                     std::span<double> fine)
{
    check_transfer_sizes(fine.size(), coarse.size(), n_coarse, slices);
    const int nc = n_coarse;
    const int nf = 2 * nc;
    const std::size_t fine_plane = static_cast<std::size_t>(nf) * nf;
    const std::size_t coarse_plane = static_cast<std::size_t>(nc) * nc;
    // scatter with the transposed restriction stencil scaled by 4: weights 1, 1/2, 1/4
    for (int k = 0; k < slices; ++k) {
        const double* src = coarse.data() + k * coarse_plane;
        double* dst = fine.data() + k * fine_plane;
        auto at = [&](int i, int j) -> double& { return dst[wrap(i, nf) * nf + wrap(j, nf)]; };
        for (int i = 0; i < nc; ++i) {
            for (int j = 0; j < nc; ++j) {
                const double c = src[static_cast<std::size_t>(i) * nc + j];
                const int fi = 2 * i, fj = 2 * j;
                at(fi, fj) += c;
                at(fi + 1, fj) += 0.5 * c;
                at(fi - 1, fj) += 0.5 * c;
                at(fi, fj + 1) += 0.5 * c;
                at(fi, fj - 1) += 0.5 * c;
                at(fi - 1, fj - 1) += 0.25 * c;
                at(fi - 1, fj + 1) += 0.25 * c;
                at(fi + 1, fj - 1) += 0.25 * c;
                at(fi + 1, fj + 1) += 0.25 * c;
            }
        }
    }
}

std::vector<double> interpolate_field(std::span<const double> coarse, int n_coarse, int slices)
{
    std::vector<double> fine(static_cast<std::size_t>(4) * n_coarse * n_coarse * slices, 0.0);
    interpolate_add(coarse, n_coarse, slices, fine);
    return fine;
}

namespace {

inline void relax_row(const int* starts, const int* cols, const double* vals, std::size_t r,
                      double* x, const double* b)
{
    double acc = b[r];
    double diag = 0.0;
    for (int p = starts[r]; p < starts[r + 1]; ++p) {
        const auto c = static_cast<std::size_t>(cols[p]);
        if (c == r)
            diag = vals[p];
        else
            acc -= vals[p] * x[c];
    }
    if (diag == 0.0)
        throw std::runtime_error("gauss_seidel: zero diagonal entry in row " + std::to_string(r));
    x[r] = acc / diag;
}

void check_gs_sizes(const CsrMatrix& m, std::span<double> x, std::span<const double> b)
{
    if (x.size() != m.rows() || b.size() != m.rows())
        throw std::invalid_argument("gauss_seidel: vector size does not match matrix");
}

} // namespace

void gauss_seidel_sweep(const CsrMatrix& matrix, std::span<double> x, std::span<const double> b,
                        int sweeps)
{
    check_gs_sizes(matrix, x, b);
    const int* starts = matrix.row_start().data();
    const int* cols = matrix.columns().data();
    const double* vals = matrix.values().data();
    const std::size_t n = matrix.rows();
    for (int s = 0; s < sweeps; ++s)
        for (std::size_t r = 0; r < n; ++r)
            relax_row(starts, cols, vals, r, x.data(), b.data());
}

void gauss_seidel_backward_sweep(const CsrMatrix& matrix, std::span<double> x,
                                 std::span<const double> b, int sweeps)
{
    check_gs_sizes(matrix, x, b);
    const int* starts = matrix.row_start().data();
    const int* cols = matrix.columns().data();
    const double* vals = matrix.values().data();
    const std::size_t n = matrix.rows();
    for (int s = 0; s < sweeps; ++s)
        for (std::size_t r = n; r-- > 0;)
            relax_row(starts, cols, vals, r, x.data(), b.data());
}

MultigridHierarchy::MultigridHierarchy(const GridSpec& fine, const MultigridOptions& options)
    : options_(options)
{
    const int available = coarsening_levels(fine.n_space(), options.coarse_points);
    const int levels = options.levels == 0 ? available : options.levels;
    if (levels != available)
        throw std::invalid_argument("multigrid: n_space = " + std::to_string(fine.n_space()) +
                                    " requires levels = " + std::to_string(available) +
                                    " for coarse_points = " +
                                    std::to_string(options.coarse_points) + ", got " +
                                    std::to_string(levels));
    if (options.pre_sweeps < 0 || options.post_sweeps < 0)
        throw std::invalid_argument("multigrid: sweep counts must be non-negative");
    options_.levels = levels;

    for (int k = 0; k <= levels; ++k) {
        grids_.push_back(fine.with_space_points(options.coarse_points << k));
        matrices_.push_back(assemble_Q(grids_.back()));
    }
    coarse_ = std::make_unique<DenseCholesky>(matrices_.front().to_dense());

    // SPD spot check on the small levels; level 0 is certified by the factorization.
    for (int k = 1; k <= levels && matrices_[static_cast<std::size_t>(k)].rows() <= 2048; ++k) {
        const CsrMatrix& q = matrices_[static_cast<std::size_t>(k)];
        lanczos_condition_estimate(matrix_operator(q), q.rows(), 20);
    }
}

void MultigridHierarchy::cycle(int k, std::span<double> x, std::span<const double> b,
                               CycleType type, CycleTrace* trace) const
{
    if (k < 0 || k > finest_level())
        throw std::out_of_range("multigrid cycle: level out of range");
    if (trace)
        trace->record(k, type);
    if (k == 0) {
        coarse_->solve(b, x);
        return;
    }
    const CsrMatrix& q = matrix(k);
    const int slices = grid(k).n_time() + 1;
    const int n_coarse = grid(k - 1).n_space();

    gauss_seidel_sweep(q, x, b, options_.pre_sweeps);

    std::vector<double> residual(x.size());
    q.residual(x, b, residual);
    const std::vector<double> coarse_rhs = restrict_field(residual, grid(k).n_space(), slices);
    std::vector<double> correction(coarse_rhs.size(), 0.0);
    cycle(k - 1, correction, coarse_rhs, type, trace);
    if (type == CycleType::W)
        cycle(k - 1, correction, coarse_rhs, type, trace);
    if (type == CycleType::F)
        cycle(k - 1, correction, coarse_rhs, CycleType::V, trace);
    interpolate_add(correction, n_coarse, slices, x);

    if (options_.symmetric)
        gauss_seidel_backward_sweep(q, x, b, options_.post_sweeps);
    else
        gauss_seidel_sweep(q, x, b, options_.post_sweeps);
}

std::vector<double> MultigridHierarchy::apply(std::span<const double> b) const
{
    std::vector<double> x(size(finest_level()), 0.0);
    cycle(finest_level(), x, b, options_.cycle);
    return x;
}

LinearOperator MultigridHierarchy::preconditioner() const
{
    return {size(finest_level()), [this](std::span<const double> b, std::span<double> y) {
                std::fill(y.begin(), y.end(), 0.0);
                cycle(finest_level(), y, b, options_.cycle);
            }};
}

} // namespace mfg
