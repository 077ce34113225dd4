#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfg/coupling.hpp"
#include "mfg/grid.hpp"
#include "mfg/krylov.hpp"
#include "mfg/multigrid.hpp"
#include "mfg/operators.hpp"

namespace mfg {

enum class LinearSolverKind { dense_direct, cg, bicgstab };
enum class PreconditionerKind { identity, jacobi, multigrid };

const char* to_string(LinearSolverKind kind);
const char* to_string(PreconditionerKind kind);
LinearSolverKind parse_linear_solver(const std::string& text);
PreconditionerKind parse_preconditioner(const std::string& text);

struct CPConfig {
    double gamma = 3.0;
    double tau = 0.3;
    double theta = 1.0;
    /// Stop when the RMS change of (m, w) between two iterations falls below this.
    double tolerance = 1e-6;
    int max_iterations = 1000;
    LinearSolverKind linear_solver = LinearSolverKind::bicgstab;
    PreconditionerKind preconditioner = PreconditionerKind::multigrid;
    /// Each linear solve stops once ||b - Q z|| <= linear_tolerance * ||b||.
    double linear_tolerance = 1e-8;
    /// Optional per-solve reduction factor: when positive, a solve may also stop
    /// once ||b - Q z|| <= linear_reduction * ||b - Q z0||, whichever bound is larger.
    double linear_reduction = 0.0;
    int linear_max_iterations = 1000;
    MultigridOptions multigrid;

    /// Throws std::invalid_argument naming the offending fields.
    void validate() const;
};

/// Full iterate of the primal-dual loop.  z stores (lambda, u^0..u^{N_T-1}).
struct CPState {
    DensityField m, m_tilde, n;
    FluxField w, w_tilde, v;
    ConstraintField z;
    int iteration = 0;
    double last_change = 0.0;
};

struct IterationRecord {
    int iteration = 0;
    /// RMS over all entries of the (m, w) change.
    double change = 0.0;
    double linear_iterations = 0.0;
    double linear_initial_residual = 0.0;
    double linear_residual = 0.0;
    bool linear_converged = false;
    double objective = 0.0;
    double linear_seconds = 0.0;
    double prox_seconds = 0.0;
    double total_seconds = 0.0;
};

struct ResidualReport {
    DualField field;
    double sup = 0.0;
    double rms = 0.0;
};

struct SolutionDiagnostics {
    double hjb_sup = 0.0, hjb_rms = 0.0;
    double fp_sup = 0.0, fp_rms = 0.0;
    double constraint_rms = 0.0;
    /// max_k |h^2 sum m^k - h^2 sum m_bar|
    double mass_deviation = 0.0;
    /// min over k >= 1 of m^k
    double min_density = 0.0;
};

struct MfgSolution {
    DensityField m;
    FluxField w;
    ValueField u;
    Plane lambda;
    std::vector<IterationRecord> history;
    bool converged = false;
    int iterations = 0;
    SolutionDiagnostics diagnostics;
    double linear_seconds = 0.0;
    double prox_seconds = 0.0;
    double total_seconds = 0.0;
};

/// Solves Q z = b with the configured backend.  Owns the assembled matrices,
/// the multigrid hierarchy or the dense factorization as needed.
class LinearSystemSolver {
public:
    LinearSystemSolver(const GridSpec& grid, const CPConfig& config);
    ~LinearSystemSolver();

    SolveReport solve(std::span<const double> b, std::span<const double> x0) const;
    const NormalOperator& normal_operator() const { return normal_; }
    const MultigridHierarchy* hierarchy() const { return hierarchy_.get(); }

private:
    GridSpec grid_;
    CPConfig config_;
    NormalOperator normal_;
    std::unique_ptr<CsrMatrix> assembled_;
    std::unique_ptr<MultigridHierarchy> hierarchy_;
    std::unique_ptr<DenseCholesky> dense_;
    LinearOperator op_;
    LinearOperator precond_;
};

/// Primal-dual iteration for min B(m,w) + F(m) subject to C(m,w) = (m_bar, 0):
///   z      <- -Q^{-1}( C(gamma (m~, w~) - (n, v)) - gamma (m_bar, 0) )
///   (n, v) <- C^* z
///   (m, w) <- prox_{tau phi}((m, w) + tau (n, v))
///   (m~,w~)<- (m, w) + theta ((m, w) - (m, w)_previous)
class PrimalDualSolver {
public:
    using Observer = std::function<void(const IterationRecord&)>;

    PrimalDualSolver(const GridSpec& grid, CouplingSpec coupling, const Plane& initial_density,
                     const CPConfig& config);

    const GridSpec& grid() const { return grid_; }
    const CPConfig& config() const { return config_; }
    const ConstraintField& rhs() const { return rhs_; }
    const LinearSystemSolver& linear_solver() const { return linear_; }

    /// m = m_bar in every slice, w = 0, all duals zero.
    CPState initial_state() const;
    /// One iteration; throws std::runtime_error on linear-solver breakdown or
    /// non-finite fields.
    IterationRecord step(CPState& state) const;
    MfgSolution solve(const Observer& observer = {}) const;
    MfgSolution solve_from(CPState state, const Observer& observer = {}) const;

private:
    GridSpec grid_;
    CouplingSpec coupling_;
    Plane initial_density_;
    CPConfig config_;
    ConstraintField rhs_;
    LinearSystemSolver linear_;
};

struct Multipliers {
    Plane lambda;
    ValueField u;
};

/// Splits z into lambda (slice 0) and u^0..u^{N_T-1}, and appends u^{N_T} = g(x, m^{N_T}).
Multipliers extract_multiplier(const ConstraintField& z, const DensityField& m,
                               const CouplingSpec& coupling, const GridSpec& grid);

/// -D_t u^k - nu Delta_h u^k + (1/q') |upwind gradient of u^k|^q' - f(x, m^{k+1}), k < N_T.
ResidualReport hjb_residual(const ValueField& u, const DensityField& m,
                            const CouplingSpec& coupling, const GridSpec& grid);

/// w^{k-1}_{ij} = m^k_{ij} |P|^((2-q)/(q-1)) P with P = P_K(-[D_h u^{k-1}]_{ij}), 0 where P = 0.
FluxField flux_from_value(const ValueField& u, const DensityField& m, const GridSpec& grid);

/// A m + B w(u, m), the discrete Fokker-Planck residual.
ResidualReport fp_residual(const DensityField& m, const ValueField& u, const GridSpec& grid);

/// k -> (h^2 sum_ij (reference_ij - m^k_ij)^2)^(1/2), k = 0..N_T.
std::vector<double> turnpike_distance(const DensityField& m, const Plane& reference,
                                      const GridSpec& grid);

SolutionDiagnostics compute_diagnostics(const DensityField& m, const FluxField& w,
                                        const ValueField& u, const CouplingSpec& coupling,
                                        const Plane& initial_density, const GridSpec& grid);

double rms(std::span<const double> values);

} // namespace mfg
