#include "mfg/primal_dual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mfg/finite_difference.hpp"

namespace mfg {

const char* to_string(LinearSolverKind kind)
{
    switch (kind) {
    case LinearSolverKind::dense_direct: return "direct";
    case LinearSolverKind::cg: return "cg";
    case LinearSolverKind::bicgstab: return "bicgstab";
    }
    return "?";
}

const char* to_string(PreconditionerKind kind)
{
    switch (kind) {
    case PreconditionerKind::identity: return "identity";
    case PreconditionerKind::jacobi: return "jacobi";
    case PreconditionerKind::multigrid: return "multigrid";
    }
    return "?";
}

LinearSolverKind parse_linear_solver(const std::string& text)
{
    if (text == "direct" || text == "dense" || text == "direct-dense")
        return LinearSolverKind::dense_direct;
    if (text == "cg")
        return LinearSolverKind::cg;
    if (text == "bicgstab")
        return LinearSolverKind::bicgstab;
    throw std::invalid_argument("unknown linear solver '" + text +
                                "' (expected direct, cg or bicgstab)");
}

PreconditionerKind parse_preconditioner(const std::string& text)
{
    if (text == "identity" || text == "none")
        return PreconditionerKind::identity;
    if (text == "jacobi")
        return PreconditionerKind::jacobi;
    if (text == "multigrid" || text == "mg")
        return PreconditionerKind::multigrid;
    throw std::invalid_argument("unknown preconditioner '" + text +
                                "' (expected identity, jacobi or multigrid)");
}

void CPConfig::validate() const
{
    std::ostringstream err;
    if (!(gamma > 0.0))
        err << "solver.gamma must be positive (got " << gamma << "); ";
    if (!(tau > 0.0))
        err << "solver.tau must be positive (got " << tau << "); ";
    if (gamma > 0.0 && tau > 0.0 && !(gamma * tau < 1.0))
        err << "solver.gamma * solver.tau must be < 1 (gamma = " << gamma << ", tau = " << tau
            << "); ";
    if (!(theta >= 0.0 && theta <= 1.0))
        err << "solver.theta must lie in [0, 1] (got " << theta << "); ";
    if (!(tolerance > 0.0))
        err << "solver.tolerance must be positive; ";
    if (max_iterations < 1)
        err << "solver.max_iterations must be positive; ";
    if (!(linear_tolerance > 0.0 && linear_tolerance < 1.0))
        err << "solver.linear_tolerance must lie in (0, 1); ";
    if (!(linear_reduction >= 0.0 && linear_reduction < 1.0))
        err << "solver.linear_reduction must lie in [0, 1); ";
    if (linear_max_iterations < 1)
        err << "solver.linear_max_iterations must be positive; ";
    const std::string msg = err.str();
    if (!msg.empty())
        throw std::invalid_argument(msg.substr(0, msg.size() - 2));
}

double rms(std::span<const double> values)
{
    if (values.empty())
        return 0.0;
    double acc = 0.0;
    for (double v : values)
        acc += v * v;
    return std::sqrt(acc / static_cast<double>(values.size()));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::size_t max_dense_unknowns = 8000;

} // namespace

LinearSystemSolver::LinearSystemSolver(const GridSpec& grid, const CPConfig& config)
    : grid_(grid), config_(config), normal_(grid)
{
    const std::size_t n = normal_.size();
    op_ = {n, [this](std::span<const double> x, std::span<double> y) { normal_.apply(x, y); }};
    precond_ = identity_operator(n);

    if (config.linear_solver == LinearSolverKind::dense_direct) {
        if (n > max_dense_unknowns)
            throw std::invalid_argument("solver.linear_solver = direct supports at most " +
                                        std::to_string(max_dense_unknowns) + " unknowns, got " +
                                        std::to_string(n));
        dense_ = std::make_unique<DenseCholesky>(assemble_Q(grid).to_dense());
        return;
    }
    switch (config.preconditioner) {
    case PreconditionerKind::identity:
        break;
    case PreconditionerKind::jacobi:
        assembled_ = std::make_unique<CsrMatrix>(assemble_Q(grid));
        precond_ = jacobi_operator(*assembled_);
        break;
    case PreconditionerKind::multigrid:
        hierarchy_ = std::make_unique<MultigridHierarchy>(grid, config.multigrid);
        precond_ = hierarchy_->preconditioner();
        break;
    }
}

LinearSystemSolver::~LinearSystemSolver() = default;

SolveReport LinearSystemSolver::solve(std::span<const double> b, std::span<const double> x0) const
{
    if (dense_) {
        SolveReport report;
        report.solution = dense_->solve(b);
        std::vector<double> r(b.size());
        normal_.apply(report.solution, r);
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = b[i] - r[i];
        report.final_residual = norm2(r);
        report.initial_residual = norm2(b);
        report.iterations = 1;
        report.converged = std::isfinite(report.final_residual);
        return report;
    }
    const Tolerance tol{config_.linear_tolerance * norm2(b), config_.linear_reduction};
    if (config_.linear_solver == LinearSolverKind::cg)
        return conjugate_gradient(op_, b, precond_, tol, config_.linear_max_iterations, x0);
    return bicgstab(op_, b, precond_, identity_operator(op_.size), x0, tol,
                    config_.linear_max_iterations);
}

PrimalDualSolver::PrimalDualSolver(const GridSpec& grid, CouplingSpec coupling,
                                   const Plane& initial_density, const CPConfig& config)
    : grid_(grid), coupling_(std::move(coupling)), initial_density_(initial_density),
      config_(config), rhs_(constraint_rhs(initial_density, grid)), linear_(grid, config)
{
    config_.validate();
}

CPState PrimalDualSolver::initial_state() const
{
    CPState s;
    s.m = make_density(grid_);
    for (int k = 0; k <= grid_.n_time(); ++k)
        store_plane(s.m, k, initial_density_);
    s.m_tilde = s.m;
    s.n = make_density(grid_);
    s.w = make_flux(grid_);
    s.w_tilde = s.w;
    s.v = make_flux(grid_);
    s.z = make_constraint(grid_);
    return s;
}

IterationRecord PrimalDualSolver::step(CPState& s) const
{
    const auto start = Clock::now();
    const double gamma = config_.gamma;
    const double tau = config_.tau;
    const double theta = config_.theta;
    IterationRecord rec;
    rec.iteration = s.iteration + 1;

    // (1) dual update through the normal equations
    DensityField shifted_m = s.m_tilde;
    {
        auto dst = shifted_m.values();
        auto nv = s.n.values();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = gamma * dst[i] - nv[i];
    }
    FluxField shifted_w = s.w_tilde;
    {
        auto dst = shifted_w.values();
        auto vv = s.v.values();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = gamma * dst[i] - vv[i];
    }
    ConstraintField b = apply_C(shifted_m, shifted_w, grid_);
    {
        auto dst = b.values();
        auto r = rhs_.values();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = gamma * r[i] - dst[i];
    }
    const auto linear_start = Clock::now();
    const SolveReport report = linear_.solve(b.values(), s.z.values());
    rec.linear_seconds = seconds_since(linear_start);
    rec.linear_iterations = report.iterations;
    rec.linear_initial_residual = report.initial_residual;
    rec.linear_residual = report.final_residual;
    rec.linear_converged = report.converged;
    if (report.breakdown) {
        std::ostringstream msg;
        msg << "primal-dual iteration " << rec.iteration << ": linear solver breakdown ("
            << *report.breakdown << "), residual " << report.final_residual;
        throw std::runtime_error(msg.str());
    }
    std::copy(report.solution.begin(), report.solution.end(), s.z.values().begin());

    // (2) (n, v) = C^* z
    detail::apply_C_adjoint_flat(s.z.values().data(), s.n.values().data(), s.v.values().data(),
                                 grid_);

    // (3) primal proximal step
    const DensityField m_prev = s.m;
    const FluxField w_prev = s.w;
    {
        auto m = s.m.values();
        auto n = s.n.values();
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] += tau * n[i];
        auto w = s.w.values();
        auto v = s.v.values();
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] += tau * v[i];
    }
    const auto prox_start = Clock::now();
    prox_phi(s.m, s.w, tau, coupling_, grid_);
    rec.prox_seconds = seconds_since(prox_start);

    // (4) extrapolation and change measurement
    double change_sq = 0.0;
    {
        auto m = s.m.values();
        auto mp = m_prev.values();
        auto mt = s.m_tilde.values();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double d = m[i] - mp[i];
            change_sq += d * d;
            mt[i] = m[i] + theta * d;
        }
        auto w = s.w.values();
        auto wp = w_prev.values();
        auto wt = s.w_tilde.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = w[i] - wp[i];
            change_sq += d * d;
            wt[i] = w[i] + theta * d;
        }
    }
    rec.change = std::sqrt(change_sq / static_cast<double>(s.m.size() + s.w.size()));
    if (!std::isfinite(rec.change))
        throw std::runtime_error("primal-dual iteration " + std::to_string(rec.iteration) +
                                 ": non-finite iterate");
    rec.objective = eval_objective(s.m, s.w, coupling_, grid_);
    s.iteration = rec.iteration;
    s.last_change = rec.change;
    rec.total_seconds = seconds_since(start);
    return rec;
}

MfgSolution PrimalDualSolver::solve(const Observer& observer) const
{
    return solve_from(initial_state(), observer);
}

MfgSolution PrimalDualSolver::solve_from(CPState state, const Observer& observer) const
{
    MfgSolution sol;
    while (state.iteration < config_.max_iterations) {
        const IterationRecord rec = step(state);
        sol.linear_seconds += rec.linear_seconds;
        sol.prox_seconds += rec.prox_seconds;
        sol.total_seconds += rec.total_seconds;
        sol.history.push_back(rec);
        if (observer)
            observer(rec);
        if (rec.change <= config_.tolerance) {
            sol.converged = true;
            break;
        }
    }
    sol.iterations = state.iteration;
    Multipliers mult = extract_multiplier(state.z, state.m, coupling_, grid_);
    sol.lambda = std::move(mult.lambda);
    sol.u = std::move(mult.u);
    sol.m = std::move(state.m);
    sol.w = std::move(state.w);
    sol.diagnostics =
        compute_diagnostics(sol.m, sol.w, sol.u, coupling_, initial_density_, grid_);
    return sol;
}

Multipliers extract_multiplier(const ConstraintField& z, const DensityField& m,
                               const CouplingSpec& coupling, const GridSpec& grid)
{
    if (z.slices() != grid.n_time() + 1 || m.slices() != grid.n_time() + 1)
        throw std::invalid_argument("extract_multiplier: field shapes do not match grid");
    const int n = grid.n_space();
    const int nt = grid.n_time();
    Multipliers out{extract_plane(z.slice(0), n), ValueField(nt + 1, n)};
    for (int k = 0; k < nt; ++k) {
        const auto src = z.slice(k + 1);
        std::copy(src.begin(), src.end(), out.u.slice(k).begin());
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.u(nt, i, j) = coupling.terminal_cost(i, j, m(nt, i, j));
    return out;
}

namespace {

Plane value_plane(const ValueField& u, int k) { return extract_plane(u.slice(k), u.n_space()); }

void finish_report(ResidualReport& report)
{
    const auto values = report.field.values();
    double sup = 0.0;
    for (double v : values)
        sup = std::max(sup, std::abs(v));
    report.sup = sup;
    report.rms = rms(values);
}

} // namespace

ResidualReport hjb_residual(const ValueField& u, const DensityField& m,
                            const CouplingSpec& coupling, const GridSpec& grid)
{
    if (u.slices() != grid.n_time() + 1 || m.slices() != grid.n_time() + 1 ||
        u.n_space() != grid.n_space() || m.n_space() != grid.n_space())
        throw std::invalid_argument("hjb_residual: field shapes do not match grid");
    const int n = grid.n_space();
    const int nt = grid.n_time();
    const double qp = grid.conjugate_exponent();
    const double inv_dt = 1.0 / grid.dt();
    ResidualReport report{make_dual(grid)};
    for (int k = 0; k < nt; ++k) {
        const Plane uk = value_plane(u, k);
        const Plane lap = apply_laplacian(uk, grid);
        const VectorPlane grad = apply_upwind_gradient(uk, grid);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double gnorm = norm(grad(i, j));
                const double hamiltonian = gnorm == 0.0 ? 0.0 : std::pow(gnorm, qp) / qp;
                report.field(k, i, j) = -(u(k + 1, i, j) - u(k, i, j)) * inv_dt -
                                        grid.viscosity() * lap(i, j) + hamiltonian -
                                        coupling.running_cost(i, j, m(k + 1, i, j));
            }
        }
    }
    finish_report(report);
    return report;
}

FluxField flux_from_value(const ValueField& u, const DensityField& m, const GridSpec& grid)
{
    const int n = grid.n_space();
    const int nt = grid.n_time();
    const double q = grid.exponent();
    const double power = (2.0 - q) / (q - 1.0);
    FluxField w = make_flux(grid);
    for (int k = 1; k <= nt; ++k) {
        const VectorPlane grad = apply_gradient(value_plane(u, k - 1), grid);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const Vec4& g = grad(i, j);
                const Vec4 p = project_K({-g[0], -g[1], -g[2], -g[3]});
                const double pn = norm(p);
                if (pn == 0.0)
                    continue;
                const double scale = m(k, i, j) * (power == 0.0 ? 1.0 : std::pow(pn, power));
                for (int c = 0; c < 4; ++c)
                    w(k - 1, i, j, c) = scale * p[c];
            }
        }
    }
    return w;
}

ResidualReport fp_residual(const DensityField& m, const ValueField& u, const GridSpec& grid)
{
    if (u.slices() != grid.n_time() + 1 || m.slices() != grid.n_time() + 1)
        throw std::invalid_argument("fp_residual: field shapes do not match grid");
    ResidualReport report{apply_A(m, grid)};
    const DualField bw = apply_B(flux_from_value(u, m, grid), grid);
    auto dst = report.field.values();
    auto src = bw.values();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += src[i];
    finish_report(report);
    return report;
}

std::vector<double> turnpike_distance(const DensityField& m, const Plane& reference,
                                      const GridSpec& grid)
{
    if (reference.n() != grid.n_space() || m.n_space() != grid.n_space())
        throw std::invalid_argument("turnpike_distance: reference does not match grid");
    const double h2 = grid.h() * grid.h();
    std::vector<double> series;
    series.reserve(static_cast<std::size_t>(m.slices()));
    const auto ref = reference.values();
    for (int k = 0; k < m.slices(); ++k) {
        const auto mk = m.slice(k);
        double acc = 0.0;
        for (std::size_t p = 0; p < mk.size(); ++p) {
            const double d = ref[p] - mk[p];
            acc += d * d;
        }
        series.push_back(std::sqrt(h2 * acc));
    }
    return series;
}

SolutionDiagnostics compute_diagnostics(const DensityField& m, const FluxField& w,
                                        const ValueField& u, const CouplingSpec& coupling,
                                        const Plane& initial_density, const GridSpec& grid)
{
    SolutionDiagnostics d;
    const ResidualReport hjb = hjb_residual(u, m, coupling, grid);
    const ResidualReport fp = fp_residual(m, u, grid);
    d.hjb_sup = hjb.sup;
    d.hjb_rms = hjb.rms;
    d.fp_sup = fp.sup;
    d.fp_rms = fp.rms;

    ConstraintField c = apply_C(m, w, grid);
    const ConstraintField rhs = constraint_rhs(initial_density, grid);
    {
        auto dst = c.values();
        auto r = rhs.values();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] -= r[i];
    }
    d.constraint_rms = rms(c.values());

    const double h2 = grid.h() * grid.h();
    const double target = h2 * initial_density.sum();
    d.min_density = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m.slices(); ++k) {
        double mass = 0.0;
        for (double v : m.slice(k)) {
            mass += v;
            if (k >= 1)
                d.min_density = std::min(d.min_density, v);
        }
        d.mass_deviation = std::max(d.mass_deviation, std::abs(h2 * mass - target));
    }
    return d;
}

} // namespace mfg
