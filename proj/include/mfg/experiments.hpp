#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfg/config.hpp"
#include "mfg/coupling.hpp"
#include "mfg/primal_dual.hpp"

namespace mfg {

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_unconverged = 2, exit_io = 3 };

/// Reads a config file, or the `config_text` echoed inside a run manifest
/// (files ending in .json), then applies environment overrides and validates.
RunConfig load_config_or_manifest(const std::string& path);

CouplingSpec build_coupling(const RunConfig& config, const GridSpec& grid);
Plane build_initial_density(const GridSpec& grid);

struct LinsolveCase {
    double viscosity = 0.0;
    int n_space = 0;
    int n_time = 0;
    LinearSolverKind solver = LinearSolverKind::bicgstab;
    PreconditionerKind preconditioner = PreconditionerKind::multigrid;
    double reduction = 1e-3;
};

struct LinsolveResult {
    LinsolveCase setup;
    int cp_iterations = 0;
    bool converged = false;
    double average_iterations = 0.0;
    double max_iterations = 0.0;
    double average_seconds = 0.0;
    int unconverged_solves = 0;
};

/// Full primal-dual run where every linear solve reduces its initial residual by
/// `reduction`, bounded below by the configured solver.linear_tolerance * ||b||.
LinsolveResult run_linsolve_case(const RunConfig& base, const LinsolveCase& setup);

struct ConditionRow {
    double viscosity = 0.0;
    int n_space = 0;
    int n_time = 0;
    ConditionEstimate plain;
    std::optional<ConditionEstimate> multigrid;
    double seconds = 0.0;
};

/// Lanczos estimate for Q and, when requested, for P Q with P a symmetric
/// V-cycle (forward pre-smoothing, backward post-smoothing) in the Q inner product.
/// `tolerance` = 0 runs exactly `iterations` steps, otherwise it is a cap.
ConditionRow estimate_condition(const RunConfig& base, double viscosity, int n_space, int n_time,
                                int iterations, bool preconditioned, double tolerance = 0.0);

int cmd_solve(const std::string& config_path, std::ostream& log);
int cmd_bench_linsolve(const std::string& config_path, std::ostream& log);
int cmd_cond_estimate(const std::string& config_path, std::ostream& log);
int cmd_info(const std::string& snapshot_path, std::ostream& log);

/// "1.23e-04"-style rendering with three significant digits.
std::string format_seconds(double seconds);

} // namespace mfg
