#include "mfg/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mfg/finite_difference.hpp"
#include "mfg/snapshot.hpp"

#ifndef MFG_VERSION
#define MFG_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mfg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt17(double v)
{
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

/// Comment block carrying the full parameter set of a run.
std::string header_comments(const RunConfig& config, const std::string& command)
{
    std::ostringstream s;
    s << "# command = " << command << "\n# version = " << MFG_VERSION << "\n";
    std::istringstream text(config.to_text());
    std::string line;
    std::string section;
    while (std::getline(text, line)) {
        if (line.empty())
            continue;
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        s << "# " << section << "." << line << "\n";
    }
    return s.str();
}

void ensure_directory(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw SnapshotError("cannot create output directory '" + dir + "': " + ec.message());
}

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw SnapshotError("cannot open '" + path.string() + "' for writing");
    return out;
}

template <typename Body>
int guarded(std::ostream& log, Body&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const std::invalid_argument& e) {
        log << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const SnapshotError& e) {
        log << "I/O error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::ios_base::failure& e) {
        log << "I/O error: " << e.what() << "\n";
        return exit_io;
    } catch (const fs::filesystem_error& e) {
        log << "I/O error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::exception& e) {
        log << "solver failure: " << e.what() << "\n";
        return exit_unconverged;
    }
}

json diagnostics_json(const SolutionDiagnostics& d)
{
    return {{"hjb_sup", d.hjb_sup},         {"hjb_rms", d.hjb_rms},
            {"fp_sup", d.fp_sup},           {"fp_rms", d.fp_rms},
            {"constraint_rms", d.constraint_rms}, {"mass_deviation", d.mass_deviation},
            {"min_density", d.min_density}};
}

json snapshot_json(const SnapshotRecord& r)
{
    return {{"path", fs::path(r.path).filename().string()},
            {"format", to_string(r.format)},
            {"shape", {r.slices, r.n, r.n}},
            {"checksum", r.checksum}};
}

std::vector<std::pair<int, int>> sweep_grids(const RunConfig& c)
{
    std::vector<std::pair<int, int>> grids;
    if (c.sweep.sizes.empty())
        grids.emplace_back(c.n_space, c.n_time);
    for (std::size_t s = 0; s < c.sweep.sizes.size(); ++s)
        grids.emplace_back(c.sweep.sizes[s],
                           c.sweep.time_steps.empty() ? c.sweep.sizes[s] : c.sweep.time_steps[s]);
    return grids;
}

std::string grid_label(int n, int nt) { return std::to_string(n) + "x" + std::to_string(n) + "x" + std::to_string(nt); }

} // namespace

std::string format_seconds(double seconds)
{
    std::ostringstream s;
    s << std::setprecision(3) << seconds;
    return s.str();
}

RunConfig load_config_or_manifest(const std::string& path)
{
    RunConfig config;
    if (fs::path(path).extension() == ".json") {
        std::ifstream in(path);
        if (!in)
            throw std::ios_base::failure("cannot open manifest '" + path + "'");
        json manifest;
        try {
            manifest = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
        if (!manifest.contains("config_text") || !manifest["config_text"].is_string())
            throw ConfigError(path + ": manifest has no config_text entry");
        config = parse_run_config(manifest["config_text"].get<std::string>());
    } else {
        config = load_run_config(path);
    }
    apply_environment_overrides(config);
    config.validate();
    return config;
}

CouplingSpec build_coupling(const RunConfig& config, const GridSpec& grid)
{
    switch (config.coupling) {
    case CouplingKind::sincos:
        return make_congestion_coupling(sincos_potential(grid));
    case CouplingKind::table:
        return make_congestion_coupling(load_potential_table(config.potential_file, grid.n_space()));
    case CouplingKind::free:
        return make_free_coupling(grid);
    }
    throw std::invalid_argument("unknown coupling kind");
}

Plane build_initial_density(const GridSpec& grid)
{
    return discretize_initial_density([](double, double) { return 1.0; }, grid);
}

LinsolveResult run_linsolve_case(const RunConfig& base, const LinsolveCase& setup)
{
    const GridSpec grid = base.grid(setup.n_space, setup.n_time, setup.viscosity);
    CPConfig cp = base.solver;
    cp.linear_solver = setup.solver;
    cp.preconditioner = setup.preconditioner;
    // reduce each solve's own initial residual; linear_tolerance * ||b|| stays as the floor
    cp.linear_reduction = setup.reduction;
    PrimalDualSolver solver(grid, build_coupling(base, grid), build_initial_density(grid), cp);
    const MfgSolution sol = solver.solve();

    LinsolveResult r;
    r.setup = setup;
    r.cp_iterations = sol.iterations;
    r.converged = sol.converged;
    for (const auto& rec : sol.history) {
        r.average_iterations += rec.linear_iterations;
        r.max_iterations = std::max(r.max_iterations, rec.linear_iterations);
        r.average_seconds += rec.linear_seconds;
        if (!rec.linear_converged)
            ++r.unconverged_solves;
    }
    if (!sol.history.empty()) {
        r.average_iterations /= static_cast<double>(sol.history.size());
        r.average_seconds /= static_cast<double>(sol.history.size());
    }
    return r;
}

ConditionRow estimate_condition(const RunConfig& base, double viscosity, int n_space, int n_time,
                                int iterations, bool preconditioned, double tolerance)
{
    LanczosOptions lanczos;
    lanczos.max_iterations = iterations;
    lanczos.ritz_tolerance = tolerance;
    const auto start = Clock::now();
    const GridSpec grid = base.grid(n_space, n_time, viscosity);
    const NormalOperator normal(grid);
    const LinearOperator q{normal.size(), [&normal](std::span<const double> x,
                                                    std::span<double> y) { normal.apply(x, y); }};
    ConditionRow row;
    row.viscosity = viscosity;
    row.n_space = n_space;
    row.n_time = n_time;
    row.plain = lanczos_condition_estimate(q, q.size, lanczos);
    if (preconditioned) {
        MultigridOptions opts = base.solver.multigrid;
        opts.cycle = CycleType::V;
        opts.symmetric = true;
        opts.post_sweeps = opts.pre_sweeps;
        const MultigridHierarchy hierarchy(grid, opts);
        const LinearOperator p = hierarchy.preconditioner();
        std::vector<double> tmp(q.size);
        const LinearOperator pq{q.size, [&](std::span<const double> x, std::span<double> y) {
                                    q.apply(x, tmp);
                                    p.apply(tmp, y);
                                }};
        lanczos.metric = &q;
        row.multigrid = lanczos_condition_estimate(pq, q.size, lanczos);
    }
    row.seconds = seconds_since(start);
    return row;
}

int cmd_solve(const std::string& config_path, std::ostream& log)
{
    return guarded(log, [&]() {
        const RunConfig config = load_config_or_manifest(config_path);
        const GridSpec grid = config.grid();
        const CouplingSpec coupling = build_coupling(config, grid);
        const Plane initial = build_initial_density(grid);
        ensure_directory(config.output.directory);
        const fs::path dir(config.output.directory);

        const auto start = Clock::now();
        PrimalDualSolver solver(grid, coupling, initial, config.solver);
        const double setup_seconds = seconds_since(start);
        log << "solving " << grid_label(grid.n_space(), grid.n_time()) << ", T = "
            << grid.horizon() << ", nu = " << grid.viscosity() << "\n";
        const MfgSolution sol = solver.solve([&log](const IterationRecord& r) {
            if (r.iteration == 1 || r.iteration % 10 == 0)
                log << "  iteration " << r.iteration << "  change " << std::setprecision(3)
                    << std::scientific << r.change << std::defaultfloat << "  linear its "
                    << r.linear_iterations << "\n";
        });
        const double total = seconds_since(start);

        json outputs = json::array();
        const auto ks = snapshot_indices(grid.n_time(), config.output.snapshot_stride);
        const int n = grid.n_space();
        for (SnapshotFormat f : config.output.formats) {
            const std::string ext = f == SnapshotFormat::csv ? ".csv" : ".raw";
            outputs.push_back(snapshot_json(write_field_snapshot(
                select_slices(sol.m.values(), sol.m.slices(), n, ks),
                (dir / ("density" + ext)).string(), f)));
            if (config.output.write_values) {
                outputs.push_back(snapshot_json(write_field_snapshot(
                    select_slices(sol.u.values(), sol.u.slices(), n, ks),
                    (dir / ("value" + ext)).string(), f)));
                FieldSnapshot lambda{1, static_cast<std::uint64_t>(n),
                                     std::vector<double>(sol.lambda.values().begin(),
                                                         sol.lambda.values().end()),
                                     {0}};
                outputs.push_back(snapshot_json(
                    write_field_snapshot(lambda, (dir / ("multiplier" + ext)).string(), f)));
            }
        }

        const int k_ref = grid.n_time() / 2;
        const auto series = turnpike_distance(sol.m, extract_plane(sol.m, k_ref), grid);
        {
            auto out = open_output(dir / "turnpike.csv");
            out << header_comments(config, "solve") << "# reference = m^" << k_ref << "\n"
                << "k,t,distance\n";
            for (std::size_t k = 0; k < series.size(); ++k)
                out << k << ',' << fmt17(static_cast<double>(k) * grid.dt()) << ','
                    << fmt17(series[k]) << '\n';
        }
        {
            auto out = open_output(dir / "history.csv");
            out << header_comments(config, "solve")
                << "iteration,change,linear_iterations,linear_residual,objective,seconds\n";
            for (const auto& r : sol.history)
                out << r.iteration << ',' << fmt17(r.change) << ',' << r.linear_iterations << ','
                    << fmt17(r.linear_residual) << ',' << fmt17(r.objective) << ','
                    << format_seconds(r.total_seconds) << '\n';
        }

        json history = json::array();
        for (const auto& r : sol.history)
            history.push_back({{"iteration", r.iteration},
                               {"change", r.change},
                               {"linear_iterations", r.linear_iterations},
                               {"linear_residual", r.linear_residual},
                               {"linear_converged", r.linear_converged},
                               {"objective", r.objective},
                               {"seconds", r.total_seconds}});
        const double other = std::max(0.0, total - sol.linear_seconds - sol.prox_seconds);
        json manifest{
            {"command", "solve"},
            {"version", MFG_VERSION},
            {"config_text", config.to_text()},
            {"converged", sol.converged},
            {"iterations", sol.iterations},
            {"diagnostics", diagnostics_json(sol.diagnostics)},
            {"timings",
             {{"linear_solves", format_seconds(sol.linear_seconds)},
              {"prox", format_seconds(sol.prox_seconds)},
              {"setup", format_seconds(setup_seconds)},
              {"other", format_seconds(other)},
              {"total", format_seconds(total)}}},
            {"turnpike_reference_slice", k_ref},
            {"outputs", outputs},
            {"history", history}};
        auto mf = open_output(dir / "manifest.json");
        mf << manifest.dump(2) << '\n';
        if (!mf)
            throw SnapshotError("failed writing manifest");

        const auto& d = sol.diagnostics;
        log << (sol.converged ? "converged" : "NOT converged") << " after " << sol.iterations
            << " iterations; mass deviation " << d.mass_deviation << ", HJB sup " << d.hjb_sup
            << ", FP sup " << d.fp_sup << "\noutputs in " << dir.string() << "\n";
        return sol.converged ? exit_ok : exit_unconverged;
    });
}

int cmd_bench_linsolve(const std::string& config_path, std::ostream& log)
{
    return guarded(log, [&]() {
        const RunConfig config = load_config_or_manifest(config_path);
        if (config.sweep.viscosities.empty())
            throw ConfigError("sweep.viscosities must list at least one viscosity");
        if (config.sweep.reductions.empty())
            throw ConfigError("sweep.reductions must list at least one reduction factor");
        const auto grids = sweep_grids(config);
        const auto solvers = config.sweep.solvers.empty()
                                 ? std::vector<LinearSolverKind>{config.solver.linear_solver}
                                 : config.sweep.solvers;
        const auto preconds =
            config.sweep.preconditioners.empty()
                ? std::vector<PreconditionerKind>{config.solver.preconditioner}
                : config.sweep.preconditioners;

        std::vector<LinsolveCase> cases;
        for (auto s : solvers)
            for (auto p : preconds)
                for (double r : config.sweep.reductions)
                    for (double nu : config.sweep.viscosities)
                        for (auto [n, nt] : grids)
                            cases.push_back({nu, n, nt, s, p, r});

        ensure_directory(config.output.directory);
        std::vector<LinsolveResult> results;
        if (config.sweep.parallel) {
            std::vector<std::future<LinsolveResult>> jobs;
            for (const auto& c : cases)
                jobs.push_back(std::async(std::launch::async,
                                          [&config, c]() { return run_linsolve_case(config, c); }));
            for (auto& j : jobs)
                results.push_back(j.get());
        } else {
            for (const auto& c : cases) {
                results.push_back(run_linsolve_case(config, c));
                const auto& r = results.back();
                log << to_string(c.solver) << "/" << to_string(c.preconditioner) << " reduction "
                    << c.reduction << " nu " << c.viscosity << " " << grid_label(c.n_space, c.n_time)
                    << ": " << r.average_iterations << " its/solve over " << r.cp_iterations
                    << " CP iterations\n";
            }
        }
        const bool timed = !config.sweep.parallel;
        const fs::path dir(config.output.directory);
        {
            auto out = open_output(dir / "bench_linsolve.csv");
            out << header_comments(config, "bench-linsolve");
            if (!timed)
                out << "# timing columns left empty: sweep.parallel = true\n";
            out << "solver,preconditioner,reduction,nu,n_space,n_time,cp_iterations,cp_converged,"
                   "avg_linear_iterations,max_linear_iterations,unconverged_solves,avg_solve_seconds\n";
            for (const auto& r : results)
                out << to_string(r.setup.solver) << ',' << to_string(r.setup.preconditioner) << ','
                    << r.setup.reduction << ',' << r.setup.viscosity << ',' << r.setup.n_space
                    << ',' << r.setup.n_time << ',' << r.cp_iterations << ',' << r.converged
                    << ',' << r.average_iterations << ',' << r.max_iterations << ','
                    << r.unconverged_solves << ','
                    << (timed ? format_seconds(r.average_seconds) : std::string()) << '\n';
        }
        {
            // rows = nu, columns = grid size, one block per solver / preconditioner / metric
            auto out = open_output(dir / "bench_linsolve_table.csv");
            out << header_comments(config, "bench-linsolve");
            out << "solver,preconditioner,metric,nu";
            for (auto [n, nt] : grids)
                out << ',' << grid_label(n, nt);
            out << '\n';
            std::size_t idx = 0;
            for (auto s : solvers)
                for (auto p : preconds)
                    for (double red : config.sweep.reductions) {
                        const std::size_t block = idx;
                        for (int metric = 0; metric < (timed ? 2 : 1); ++metric) {
                            std::size_t at = block;
                            for (double nu : config.sweep.viscosities) {
                                std::ostringstream label;
                                label << (metric == 0 ? "avg_iterations@" : "avg_seconds@") << red;
                                out << to_string(s) << ',' << to_string(p) << ',' << label.str()
                                    << ',' << nu;
                                for (std::size_t g = 0; g < grids.size(); ++g, ++at) {
                                    const auto& r = results[at];
                                    out << ','
                                        << (metric == 0 ? fmt17(r.average_iterations)
                                                        : format_seconds(r.average_seconds));
                                }
                                out << '\n';
                            }
                        }
                        idx = block + config.sweep.viscosities.size() * grids.size();
                    }
        }
        log << "tables written to " << dir.string() << "\n";
        const bool all = std::all_of(results.begin(), results.end(),
                                     [](const LinsolveResult& r) { return r.converged; });
        return all ? exit_ok : exit_unconverged;
    });
}

int cmd_cond_estimate(const std::string& config_path, std::ostream& log)
{
    return guarded(log, [&]() {
        const RunConfig config = load_config_or_manifest(config_path);
        if (config.sweep.viscosities.empty())
            throw ConfigError("sweep.viscosities must list at least one viscosity");
        ensure_directory(config.output.directory);
        const fs::path dir(config.output.directory);
        auto out = open_output(dir / "cond_estimate.csv");
        out << header_comments(config, "cond-estimate");
        out << "nu,n_space,n_time,horizon,lanczos_iterations,lambda_min,lambda_max,kappa,ritz_residual,"
               "converged";
        if (config.sweep.preconditioned)
            out << ",mg_iterations,mg_lambda_min,mg_lambda_max,mg_kappa,mg_ritz_residual,mg_converged";
        out << ",seconds\n";
        for (auto [n, nt] : sweep_grids(config)) {
            for (double nu : config.sweep.viscosities) {
                const ConditionRow row = estimate_condition(config, nu, n, nt,
                                                            config.sweep.lanczos_iterations,
                                                            config.sweep.preconditioned,
                                                            config.sweep.lanczos_tolerance);
                out << nu << ',' << n << ',' << nt << ',' << config.horizon << ','
                    << row.plain.iterations << ',' << fmt17(row.plain.lambda_min) << ','
                    << fmt17(row.plain.lambda_max) << ',' << fmt17(row.plain.kappa) << ','
                    << fmt17(row.plain.ritz_residual) << ',' << (row.plain.converged ? 1 : 0);
                if (row.multigrid)
                    out << ',' << row.multigrid->iterations << ','
                        << fmt17(row.multigrid->lambda_min) << ','
                        << fmt17(row.multigrid->lambda_max) << ',' << fmt17(row.multigrid->kappa)
                        << ',' << fmt17(row.multigrid->ritz_residual) << ','
                        << (row.multigrid->converged ? 1 : 0);
                out << ',' << format_seconds(row.seconds) << '\n';
                log << grid_label(n, nt) << " nu " << nu << ": kappa " << row.plain.kappa << " ("
                    << row.plain.iterations << " steps"
                    << (row.plain.converged ? "" : ", not converged") << ")";
                if (row.multigrid)
                    log << ", preconditioned " << row.multigrid->kappa;
                log << "\n";
            }
        }
        log << "table written to " << (dir / "cond_estimate.csv").string() << "\n";
        return exit_ok;
    });
}

int cmd_info(const std::string& snapshot_path, std::ostream& log)
{
    return guarded(log, [&]() {
        const FieldSnapshot f = read_field_snapshot(snapshot_path);
        const bool sidecar = fs::exists(snapshot_path + ".json");
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        for (double v : f.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        log << "file      " << snapshot_path << "\n"
            << "shape     " << f.slices << " x " << f.n << " x " << f.n << "\n"
            << "slices    ";
        for (std::size_t s = 0; s < f.time_indices.size(); ++s)
            log << (s ? "," : "") << f.time_indices[s];
        log << "\nchecksum  " << field_checksum(f.values)
            << (sidecar ? " (matches sidecar)" : " (no sidecar)") << "\n";
        if (!f.values.empty()) {
            const double h2 = 1.0 / static_cast<double>(f.n * f.n);
            log << "min/max   " << lo << " / " << hi << "\n"
                << "mean mass " << h2 * sum / static_cast<double>(f.slices) << "\n";
        }
        return exit_ok;
    });
}

} // namespace mfg
