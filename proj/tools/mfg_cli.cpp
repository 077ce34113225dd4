#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mfg/experiments.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Finite-difference mean field game solver and benchmarks"};
    app.require_subcommand(1);
    std::string path;

    auto* solve = app.add_subcommand("solve", "run one primal-dual solve and write outputs");
    solve->add_option("config", path, "config file or run manifest")->required();
    auto* bench = app.add_subcommand("bench-linsolve",
                                     "average inner Krylov iterations over full solves");
    bench->add_option("config", path, "config file")->required();
    auto* cond = app.add_subcommand("cond-estimate", "Lanczos condition-number estimates");
    cond->add_option("config", path, "config file")->required();
    auto* info = app.add_subcommand("info", "describe and verify a field snapshot");
    info->add_option("snapshot", path, "snapshot file (.csv or .raw)")->required();
    app.footer(std::string("exit codes: 0 ok, 1 invalid config, 2 unconverged, 3 I/O error\n") +
               "environment: " + mfg::output_dir_env + " overrides output.directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mfg::exit_validation;
    }

    if (*solve)
        return mfg::cmd_solve(path, std::cerr);
    if (*bench)
        return mfg::cmd_bench_linsolve(path, std::cerr);
    if (*cond)
        return mfg::cmd_cond_estimate(path, std::cerr);
    return mfg::cmd_info(path, std::cout);
}
