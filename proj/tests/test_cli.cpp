#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <map>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfg/config.hpp"
#include "mfg/experiments.hpp"
#include "mfg/snapshot.hpp"
#include "support.hpp"

using namespace mfg;
namespace fs = std::filesystem;
using testing::uniform;
using testing::uniform_int;

namespace {

/// Fresh scratch directory per test case, removed on destruction.
struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& name)
        : path(fs::temp_directory_path() / ("mfg_test_" + name + "_" + std::to_string(::getpid())))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

std::string tiny_config(const std::string& dir, const std::string& extra_solver = "",
                        const std::string& extra_output = "")
{
    return "[grid]\nn_space = 8\nn_time = 4\nviscosity = 0.5\n"
           "[solver]\nlinear_solver = bicgstab\npreconditioner = multigrid\n" +
           extra_solver + "[output]\ndirectory = " + dir + "\nformats = csv, raw\n" + extra_output;
}

RunConfig random_config()
{
    RunConfig c;
    const int levels = uniform_int(1, 4);
    c.solver.multigrid.coarse_points = uniform_int(2, 3);
    c.n_space = c.solver.multigrid.coarse_points << levels;
    c.n_time = uniform_int(1, 40);
    c.horizon = uniform(0.1, 3.0);
    c.viscosity = uniform(1e-4, 1.0);
    c.exponent = uniform(1.2, 3.0);
    c.coupling = uniform_int(0, 1) == 0 ? CouplingKind::sincos : CouplingKind::free;
    c.solver.gamma = uniform(0.1, 3.0);
    c.solver.tau = uniform(0.01, 0.9) / c.solver.gamma;
    c.solver.theta = uniform(0.0, 1.0);
    c.solver.tolerance = uniform(1e-9, 1e-4);
    c.solver.max_iterations = uniform_int(1, 5000);
    c.solver.linear_solver = static_cast<LinearSolverKind>(uniform_int(1, 2));
    c.solver.preconditioner = static_cast<PreconditionerKind>(uniform_int(0, 2));
    c.solver.linear_tolerance = uniform(1e-12, 1e-2);
    c.solver.linear_reduction = uniform_int(0, 1) ? 0.0 : uniform(1e-10, 0.5);
    c.solver.multigrid.pre_sweeps = uniform_int(0, 4);
    c.solver.multigrid.post_sweeps = uniform_int(0, 4);
    c.solver.multigrid.cycle = static_cast<CycleType>(uniform_int(0, 2));
    c.output.directory = "dir_" + std::to_string(uniform_int(0, 999));
    c.output.formats = uniform_int(0, 1) ? std::vector<SnapshotFormat>{SnapshotFormat::raw}
                                         : std::vector<SnapshotFormat>{SnapshotFormat::csv,
                                                                       SnapshotFormat::raw};
    c.output.snapshot_stride = uniform_int(1, 10);
    c.output.write_values = uniform_int(0, 1) == 1;
    c.sweep.viscosities = {uniform(1e-3, 1.0), uniform(1e-3, 1.0)};
    c.sweep.sizes = {16, 32};
    c.sweep.reductions = {1e-3, uniform(1e-10, 1e-4)};
    c.sweep.lanczos_iterations = uniform_int(10, 400);
    c.sweep.lanczos_tolerance = uniform_int(0, 1) == 1 ? uniform(1e-6, 0.1) : 0.0;
    c.sweep.preconditioned = uniform_int(0, 1) == 1;
    return c;
}

std::string expect_config_error(const std::string& text)
{
    try {
        parse_run_config(text).validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    FAIL("no ConfigError for:\n" << text);
    return {};
}

} // namespace

TEST_CASE("ini grammar")
{
    const auto doc = IniDocument::parse("# comment\n[a]\nx = 1 ; trailing\n  y=two words  \n\n"
                                        "[b]\nflag = true\nlist = 1, 2,3\n");
    CHECK(doc.sections() == std::vector<std::string>{"a", "b"});
    CHECK(doc.get_int("a", "x") == 1);
    CHECK(doc.get_string("a", "y") == "two words");
    CHECK(doc.get_bool("b", "flag") == true);
    CHECK(doc.get_int_list("b", "list") == std::vector<int>{1, 2, 3});
    CHECK(!doc.get_double("a", "missing").has_value());
    CHECK(doc.unused_keys().empty());

    CHECK_THROWS_AS(IniDocument::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
    CHECK_THROWS_AS(IniDocument::parse("x = 1\n"), ConfigError);
    CHECK_THROWS_AS(IniDocument::parse("[a]\njust text\n"), ConfigError);
    CHECK_THROWS_AS(IniDocument::parse("[a\nx = 1\n"), ConfigError);
    try {
        IniDocument::parse("[a]\nx = 1\n\nbroken line\n");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("4") != std::string::npos);
    }
    const auto bad = IniDocument::parse("[a]\nn = 3.5\nb = maybe\n");
    CHECK_THROWS_AS(bad.get_int("a", "n"), ConfigError);
    CHECK_THROWS_AS(bad.get_bool("a", "b"), ConfigError);
}

TEST_CASE("run configuration parsing and validation")
{
    const RunConfig d = parse_run_config("");
    CHECK(d.n_space == 32);
    CHECK(d.solver.gamma * d.solver.tau < 1.0);
    CHECK(d.solver.multigrid.cycle == CycleType::F);
    CHECK_NOTHROW(d.validate());

    CHECK(std::string(expect_config_error("[grid]\nn_spcae = 8\n")).find("grid.n_spcae") !=
          std::string::npos);
    CHECK(expect_config_error("[gird]\nn_space = 8\n").find("gird") != std::string::npos);

    const std::string gt = expect_config_error("[solver]\ngamma = 2\ntau = 0.6\n");
    CHECK(gt.find("solver.gamma") != std::string::npos);
    CHECK(gt.find("solver.tau") != std::string::npos);

    const std::string mg = expect_config_error("[grid]\nn_space = 24\n");
    CHECK(mg.find("grid.n_space") != std::string::npos);
    // the same size is fine once multigrid is off or H = 3
    CHECK_NOTHROW(parse_run_config("[grid]\nn_space = 24\n[solver]\npreconditioner = jacobi\n")
                      .validate());
    CHECK_NOTHROW(
        parse_run_config("[grid]\nn_space = 24\n[multigrid]\ncoarse_points = 3\n").validate());

    // every problem is reported at once
    const std::string many = expect_config_error("[grid]\nn_time = 0\nviscosity = -1\n");
    CHECK(many.find("grid.n_time") != std::string::npos);
    CHECK(many.find("grid.viscosity") != std::string::npos);

    CHECK_THROWS_AS(parse_run_config("[coupling]\nkind = table\n").validate(), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[output]\nformats = csv, xml\n"), ConfigError);
}

TEST_CASE("configuration text round trip")
{
    for (int trial = 0; trial < 50; ++trial) {
        const RunConfig c = random_config();
        const std::string text = c.to_text();
        CAPTURE(text);
        const RunConfig back = parse_run_config(text);
        CHECK(back.to_text() == text);
        CHECK(back.viscosity == c.viscosity);
        CHECK(back.solver.tau == c.solver.tau);
        CHECK(back.sweep.reductions == c.sweep.reductions);
        CHECK(back.output.formats == c.output.formats);
    }
}

TEST_CASE("environment override of the output directory")
{
    const std::string old = std::getenv(output_dir_env) ? std::getenv(output_dir_env) : "";
    RunConfig c = parse_run_config("[output]\ndirectory = from_file\n");
    ::unsetenv(output_dir_env);
    apply_environment_overrides(c);
    CHECK(c.output.directory == "from_file");
    ::setenv(output_dir_env, "from_env", 1);
    apply_environment_overrides(c);
    CHECK(c.output.directory == "from_env");
    if (old.empty())
        ::unsetenv(output_dir_env);
    else
        ::setenv(output_dir_env, old.c_str(), 1);
}

TEST_CASE("potential tables")
{
    ScratchDir dir("table");
    write_text(dir.file("ok.txt"), "# H bar\n1, 2\n3 4\n");
    const Plane p = load_potential_table(dir.file("ok.txt"), 2);
    CHECK(p(0, 1) == 2.0);
    CHECK(p(1, 0) == 3.0);
    write_text(dir.file("short.txt"), "1 2\n3\n");
    CHECK_THROWS(load_potential_table(dir.file("short.txt"), 2));
    CHECK_THROWS(load_potential_table(dir.file("absent.txt"), 2));
}

TEST_CASE("checksums and snapshot index policy")
{
    CHECK(field_checksum({}) == "cbf29ce484222325");
    const std::vector<double> one{1.0};
    const std::vector<double> two{2.0};
    CHECK(field_checksum(one) != field_checksum(two));
    CHECK(field_checksum(one).size() == 16);

    CHECK(snapshot_indices(8, 3) == std::vector<int>{0, 3, 6, 8});
    CHECK(snapshot_indices(8, 4) == std::vector<int>{0, 4, 8});
    CHECK(snapshot_indices(8, 1).size() == 9);
    CHECK(snapshot_indices(8, 20) == std::vector<int>{0, 8});
    CHECK_THROWS(snapshot_indices(8, 0));

    std::vector<double> field(3 * 4);
    for (std::size_t i = 0; i < field.size(); ++i)
        field[i] = static_cast<double>(i);
    const FieldSnapshot s = select_slices(field, 3, 2, {0, 2});
    CHECK(s.slices == 2);
    CHECK(s.values == std::vector<double>{0, 1, 2, 3, 8, 9, 10, 11});
    CHECK(s.time_indices == std::vector<int>{0, 2});
}

TEST_CASE("snapshot round trips and tamper detection")
{
    ScratchDir dir("snap");
    FieldSnapshot f{2, 2, {}, {0, 5}};
    for (int i = 0; i < 8; ++i)
        f.values.push_back(uniform(-1e3, 1e3) * std::pow(10.0, uniform_int(-20, 20)));
    f.values[3] = -0.0;

    const SnapshotRecord raw = write_field_snapshot(f, dir.file("f.raw"), SnapshotFormat::raw);
    CHECK(raw.checksum == field_checksum(f.values));
    CHECK(fs::file_size(dir.file("f.raw")) == 32 + 8 * 8);
    CHECK(read_text(dir.file("f.raw")).substr(0, 8) == "MFGF0001");
    const FieldSnapshot back = read_field_snapshot(dir.file("f.raw"));
    CHECK(back.slices == 2);
    CHECK(back.n == 2);
    CHECK(back.time_indices == f.time_indices);
    CHECK(std::memcmp(back.values.data(), f.values.data(), 8 * sizeof(double)) == 0);

    const auto sidecar = nlohmann::json::parse(read_text(dir.file("f.raw.json")));
    CHECK(sidecar["format"] == "raw");
    CHECK(sidecar["checksum"]["value"] == raw.checksum);

    write_field_snapshot(f, dir.file("f.csv"), SnapshotFormat::csv);
    CHECK(read_text(dir.file("f.csv")).rfind("k,i,j,value\n", 0) == 0);
    const FieldSnapshot csv = read_field_snapshot(dir.file("f.csv"));
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(csv.values[i] == f.values[i]);

    const FieldSnapshot zero{2, 2, std::vector<double>(8, 0.0), {0, 1}};
    write_field_snapshot(zero, dir.file("z.csv"), SnapshotFormat::csv);
    CHECK(read_field_snapshot(dir.file("z.csv")).values == zero.values);

    // flip one payload byte of the raw file
    std::string bytes = read_text(dir.file("f.raw"));
    bytes[40] = static_cast<char>(bytes[40] ^ 0x10);
    write_text(dir.file("f.raw"), bytes);
    CHECK_THROWS_AS(read_field_snapshot(dir.file("f.raw")), SnapshotError);

    // change one csv value
    std::string text = read_text(dir.file("z.csv"));
    const auto pos = text.rfind(",0");
    text.replace(pos, 2, ",1");
    write_text(dir.file("z.csv"), text);
    CHECK_THROWS_AS(read_field_snapshot(dir.file("z.csv")), SnapshotError);

    CHECK_THROWS_AS(write_field_snapshot(f, dir.file("missing/sub/f.raw"), SnapshotFormat::raw),
                    SnapshotError);
    CHECK_THROWS_AS(read_field_snapshot(dir.file("nothing.raw")), SnapshotError);
    FieldSnapshot wrong = f;
    wrong.values.pop_back();
    CHECK_THROWS(write_field_snapshot(wrong, dir.file("w.raw"), SnapshotFormat::raw));
}

TEST_CASE("solve command outputs, exit codes and manifest replay")
{
    ScratchDir dir("solve");
    const std::string out = dir.file("run");
    write_text(dir.file("run.ini"), tiny_config(out, "", "snapshot_stride = 3\n"));
    std::ostringstream log;
    REQUIRE(cmd_solve(dir.file("run.ini"), log) == exit_ok);
    for (const char* name : {"density.csv", "density.raw", "value.csv", "value.raw",
                             "multiplier.csv", "multiplier.raw", "turnpike.csv", "history.csv",
                             "manifest.json", "density.raw.json"})
        CHECK(fs::exists(fs::path(out) / name));

    const auto manifest = nlohmann::json::parse(read_text(out + "/manifest.json"));
    CHECK(manifest["converged"] == true);
    CHECK(manifest["diagnostics"]["mass_deviation"].get<double>() <= 1e-6);
    for (const char* phase : {"linear_solves", "prox", "other", "total"})
        CHECK(manifest["timings"].contains(phase));
    CHECK(manifest.contains("version"));
    CHECK(read_field_snapshot(out + "/density.raw").time_indices == std::vector<int>{0, 3, 4});
    CHECK(read_text(out + "/turnpike.csv").rfind("# ", 0) == 0);

    std::ostringstream info;
    CHECK(cmd_info(out + "/density.raw", info) == exit_ok);
    CHECK(info.str().find("checksum") != std::string::npos);

    // replay through the manifest into a second directory
    const std::string old = std::getenv(output_dir_env) ? std::getenv(output_dir_env) : "";
    ::setenv(output_dir_env, dir.file("replay").c_str(), 1);
    CHECK(cmd_solve(out + "/manifest.json", log) == exit_ok);
    if (old.empty())
        ::unsetenv(output_dir_env);
    else
        ::setenv(output_dir_env, old.c_str(), 1);
    const auto replay = nlohmann::json::parse(read_text(dir.file("replay") + "/manifest.json"));
    for (const char* key : {"hjb_sup", "hjb_rms", "fp_sup", "fp_rms", "constraint_rms",
                            "mass_deviation"}) {
        const double a = manifest["diagnostics"][key].get<double>();
        const double b = replay["diagnostics"][key].get<double>();
        CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
    }
    // the echoed config differs only in the overridden directory
    auto without_directory = [](std::string text) {
        const auto at = text.find("directory = ");
        return text.erase(at, text.find('\n', at) - at);
    };
    CHECK(without_directory(replay["config_text"].get<std::string>()) ==
          without_directory(manifest["config_text"].get<std::string>()));

    // stride past the horizon keeps the end points only
    write_text(dir.file("stride.ini"), tiny_config(dir.file("stride"), "", "snapshot_stride = 9\n"));
    REQUIRE(cmd_solve(dir.file("stride.ini"), log) == exit_ok);
    CHECK(read_field_snapshot(dir.file("stride") + "/density.csv").time_indices ==
          std::vector<int>{0, 4});

    write_text(dir.file("bad.ini"), tiny_config(out, "gamma = 3\ntau = 0.5\n"));
    std::ostringstream bad;
    CHECK(cmd_solve(dir.file("bad.ini"), bad) == exit_validation);
    CHECK(bad.str().find("solver.gamma") != std::string::npos);
    CHECK(bad.str().find("solver.tau") != std::string::npos);

    write_text(dir.file("short.ini"), tiny_config(dir.file("short"), "max_iterations = 2\n"));
    CHECK(cmd_solve(dir.file("short.ini"), log) == exit_unconverged);
    CHECK(fs::exists(dir.file("short") + "/manifest.json"));

    write_text(dir.file("blocker"), "x");
    write_text(dir.file("io.ini"), tiny_config(dir.file("blocker") + "/sub"));
    CHECK(cmd_solve(dir.file("io.ini"), log) == exit_io);
    CHECK(cmd_solve(dir.file("absent.ini"), log) == exit_io);
    CHECK(cmd_info(dir.file("absent.raw"), log) == exit_io);
}

TEST_CASE("benchmark commands")
{
    ScratchDir dir("bench");
    std::ostringstream log;
    write_text(dir.file("empty.ini"), tiny_config(dir.file("empty")));
    CHECK(cmd_bench_linsolve(dir.file("empty.ini"), log) == exit_validation);
    CHECK(cmd_cond_estimate(dir.file("empty.ini"), log) == exit_validation);

    const std::string sweep = "[sweep]\nviscosities = 0.1, 0.5\nsizes = 8\ntime_steps = 4\n"
                              "preconditioners = identity, multigrid\nreductions = 1e-3\n"
                              "lanczos_iterations = 40\nlanczos_tolerance = 1e-2\npreconditioned = true\n";
    write_text(dir.file("bench.ini"), tiny_config(dir.file("out")) + sweep);
    REQUIRE(cmd_bench_linsolve(dir.file("bench.ini"), log) == exit_ok);
    const std::string table = read_text(dir.file("out") + "/bench_linsolve.csv");
    CHECK(table.find("# sweep.viscosities") != std::string::npos);
    CHECK(table.find("# command = bench-linsolve") != std::string::npos);

    std::istringstream rows(table);
    std::string line;
    std::map<std::string, std::map<std::string, double>> avg; // preconditioner -> nu -> avg
    while (std::getline(rows, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("solver,", 0) == 0)
            continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');)
            cells.push_back(c);
        REQUIRE(cells.size() == 12);
        avg[cells[1]][cells[3]] = std::stod(cells[8]);
    }
    REQUIRE(avg["identity"].size() == 2);
    for (const auto& [nu, value] : avg["multigrid"])
        CHECK(avg["identity"][nu] > value);
    const std::string pivot = read_text(dir.file("out") + "/bench_linsolve_table.csv");
    CHECK(pivot.find("solver,preconditioner,metric,nu,8x8x4") != std::string::npos);

    REQUIRE(cmd_cond_estimate(dir.file("bench.ini"), log) == exit_ok);
    const std::string cond = read_text(dir.file("out") + "/cond_estimate.csv");
    CHECK(cond.find("mg_kappa") != std::string::npos);
    CHECK(cond.find("# command = cond-estimate") != std::string::npos);
}

TEST_CASE("shipped presets parse and validate")
{
    int count = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(MFG_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".ini")
            continue;
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(load_run_config(entry.path().string()).validate());
        ++count;
    }
    CHECK(count >= 5);
}
