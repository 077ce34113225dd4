#include "mfg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mfg/multigrid.hpp"

namespace mfg {

namespace {

std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string where(const std::string& section, const std::string& key, int line)
{
    return section + "." + key + " (line " + std::to_string(line) + ")";
}

double to_double(const std::string& text, const std::string& field)
{
    const char* begin = text.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || trim(end).size() != 0 || text.empty())
        throw ConfigError(field + ": expected a number, got '" + text + "'");
    return v;
}

int to_int(const std::string& text, const std::string& field)
{
    int v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError(field + ": expected an integer, got '" + text + "'");
    return v;
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

// Shortest text that reads back to the same double.
std::string fmt(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& f)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += ", ";
        out += f(items[i]);
    }
    return out;
}

} // namespace

IniDocument IniDocument::parse(const std::string& text)
{
    IniDocument doc;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find_first_of("#;"); hash != std::string::npos)
            raw.erase(hash);
        const std::string s = trim(raw);
        if (s.empty())
            continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError("line " + std::to_string(line) + ": unterminated section header");
            section = lower(trim(std::string_view(s).substr(1, s.size() - 2)));
            if (section.empty())
                throw ConfigError("line " + std::to_string(line) + ": empty section name");
            doc.data_[section];
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value', got '" +
                              s + "'");
        if (section.empty())
            throw ConfigError("line " + std::to_string(line) + ": key outside of any [section]");
        const std::string key = lower(trim(std::string_view(s).substr(0, eq)));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line) + ": missing key before '='");
        auto& entries = doc.data_[section];
        if (auto it = entries.find(key); it != entries.end())
            throw ConfigError(where(section, key, line) + ": duplicate key, first set on line " +
                              std::to_string(it->second.line));
        entries[key] = Entry{trim(std::string_view(s).substr(eq + 1)), line, false};
    }
    return doc;
}

bool IniDocument::has(const std::string& section, const std::string& key) const
{
    return find(section, key) != nullptr;
}

const IniDocument::Entry* IniDocument::find(const std::string& section,
                                            const std::string& key) const
{
    auto s = data_.find(section);
    if (s == data_.end())
        return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

std::vector<std::string> IniDocument::sections() const
{
    std::vector<std::string> out;
    for (const auto& [name, entries] : data_)
        out.push_back(name);
    return out;
}

std::vector<std::string> IniDocument::unused_keys() const
{
    std::vector<std::pair<int, std::string>> found;
    for (const auto& [section, entries] : data_)
        for (const auto& [key, entry] : entries)
            if (!entry.used)
                found.emplace_back(entry.line, section + "." + key);
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& f : found)
        out.push_back(std::move(f.second));
    return out;
}

std::optional<std::string> IniDocument::get_string(const std::string& section,
                                                   const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    return e->value;
}

std::optional<double> IniDocument::get_double(const std::string& section,
                                              const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    return to_double(e->value, where(section, key, e->line));
}

std::optional<int> IniDocument::get_int(const std::string& section, const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    return to_int(e->value, where(section, key, e->line));
}

std::optional<bool> IniDocument::get_bool(const std::string& section, const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    const std::string v = lower(e->value);
    if (v == "true" || v == "yes" || v == "on" || v == "1")
        return true;
    if (v == "false" || v == "no" || v == "off" || v == "0")
        return false;
    throw ConfigError(where(section, key, e->line) + ": expected true or false, got '" +
                      e->value + "'");
}

std::optional<std::vector<std::string>> IniDocument::get_list(const std::string& section,
                                                              const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    return split_list(e->value);
}

std::optional<std::vector<double>> IniDocument::get_double_list(const std::string& section,
                                                                const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    std::vector<double> out;
    for (const auto& item : split_list(e->value))
        out.push_back(to_double(item, where(section, key, e->line)));
    return out;
}

std::optional<std::vector<int>> IniDocument::get_int_list(const std::string& section,
                                                          const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    e->used = true;
    std::vector<int> out;
    for (const auto& item : split_list(e->value))
        out.push_back(to_int(item, where(section, key, e->line)));
    return out;
}

const char* to_string(CouplingKind kind)
{
    switch (kind) {
    case CouplingKind::sincos: return "sincos";
    case CouplingKind::table: return "table";
    case CouplingKind::free: return "free";
    }
    return "?";
}

const char* to_string(SnapshotFormat format)
{
    return format == SnapshotFormat::csv ? "csv" : "raw";
}

SnapshotFormat parse_snapshot_format(const std::string& text)
{
    const std::string t = lower(text);
    if (t == "csv")
        return SnapshotFormat::csv;
    if (t == "raw")
        return SnapshotFormat::raw;
    throw std::invalid_argument("unknown snapshot format '" + text + "' (expected csv or raw)");
}

GridSpec RunConfig::grid() const { return grid(n_space, n_time, viscosity); }

GridSpec RunConfig::grid(int n_space_, int n_time_, double viscosity_) const
{
    return GridSpec(n_space_, n_time_, horizon, viscosity_, exponent);
}

void RunConfig::validate() const
{
    std::vector<std::string> problems;
    auto check = [&](bool ok, std::string message) {
        if (!ok)
            problems.push_back(std::move(message));
    };
    check(n_space >= 2, "grid.n_space must be at least 2");
    check(n_time >= 1, "grid.n_time must be at least 1");
    check(horizon > 0.0, "grid.horizon must be positive");
    check(viscosity >= 0.0, "grid.viscosity must be non-negative");
    check(exponent > 1.0, "grid.exponent must be greater than 1");
    check(coupling != CouplingKind::table || !potential_file.empty(),
          "coupling.potential_file is required when coupling.kind = table");
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        problems.emplace_back(e.what());
    }
    const MultigridOptions& mg = solver.multigrid;
    check(mg.coarse_points >= 2, "multigrid.coarse_points must be at least 2");
    check(mg.levels >= 0, "multigrid.levels must be non-negative");
    check(mg.pre_sweeps >= 0 && mg.post_sweeps >= 0, "multigrid.pre_sweeps and "
                                                     "multigrid.post_sweeps must be non-negative");

    const bool multigrid = solver.preconditioner == PreconditionerKind::multigrid ||
                           std::count(sweep.preconditioners.begin(), sweep.preconditioners.end(),
                                      PreconditionerKind::multigrid) > 0 ||
                           sweep.preconditioned;
    auto check_size = [&](int n, const std::string& field) {
        if (!multigrid || mg.coarse_points < 2)
            return;
        try {
            const int l = coarsening_levels(n, mg.coarse_points);
            check(mg.levels == 0 || mg.levels == l,
                  field + " = " + std::to_string(n) + " needs " + std::to_string(l) +
                      " coarsenings with multigrid.coarse_points = " +
                      std::to_string(mg.coarse_points) + " but multigrid.levels = " +
                      std::to_string(mg.levels));
        } catch (const std::invalid_argument&) {
            problems.push_back(field + " = " + std::to_string(n) +
                               " is not multigrid.coarse_points * 2^l (coarse_points = " +
                               std::to_string(mg.coarse_points) + ", l >= 1)");
        }
    };
    check_size(n_space, "grid.n_space");
    for (int n : sweep.sizes) {
        check(n >= 2, "sweep.sizes entries must be at least 2");
        check_size(n, "sweep.sizes entry");
    }
    check(sweep.time_steps.empty() || sweep.time_steps.size() == sweep.sizes.size(),
          "sweep.time_steps must be empty or have as many entries as sweep.sizes");
    for (int nt : sweep.time_steps)
        check(nt >= 1, "sweep.time_steps entries must be positive");
    for (double nu : sweep.viscosities)
        check(nu >= 0.0, "sweep.viscosities entries must be non-negative");
    for (double r : sweep.reductions)
        check(r > 0.0 && r < 1.0, "sweep.reductions entries must lie in (0, 1)");
    check(sweep.lanczos_iterations >= 2, "sweep.lanczos_iterations must be at least 2");
    check(sweep.lanczos_tolerance >= 0.0 && sweep.lanczos_tolerance < 1.0,
          "sweep.lanczos_tolerance must lie in [0, 1)");
    check(output.snapshot_stride >= 1, "output.snapshot_stride must be at least 1");
    check(!output.directory.empty(), "output.directory must not be empty");

    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems)
            msg += "\n  " + p;
        throw ConfigError(msg);
    }
}

std::string RunConfig::to_text() const
{
    std::ostringstream s;
    s << "[grid]\n"
      << "n_space = " << n_space << "\n"
      << "n_time = " << n_time << "\n"
      << "horizon = " << fmt(horizon) << "\n"
      << "viscosity = " << fmt(viscosity) << "\n"
      << "exponent = " << fmt(exponent) << "\n\n";
    s << "[coupling]\n"
      << "kind = " << to_string(coupling) << "\n";
    if (!potential_file.empty())
        s << "potential_file = " << potential_file << "\n";
    s << "\n[solver]\n"
      << "gamma = " << fmt(solver.gamma) << "\n"
      << "tau = " << fmt(solver.tau) << "\n"
      << "theta = " << fmt(solver.theta) << "\n"
      << "tolerance = " << fmt(solver.tolerance) << "\n"
      << "max_iterations = " << solver.max_iterations << "\n"
      << "linear_solver = " << to_string(solver.linear_solver) << "\n"
      << "preconditioner = " << to_string(solver.preconditioner) << "\n"
      << "linear_tolerance = " << fmt(solver.linear_tolerance) << "\n"
      << "linear_reduction = " << fmt(solver.linear_reduction) << "\n"
      << "linear_max_iterations = " << solver.linear_max_iterations << "\n\n";
    const MultigridOptions& mg = solver.multigrid;
    s << "[multigrid]\n"
      << "coarse_points = " << mg.coarse_points << "\n"
      << "levels = " << mg.levels << "\n"
      << "pre_sweeps = " << mg.pre_sweeps << "\n"
      << "post_sweeps = " << mg.post_sweeps << "\n"
      << "cycle = " << to_string(mg.cycle) << "\n"
      << "symmetric = " << (mg.symmetric ? "true" : "false") << "\n\n";
    s << "[output]\n"
      << "directory = " << output.directory << "\n"
      << "formats = " << join(output.formats, [](SnapshotFormat f) { return std::string(to_string(f)); })
      << "\n"
      << "snapshot_stride = " << output.snapshot_stride << "\n"
      << "write_values = " << (output.write_values ? "true" : "false") << "\n\n";
    s << "[sweep]\n";
    if (!sweep.viscosities.empty())
        s << "viscosities = " << join(sweep.viscosities, fmt) << "\n";
    if (!sweep.sizes.empty())
        s << "sizes = " << join(sweep.sizes, [](int v) { return std::to_string(v); }) << "\n";
    if (!sweep.time_steps.empty())
        s << "time_steps = " << join(sweep.time_steps, [](int v) { return std::to_string(v); })
          << "\n";
    if (!sweep.solvers.empty())
        s << "solvers = "
          << join(sweep.solvers, [](LinearSolverKind k) { return std::string(to_string(k)); })
          << "\n";
    if (!sweep.preconditioners.empty())
        s << "preconditioners = "
          << join(sweep.preconditioners,
                  [](PreconditionerKind k) { return std::string(to_string(k)); })
          << "\n";
    s << "reductions = " << join(sweep.reductions, fmt) << "\n"
      << "lanczos_iterations = " << sweep.lanczos_iterations << "\n"
      << "lanczos_tolerance = " << fmt(sweep.lanczos_tolerance) << "\n"
      << "preconditioned = " << (sweep.preconditioned ? "true" : "false") << "\n"
      << "parallel = " << (sweep.parallel ? "true" : "false") << "\n";
    return s.str();
}

namespace {

template <typename T, typename Parse>
std::vector<T> parse_names(const IniDocument& doc, const std::string& section,
                           const std::string& key, Parse&& parse)
{
    std::vector<T> out;
    const auto* entry = doc.find(section, key);
    if (auto items = doc.get_list(section, key)) {
        for (const auto& item : *items) {
            try {
                out.push_back(parse(item));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(where(section, key, entry->line) + ": " + e.what());
            }
        }
    }
    return out;
}

} // namespace

RunConfig parse_run_config(const std::string& text)
{
    const IniDocument doc = IniDocument::parse(text);
    static const std::vector<std::string> known{"grid",   "coupling", "solver",
                                                "multigrid", "output", "sweep"};
    for (const auto& s : doc.sections())
        if (std::find(known.begin(), known.end(), s) == known.end())
            throw ConfigError("unknown section [" + s +
                              "] (expected grid, coupling, solver, multigrid, output, sweep)");

    RunConfig c;
    auto set = [](auto& target, auto&& value) {
        if (value)
            target = *value;
    };
    auto named = [&doc](const std::string& section, const std::string& key, auto parse,
                        auto& target) {
        const auto* entry = doc.find(section, key);
        if (auto v = doc.get_string(section, key)) {
            try {
                target = parse(*v);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(where(section, key, entry->line) + ": " + e.what());
            }
        }
    };

    set(c.n_space, doc.get_int("grid", "n_space"));
    set(c.n_time, doc.get_int("grid", "n_time"));
    set(c.horizon, doc.get_double("grid", "horizon"));
    set(c.viscosity, doc.get_double("grid", "viscosity"));
    set(c.exponent, doc.get_double("grid", "exponent"));

    named("coupling", "kind",
          [](const std::string& v) {
              const std::string t = lower(v);
              if (t == "sincos")
                  return CouplingKind::sincos;
              if (t == "table")
                  return CouplingKind::table;
              if (t == "free")
                  return CouplingKind::free;
              throw std::invalid_argument("unknown coupling '" + v +
                                          "' (expected sincos, table or free)");
          },
          c.coupling);
    set(c.potential_file, doc.get_string("coupling", "potential_file"));

    CPConfig& s = c.solver;
    set(s.gamma, doc.get_double("solver", "gamma"));
    set(s.tau, doc.get_double("solver", "tau"));
    set(s.theta, doc.get_double("solver", "theta"));
    set(s.tolerance, doc.get_double("solver", "tolerance"));
    set(s.max_iterations, doc.get_int("solver", "max_iterations"));
    named("solver", "linear_solver", parse_linear_solver, s.linear_solver);
    named("solver", "preconditioner", parse_preconditioner, s.preconditioner);
    set(s.linear_tolerance, doc.get_double("solver", "linear_tolerance"));
    set(s.linear_reduction, doc.get_double("solver", "linear_reduction"));
    set(s.linear_max_iterations, doc.get_int("solver", "linear_max_iterations"));

    MultigridOptions& mg = s.multigrid;
    set(mg.coarse_points, doc.get_int("multigrid", "coarse_points"));
    set(mg.levels, doc.get_int("multigrid", "levels"));
    set(mg.pre_sweeps, doc.get_int("multigrid", "pre_sweeps"));
    set(mg.post_sweeps, doc.get_int("multigrid", "post_sweeps"));
    named("multigrid", "cycle", parse_cycle_type, mg.cycle);
    set(mg.symmetric, doc.get_bool("multigrid", "symmetric"));

    set(c.output.directory, doc.get_string("output", "directory"));
    if (doc.has("output", "formats")) {
        c.output.formats = parse_names<SnapshotFormat>(doc, "output", "formats",
                                                       parse_snapshot_format);
        if (c.output.formats.empty())
            throw ConfigError("output.formats must list at least one of csv, raw");
    }
    set(c.output.snapshot_stride, doc.get_int("output", "snapshot_stride"));
    set(c.output.write_values, doc.get_bool("output", "write_values"));

    SweepConfig& w = c.sweep;
    set(w.viscosities, doc.get_double_list("sweep", "viscosities"));
    set(w.sizes, doc.get_int_list("sweep", "sizes"));
    set(w.time_steps, doc.get_int_list("sweep", "time_steps"));
    w.solvers = parse_names<LinearSolverKind>(doc, "sweep", "solvers", parse_linear_solver);
    w.preconditioners =
        parse_names<PreconditionerKind>(doc, "sweep", "preconditioners", parse_preconditioner);
    set(w.reductions, doc.get_double_list("sweep", "reductions"));
    set(w.lanczos_iterations, doc.get_int("sweep", "lanczos_iterations"));
    set(w.lanczos_tolerance, doc.get_double("sweep", "lanczos_tolerance"));
    set(w.preconditioned, doc.get_bool("sweep", "preconditioned"));
    set(w.parallel, doc.get_bool("sweep", "parallel"));

    if (const auto unused = doc.unused_keys(); !unused.empty()) {
        std::string msg = "unknown configuration key";
        msg += unused.size() > 1 ? "s: " : ": ";
        for (std::size_t i = 0; i < unused.size(); ++i)
            msg += (i ? ", " : "") + unused[i];
        throw ConfigError(msg);
    }
    return c;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::ios_base::failure("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

void apply_environment_overrides(RunConfig& config)
{
    if (const char* dir = std::getenv(output_dir_env); dir && *dir)
        config.output.directory = dir;
}

Plane load_potential_table(const std::string& path, int n_space)
{
    std::ifstream in(path);
    if (!in)
        throw std::ios_base::failure("cannot open potential table '" + path + "'");
    Plane plane(n_space);
    std::string line;
    int row = 0;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream cells(line);
        std::vector<double> values;
        std::string cell;
        while (cells >> cell)
            values.push_back(to_double(cell, path + ":" + std::to_string(line_no)));
        if (values.empty())
            continue;
        if (row >= n_space)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": more than " +
                              std::to_string(n_space) + " rows");
        if (static_cast<int>(values.size()) != n_space)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(n_space) + " values, found " +
                              std::to_string(values.size()));
        for (int j = 0; j < n_space; ++j)
            plane(row, j) = values[static_cast<std::size_t>(j)];
        ++row;
    }
    if (row != n_space)
        throw ConfigError(path + ": expected " + std::to_string(n_space) + " rows, found " +
                          std::to_string(row));
    return plane;
}

} // namespace mfg
