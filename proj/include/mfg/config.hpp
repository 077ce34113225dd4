#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/grid.hpp"
#include "mfg/primal_dual.hpp"

namespace mfg {

/// Raised for malformed or inconsistent run configurations.  The message
/// names the offending `section.key` fields.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed `[section]` / `key = value` text.  Keys keep their source line for
/// error messages.
class IniDocument {
public:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };

    static IniDocument parse(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    const Entry* find(const std::string& section, const std::string& key) const;
    std::vector<std::string> sections() const;
    /// Every `section.key` that no getter has read, in source order.
    std::vector<std::string> unused_keys() const;

    std::optional<std::string> get_string(const std::string& section, const std::string& key) const;
    std::optional<double> get_double(const std::string& section, const std::string& key) const;
    std::optional<int> get_int(const std::string& section, const std::string& key) const;
    std::optional<bool> get_bool(const std::string& section, const std::string& key) const;
    std::optional<std::vector<std::string>> get_list(const std::string& section,
                                                     const std::string& key) const;
    std::optional<std::vector<double>> get_double_list(const std::string& section,
                                                       const std::string& key) const;
    std::optional<std::vector<int>> get_int_list(const std::string& section,
                                                 const std::string& key) const;

private:
    std::map<std::string, std::map<std::string, Entry>> data_;
};

enum class CouplingKind { sincos, table, free };
enum class SnapshotFormat { csv, raw };

const char* to_string(CouplingKind kind);
const char* to_string(SnapshotFormat format);
SnapshotFormat parse_snapshot_format(const std::string& text);

struct OutputConfig {
    std::string directory = "mfg_output";
    std::vector<SnapshotFormat> formats{SnapshotFormat::csv};
    /// Density/value snapshots at k = 0, stride, 2 stride, ... and always k = N_T.
    int snapshot_stride = 1;
    bool write_values = true;
};

struct SweepConfig {
    std::vector<double> viscosities;
    /// Points per axis; each entry runs on an n x n x N_T grid with N_T taken
    /// from `time_steps` (same position) or equal to n when absent.
    std::vector<int> sizes;
    std::vector<int> time_steps;
    std::vector<LinearSolverKind> solvers;
    std::vector<PreconditionerKind> preconditioners;
    std::vector<double> reductions{1e-3, 1e-8};
    /// Lanczos step cap; with a positive tolerance the run stops earlier once
    /// the extreme Ritz pairs have relative residual bound below it.
    int lanczos_iterations = 300;
    double lanczos_tolerance = 0.0;
    bool preconditioned = false;
    bool parallel = false;
};

struct RunConfig {
    int n_space = 32;
    int n_time = 32;
    double horizon = 1.0;
    double viscosity = 0.5;
    double exponent = 2.0;
    CouplingKind coupling = CouplingKind::sincos;
    std::string potential_file;
    CPConfig solver;
    OutputConfig output;
    SweepConfig sweep;

    GridSpec grid() const;
    GridSpec grid(int n_space, int n_time, double viscosity) const;
    /// Checks every field and cross-field constraint without allocating grid
    /// data; collects all problems into one ConfigError.
    void validate() const;
    /// Canonical config text; parse_run_config(to_text()) yields the same config.
    std::string to_text() const;
};

/// Reads a config from text; unknown sections or keys are errors.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Name of the environment variable that overrides output.directory.
inline constexpr const char* output_dir_env = "MFG_OUTPUT_DIR";
void apply_environment_overrides(RunConfig& config);

/// Reads an N_h x N_h table (one row of the first index per line, values
/// separated by commas or whitespace, '#' comments allowed).
Plane load_potential_table(const std::string& path, int n_space);

} // namespace mfg
