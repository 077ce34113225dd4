#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/config.hpp"

namespace mfg {

/// I/O failures, including checksum mismatches on read.
class SnapshotError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A stack of N_h x N_h planes, k-major then row-major.
struct FieldSnapshot {
    std::uint64_t slices = 0;
    std::uint64_t n = 0;
    std::vector<double> values;
    /// Original time index of every stored slice.
    std::vector<int> time_indices;
};

struct SnapshotRecord {
    std::string path;
    SnapshotFormat format = SnapshotFormat::csv;
    std::uint64_t slices = 0;
    std::uint64_t n = 0;
    std::string checksum;
};

inline constexpr char raw_magic[8] = {'M', 'F', 'G', 'F', '0', '0', '0', '1'};

/// FNV-1a 64 over the little-endian bytes of the values, as 16 hex digits.
std::string field_checksum(std::span<const double> values);

/// Writes `path` and the sidecar `path + ".json"` (format, shape, time
/// indices, checksum).  csv: header `k,i,j,value`, 17 significant digits.
/// raw: "MFGF0001", slices, n, n as little-endian uint64, then little-endian
/// float64 values.  Throws SnapshotError when the file cannot be written.
SnapshotRecord write_field_snapshot(const FieldSnapshot& field, const std::string& path,
                                    SnapshotFormat format);

/// Reads either format (detected from the leading bytes).  When a sidecar
/// exists its shape and checksum must match the data.
FieldSnapshot read_field_snapshot(const std::string& path);

/// Copies the selected slices of a k-major field.
FieldSnapshot select_slices(std::span<const double> values, int slices, int n,
                            const std::vector<int>& time_indices);

/// 0, stride, 2 stride, ... below n_time, then n_time.
std::vector<int> snapshot_indices(int n_time, int stride);

} // namespace mfg
