#include "mfg/snapshot.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace mfg {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& out, T value)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const unsigned char* bytes)
{
    unsigned char tmp[sizeof(T)];
    std::memcpy(tmp, bytes, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(tmp, tmp + sizeof(T));
    T value;
    std::memcpy(&value, tmp, sizeof(T));
    return value;
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

} // namespace

std::string field_checksum(std::span<const double> values)
{
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            hash ^= (bits >> (8 * b)) & 0xffU;
            hash *= 0x100000001b3ULL;
        }
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << hash;
    return s.str();
}

std::vector<int> snapshot_indices(int n_time, int stride)
{
    if (stride < 1)
        throw std::invalid_argument("snapshot stride must be at least 1");
    std::vector<int> out;
    for (int k = 0; k < n_time; k += stride)
        out.push_back(k);
    out.push_back(n_time);
    return out;
}

FieldSnapshot select_slices(std::span<const double> values, int slices, int n,
                            const std::vector<int>& time_indices)
{
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    if (values.size() != plane * static_cast<std::size_t>(slices))
        throw std::invalid_argument("select_slices: value count does not match shape");
    FieldSnapshot out;
    out.slices = time_indices.size();
    out.n = static_cast<std::uint64_t>(n);
    out.time_indices = time_indices;
    out.values.reserve(plane * time_indices.size());
    for (int k : time_indices) {
        if (k < 0 || k >= slices)
            throw std::out_of_range("select_slices: time index " + std::to_string(k) +
                                    " outside [0, " + std::to_string(slices) + ")");
        const auto first = values.begin() + static_cast<std::ptrdiff_t>(plane * k);
        out.values.insert(out.values.end(), first, first + static_cast<std::ptrdiff_t>(plane));
    }
    return out;
}

SnapshotRecord write_field_snapshot(const FieldSnapshot& field, const std::string& path,
                                    SnapshotFormat format)
{
    if (field.values.size() != field.slices * field.n * field.n)
        throw std::invalid_argument("write_field_snapshot: value count does not match shape");
    std::vector<int> ks = field.time_indices;
    if (ks.empty())
        for (std::uint64_t k = 0; k < field.slices; ++k)
            ks.push_back(static_cast<int>(k));
    if (ks.size() != field.slices)
        throw std::invalid_argument("write_field_snapshot: time_indices does not match slices");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw SnapshotError("cannot open '" + path + "' for writing");
    if (format == SnapshotFormat::raw) {
        out.write(raw_magic, sizeof raw_magic);
        put_le<std::uint64_t>(out, field.slices);
        put_le<std::uint64_t>(out, field.n);
        put_le<std::uint64_t>(out, field.n);
        for (double v : field.values)
            put_le<double>(out, v);
    } else {
        out << "k,i,j,value\n" << std::setprecision(17);
        std::size_t p = 0;
        for (std::uint64_t s = 0; s < field.slices; ++s)
            for (std::uint64_t i = 0; i < field.n; ++i)
                for (std::uint64_t j = 0; j < field.n; ++j)
                    out << ks[s] << ',' << i << ',' << j << ',' << field.values[p++] << '\n';
    }
    out.close();
    if (!out)
        throw SnapshotError("failed writing '" + path + "'");

    SnapshotRecord rec{path, format, field.slices, field.n, field_checksum(field.values)};
    nlohmann::json side{{"format", to_string(format)},
                        {"shape", {field.slices, field.n, field.n}},
                        {"layout", "k-major, then i, then j"},
                        {"time_indices", ks},
                        {"checksum", {{"algorithm", "fnv1a64-le-float64"}, {"value", rec.checksum}}}};
    std::ofstream sc(sidecar_path(path), std::ios::trunc);
    if (!sc)
        throw SnapshotError("cannot open '" + sidecar_path(path) + "' for writing");
    sc << side.dump(2) << '\n';
    if (!sc)
        throw SnapshotError("failed writing '" + sidecar_path(path) + "'");
    return rec;
}

namespace {

FieldSnapshot read_raw(const std::vector<unsigned char>& bytes, const std::string& path)
{
    if (bytes.size() < 32)
        throw SnapshotError(path + ": truncated header");
    FieldSnapshot f;
    f.slices = get_le<std::uint64_t>(bytes.data() + 8);
    f.n = get_le<std::uint64_t>(bytes.data() + 16);
    const auto n2 = get_le<std::uint64_t>(bytes.data() + 24);
    if (n2 != f.n)
        throw SnapshotError(path + ": non-square planes (" + std::to_string(f.n) + " x " +
                            std::to_string(n2) + ")");
    const std::uint64_t count = f.slices * f.n * f.n;
    if (f.n != 0 && count / f.n / f.n != f.slices)
        throw SnapshotError(path + ": header shape overflows");
    if (bytes.size() != 32 + 8 * count)
        throw SnapshotError(path + ": expected " + std::to_string(32 + 8 * count) +
                            " bytes, found " + std::to_string(bytes.size()));
    f.values.resize(count);
    for (std::uint64_t p = 0; p < count; ++p)
        f.values[p] = get_le<double>(bytes.data() + 32 + 8 * p);
    return f;
}

FieldSnapshot read_csv(const std::string& text, const std::string& path)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "k,i,j,value")
        throw SnapshotError(path + ": missing 'k,i,j,value' header");
    FieldSnapshot f;
    long max_i = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        long k = 0, i = 0, j = 0;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream row(line);
        std::string value;
        if (!(row >> k >> c1 >> i >> c2 >> j >> c3) || c1 != ',' || c2 != ',' || c3 != ',' ||
            !(row >> value))
            throw SnapshotError(path + ":" + std::to_string(line_no) + ": malformed row");
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0')
            throw SnapshotError(path + ":" + std::to_string(line_no) + ": malformed value");
        if (f.time_indices.empty() || f.time_indices.back() != k)
            f.time_indices.push_back(static_cast<int>(k));
        max_i = std::max(max_i, i);
        f.values.push_back(v);
    }
    f.slices = f.time_indices.size();
    f.n = static_cast<std::uint64_t>(max_i + 1);
    if (f.values.size() != f.slices * f.n * f.n)
        throw SnapshotError(path + ": row count does not form square planes");
    return f;
}

} // namespace

FieldSnapshot read_field_snapshot(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw SnapshotError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const bool raw = bytes.size() >= 8 && std::memcmp(bytes.data(), raw_magic, 8) == 0;
    FieldSnapshot f = raw ? read_raw(bytes, path)
                          : read_csv(std::string(bytes.begin(), bytes.end()), path);

    const std::string side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        std::ifstream sc(side);
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(sc);
        } catch (const nlohmann::json::exception& e) {
            throw SnapshotError(side + ": " + e.what());
        }
        const auto shape = meta.value("shape", std::vector<std::uint64_t>{});
        if (shape != std::vector<std::uint64_t>{f.slices, f.n, f.n})
            throw SnapshotError(path + ": shape does not match sidecar");
        const std::string expected = meta["checksum"].value("value", "");
        const std::string actual = field_checksum(f.values);
        if (expected != actual)
            throw SnapshotError(path + ": checksum mismatch (sidecar " + expected + ", data " +
                                actual + ")");
        if (raw)
            f.time_indices = meta.value("time_indices", std::vector<int>{});
    }
    if (f.time_indices.empty())
        for (std::uint64_t k = 0; k < f.slices; ++k)
            f.time_indices.push_back(static_cast<int>(k));
    return f;
}

} // namespace mfg
