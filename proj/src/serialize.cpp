#include "lada/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace lada {

namespace {

// Explicit little-endian byte I/O keeps files portable regardless of host
// endianness.
void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b, 8);
}

void read_bytes(std::istream& is, char* dst, std::size_t n, const char* what) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw ConfigError(std::string("weight file truncated while reading ") + what);
}

std::uint16_t get_u16(std::istream& is, const char* what) {
    unsigned char b[2];
    read_bytes(is, reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    read_bytes(is, reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const char* what) {
    unsigned char b[8];
    read_bytes(is, reinterpret_cast<char*>(b), 8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void expect_magic(std::istream& is, const char* magic, const char* what) {
    char buf[4];
    read_bytes(is, buf, 4, what);
    if (std::memcmp(buf, magic, 4) != 0)
        throw ConfigError(std::string("bad magic, not a ") + what + " section");
}

}  // namespace

void write_weight_records(std::ostream& os, const std::vector<TensorRecord>& records) {
    os.write("LADA", 4);
    put_u16(os, kWeightFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        require(rec.role.size() <= std::numeric_limits<std::uint16_t>::max(),
                "record role too long");
        put_u16(os, static_cast<std::uint16_t>(rec.role.size()));
        os.write(rec.role.data(), static_cast<std::streamsize>(rec.role.size()));
        put_u32(os, static_cast<std::uint32_t>(rec.tensor.rank()));
        for (std::size_t d : rec.tensor.shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : rec.tensor.data) put_f64(os, v);
    }
}

std::vector<TensorRecord> read_weight_records(std::istream& is) {
    expect_magic(is, "LADA", "weight container");
    std::uint16_t version = get_u16(is, "version");
    if (version != kWeightFormatVersion)
        throw ConfigError("unsupported weight format version " + std::to_string(version));
    std::uint32_t count = get_u32(is, "record count");
    std::vector<TensorRecord> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        TensorRecord rec;
        std::uint16_t name_len = get_u16(is, "record name length");
        rec.role.resize(name_len);
        if (name_len) read_bytes(is, rec.role.data(), name_len, "record name");
        std::uint32_t ndim = get_u32(is, "record rank");
        std::vector<std::size_t> shape(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = get_u32(is, "record dim");
        rec.tensor = Tensor(std::move(shape));
        for (double& v : rec.tensor.data) v = get_f64(is, "record data");
        records.push_back(std::move(rec));
    }
    return records;
}

void write_weight_file(const std::string& path, const std::vector<TensorRecord>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    write_weight_records(os, records);
    if (!os) throw ConfigError("write failed for '" + path + "'");
}

std::vector<TensorRecord> read_weight_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open weight file '" + path + "'");
    return read_weight_records(is);
}

void write_arch_records(std::ostream& os, const std::vector<ArchRecord>& records) {
    os.write("LAAH", 4);
    put_u16(os, kWeightFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        put_u16(os, static_cast<std::uint16_t>(rec.name.size()));
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        put_u32(os, static_cast<std::uint32_t>(rec.values.size()));
        for (std::uint32_t v : rec.values) put_u32(os, v);
    }
}

std::vector<ArchRecord> read_arch_records(std::istream& is) {
    expect_magic(is, "LAAH", "architecture header");
    std::uint16_t version = get_u16(is, "arch version");
    if (version != kWeightFormatVersion)
        throw ConfigError("unsupported arch header version " + std::to_string(version));
    std::uint32_t count = get_u32(is, "arch record count");
    std::vector<ArchRecord> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        ArchRecord rec;
        std::uint16_t name_len = get_u16(is, "arch name length");
        rec.name.resize(name_len);
        if (name_len) read_bytes(is, rec.name.data(), name_len, "arch name");
        std::uint32_t n = get_u32(is, "arch value count");
        rec.values.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) rec.values[i] = get_u32(is, "arch value");
        records.push_back(std::move(rec));
    }
    return records;
}

void write_model_file(const std::string& path, const std::vector<ArchRecord>& arch,
                      const std::vector<TensorRecord>& weights) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    write_arch_records(os, arch);
    write_weight_records(os, weights);
    if (!os) throw ConfigError("write failed for '" + path + "'");
}

void read_model_file(const std::string& path, std::vector<ArchRecord>& arch,
                     std::vector<TensorRecord>& weights) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open model file '" + path + "'");
    arch = read_arch_records(is);
    weights = read_weight_records(is);
}

const TensorRecord& find_record(const std::vector<TensorRecord>& records,
                                const std::string& role) {
    for (const auto& r : records)
        if (r.role == role) return r;
    throw ConfigError("weight container is missing record '" + role + "'");
}

const ArchRecord& find_arch(const std::vector<ArchRecord>& records,
                            const std::string& name) {
    for (const auto& r : records)
        if (r.name == name) return r;
    throw ConfigError("architecture header is missing '" + name + "'");
}

std::uint32_t arch_scalar(const std::vector<ArchRecord>& records, const std::string& name) {
    const ArchRecord& r = find_arch(records, name);
    require(r.values.size() == 1, "architecture record '" + name + "' is not scalar");
    return r.values[0];
}

}  // namespace lada
