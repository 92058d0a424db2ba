#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lada/tensor.hpp"

namespace lada {

// Named tensor inside a weight container. `role` identifies the parameter
// ("enc_conv0.weights", "projection.biases", ...).
struct TensorRecord {
    std::string role;
    Tensor tensor;
};

// Container layout, all little-endian:
//   magic "LADA" | u16 version (=1) | u32 record_count
//   per record: u16 name_len | name bytes | u32 ndim | u32 dims[ndim]
//               | f64 data (row-major, raw IEEE-754 bits)
// Round-trips are bit-exact: doubles are copied through their bit patterns,
// never formatted.
inline constexpr std::uint16_t kWeightFormatVersion = 1;

void write_weight_records(std::ostream& os, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_weight_records(std::istream& is);

void write_weight_file(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_weight_file(const std::string& path);

// Small integer-valued header records describing a model's architecture,
// stored in front of the weight container in model files:
//   magic "LAAH" | u16 version (=1) | u32 record_count
//   per record: u16 name_len | name bytes | u32 value_count | u32 values[]
struct ArchRecord {
    std::string name;
    std::vector<std::uint32_t> values;
};

void write_arch_records(std::ostream& os, const std::vector<ArchRecord>& records);
std::vector<ArchRecord> read_arch_records(std::istream& is);

// Model file = arch section + weight container in one file.
void write_model_file(const std::string& path, const std::vector<ArchRecord>& arch,
                      const std::vector<TensorRecord>& weights);
void read_model_file(const std::string& path, std::vector<ArchRecord>& arch,
                     std::vector<TensorRecord>& weights);

// Lookup helpers; missing names raise ConfigError naming the role.
const TensorRecord& find_record(const std::vector<TensorRecord>& records,
                                const std::string& role);
const ArchRecord& find_arch(const std::vector<ArchRecord>& records, const std::string& name);
std::uint32_t arch_scalar(const std::vector<ArchRecord>& records, const std::string& name);

}  // namespace lada
