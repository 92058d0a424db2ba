#include <doctest.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lada/rng.hpp"
#include "lada/serialize.hpp"
#include "lada/tensor.hpp"

using namespace lada;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * 3.0;
    return t;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/lada_serialize_") + name;
}

}  // namespace

TEST_CASE("weight records round-trip bit-exactly through a stream") {
    Rng rng(42);
    std::vector<TensorRecord> recs;
    recs.push_back({"enc_conv0.weights", random_tensor({4, 1, 3, 3}, rng)});
    recs.push_back({"enc_conv0.biases", random_tensor({4}, rng)});
    recs.push_back({"projection.weights", random_tensor({7, 48}, rng)});
    // Values with tricky bit patterns: signed zero, denormal, huge, tiny.
    recs.push_back({"edge", Tensor({6})});
    recs.back().tensor.data = {0.0, -0.0, 5e-324, 1.7976931348623157e308,
                               -2.2250738585072014e-308, 1.0 / 3.0};

    std::stringstream ss;
    write_weight_records(ss, recs);
    std::vector<TensorRecord> back = read_weight_records(ss);

    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].role == recs[i].role);
        CHECK(back[i].tensor.shape == recs[i].tensor.shape);
        REQUIRE(back[i].tensor.data.size() == recs[i].tensor.data.size());
        for (std::size_t j = 0; j < recs[i].tensor.data.size(); ++j) {
            // Bit comparison: NaN-safe and distinguishes -0.0 from 0.0.
            CHECK(std::bit_cast<std::uint64_t>(back[i].tensor.data[j]) ==
                  std::bit_cast<std::uint64_t>(recs[i].tensor.data[j]));
        }
    }
}

TEST_CASE("weight file round-trip matches the stream path") {
    Rng rng(7);
    std::vector<TensorRecord> recs;
    recs.push_back({"w", random_tensor({3, 5}, rng)});
    const std::string path = temp_path("roundtrip.lada");
    write_weight_file(path, recs);
    std::vector<TensorRecord> back = read_weight_file(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].role == "w");
    CHECK(back[0].tensor.data == recs[0].tensor.data);
    std::remove(path.c_str());
}

TEST_CASE("truncated and corrupted containers are rejected") {
    Rng rng(3);
    std::vector<TensorRecord> recs;
    recs.push_back({"w", random_tensor({4, 4}, rng)});
    std::stringstream ss;
    write_weight_records(ss, recs);
    const std::string full = ss.str();

    SUBCASE("bad magic") {
        std::string bad = full;
        bad[0] = 'X';
        std::stringstream in(bad);
        CHECK_THROWS_AS(read_weight_records(in), ConfigError);
    }
    SUBCASE("truncated mid-data") {
        std::stringstream in(full.substr(0, full.size() - 9));
        CHECK_THROWS_AS(read_weight_records(in), ConfigError);
    }
    SUBCASE("truncated mid-header") {
        std::stringstream in(full.substr(0, 5));
        CHECK_THROWS_AS(read_weight_records(in), ConfigError);
    }
    SUBCASE("empty stream") {
        std::stringstream in("");
        CHECK_THROWS_AS(read_weight_records(in), ConfigError);
    }
}

TEST_CASE("unsupported version is rejected") {
    std::vector<TensorRecord> recs;
    recs.push_back({"w", Tensor({1})});
    std::stringstream ss;
    write_weight_records(ss, recs);
    std::string bytes = ss.str();
    bytes[4] = 9;  // version u16 little-endian low byte follows the magic
    std::stringstream in(bytes);
    CHECK_THROWS_AS(read_weight_records(in), ConfigError);
}

TEST_CASE("empty record list round-trips") {
    std::stringstream ss;
    write_weight_records(ss, {});
    CHECK(read_weight_records(ss).empty());
}

TEST_CASE("arch records round-trip") {
    std::vector<ArchRecord> arch = {
        {"kind", {1}},
        {"input_shape", {45, 62}},
        {"conv_filters", {16, 16, 16, 16}},
        {"latent_dim", {7}},
        {"empty_values", {}},
    };
    std::stringstream ss;
    write_arch_records(ss, arch);
    std::vector<ArchRecord> back = read_arch_records(ss);
    REQUIRE(back.size() == arch.size());
    for (std::size_t i = 0; i < arch.size(); ++i) {
        CHECK(back[i].name == arch[i].name);
        CHECK(back[i].values == arch[i].values);
    }
}

TEST_CASE("arch section rejects weight-container magic") {
    std::vector<TensorRecord> recs;
    recs.push_back({"w", Tensor({1})});
    std::stringstream ss;
    write_weight_records(ss, recs);
    CHECK_THROWS_AS(read_arch_records(ss), ConfigError);
}

TEST_CASE("model file carries arch header and weights together") {
    Rng rng(11);
    std::vector<ArchRecord> arch = {{"kind", {2}}, {"hidden", {30}}, {"lookback", {3}}};
    std::vector<TensorRecord> weights;
    weights.push_back({"cell.w", random_tensor({12, 40}, rng)});
    weights.push_back({"cell.b", random_tensor({12}, rng)});

    const std::string path = temp_path("model.lada");
    write_model_file(path, arch, weights);

    std::vector<ArchRecord> arch_back;
    std::vector<TensorRecord> weights_back;
    read_model_file(path, arch_back, weights_back);

    REQUIRE(arch_back.size() == 3);
    CHECK(arch_back[0].name == "kind");
    CHECK(arch_back[0].values == std::vector<std::uint32_t>{2});
    REQUIRE(weights_back.size() == 2);
    CHECK(weights_back[0].tensor.data == weights[0].tensor.data);
    CHECK(weights_back[1].tensor.shape == weights[1].tensor.shape);
    std::remove(path.c_str());
}

TEST_CASE("missing files and missing records raise ConfigError") {
    CHECK_THROWS_AS(read_weight_file("/tmp/lada_serialize_does_not_exist.lada"),
                    ConfigError);

    std::vector<TensorRecord> recs;
    recs.push_back({"present", Tensor({1})});
    CHECK(find_record(recs, "present").role == "present");
    CHECK_THROWS_AS(find_record(recs, "absent"), ConfigError);

    std::vector<ArchRecord> arch = {{"kind", {1}}, {"pair", {2, 3}}};
    CHECK(find_arch(arch, "kind").values.size() == 1);
    CHECK_THROWS_AS(find_arch(arch, "nope"), ConfigError);
    CHECK(arch_scalar(arch, "kind") == 1);
    // arch_scalar demands exactly one value.
    CHECK_THROWS_AS(arch_scalar(arch, "pair"), ConfigError);
}

TEST_CASE("container layout matches the documented byte format") {
    // One record: name "ab", shape [2], values {1.0, -2.0}.
    std::vector<TensorRecord> recs;
    recs.push_back({"ab", Tensor({2})});
    recs[0].tensor.data = {1.0, -2.0};
    std::stringstream ss;
    write_weight_records(ss, recs);
    const std::string bytes = ss.str();

    // magic(4) + version(2) + count(4) + name_len(2) + name(2) + ndim(4)
    // + dims(4) + data(16)
    REQUIRE(bytes.size() == 4 + 2 + 4 + 2 + 2 + 4 + 4 + 16);
    CHECK(bytes.substr(0, 4) == "LADA");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version lo
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);  // version hi
    CHECK(static_cast<unsigned char>(bytes[6]) == 1);  // record count lo
    CHECK(static_cast<unsigned char>(bytes[10]) == 2);  // name length lo
    CHECK(bytes.substr(12, 2) == "ab");
    // f64 1.0 little-endian: 00 00 00 00 00 00 f0 3f
    const std::size_t data_off = bytes.size() - 16;
    CHECK(static_cast<unsigned char>(bytes[data_off + 6]) == 0xf0);
    CHECK(static_cast<unsigned char>(bytes[data_off + 7]) == 0x3f);
}
