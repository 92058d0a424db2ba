#include "lada/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lada/serialize.hpp"

namespace lada::io {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(std::size_t v) { return std::to_string(v); }

CsvWriter::CsvWriter(const std::string& path) : path_(path) {
    auto* os = new std::ofstream(path);
    if (!*os) {
        delete os;
        throw ConfigError("cannot open '" + path + "' for writing");
    }
    os_ = os;
}

CsvWriter::~CsvWriter() {
    close();
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    auto* os = static_cast<std::ofstream*>(os_);
    require(os != nullptr, "write on a closed CSV writer");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        require(cells[i].find_first_of(",\n\"") == std::string::npos,
                "CSV cell contains a separator: " + cells[i]);
        if (i) *os << ',';
        *os << cells[i];
    }
    *os << '\n';
}

void CsvWriter::close() {
    auto* os = static_cast<std::ofstream*>(os_);
    if (!os) return;
    os->flush();
    bool ok = static_cast<bool>(*os);
    delete os;
    os_ = nullptr;
    if (!ok) throw ConfigError("write failed for '" + path_ + "'");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open CSV file '" + path + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

namespace {

unsigned char to_byte(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

void write_pgm(const std::string& path, const scene::Field& field) {
    require(field.channels == 1, "PGM output needs a single-channel field");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    os << "P5\n" << field.cols << ' ' << field.rows << "\n255\n";
    std::vector<unsigned char> bytes(field.rows * field.cols);
    for (std::size_t r = 0; r < field.rows; ++r)
        for (std::size_t c = 0; c < field.cols; ++c)
            bytes[r * field.cols + c] = to_byte(field.at(r, c));
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ConfigError("write failed for '" + path + "'");
}

void write_ppm(const std::string& path, const scene::Field& rgb) {
    require(rgb.channels == 3, "PPM output needs a 3-channel field");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    os << "P6\n" << rgb.cols << ' ' << rgb.rows << "\n255\n";
    std::vector<unsigned char> bytes(rgb.rows * rgb.cols * 3);
    std::size_t k = 0;
    for (std::size_t r = 0; r < rgb.rows; ++r)
        for (std::size_t c = 0; c < rgb.cols; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch) bytes[k++] = to_byte(rgb.at(r, c, ch));
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ConfigError("write failed for '" + path + "'");
}

void write_triptych_pgm(const std::string& path, const scene::Field& left,
                        const scene::Field& middle, const scene::Field& right) {
    require(left.channels == 1 && middle.channels == 1 && right.channels == 1,
            "triptych panels must be single-channel");
    require(left.rows == middle.rows && middle.rows == right.rows &&
                left.cols == middle.cols && middle.cols == right.cols,
            "triptych panels must share a shape");
    const std::size_t sep = 2;
    scene::Field canvas(left.rows, left.cols * 3 + sep * 2);
    for (double& v : canvas.values) v = 1.0;
    const scene::Field* panels[3] = {&left, &middle, &right};
    for (std::size_t p = 0; p < 3; ++p) {
        std::size_t off = p * (left.cols + sep);
        for (std::size_t r = 0; r < left.rows; ++r)
            for (std::size_t c = 0; c < left.cols; ++c)
                canvas.at(r, off + c) = panels[p]->at(r, c);
    }
    write_pgm(path, canvas);
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    for (const auto& [k, v] : entries) os << k << '=' << v << '\n';
    if (!os) throw ConfigError("write failed for '" + path + "'");
}

void save_field_stack(const std::string& path, const std::vector<scene::Field>& fields,
                      const FieldStackMeta& meta_in) {
    FieldStackMeta meta = meta_in;
    meta.count = fields.size();
    if (!fields.empty()) {
        meta.rows = fields.front().rows;
        meta.cols = fields.front().cols;
        meta.channels = fields.front().channels;
    }
    std::vector<TensorRecord> records;
    records.reserve(fields.size() + 1);
    Tensor mt({6});
    mt.data = {static_cast<double>(meta.rows),     static_cast<double>(meta.cols),
               static_cast<double>(meta.channels), static_cast<double>(meta.count),
               meta.min_ppm,                       meta.max_ppm};
    records.push_back({"meta", std::move(mt)});
    char name[32];
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto& f = fields[i];
        require(f.rows == meta.rows && f.cols == meta.cols && f.channels == meta.channels,
                "field stack entries differ in shape");
        Tensor t({f.channels, f.rows, f.cols});
        t.data = f.values;
        std::snprintf(name, sizeof name, "field_%05zu", i);
        records.push_back({name, std::move(t)});
    }
    write_weight_file(path, records);
}

std::vector<scene::Field> load_field_stack(const std::string& path, FieldStackMeta& meta) {
    std::vector<TensorRecord> records = read_weight_file(path);
    const Tensor& mt = find_record(records, "meta").tensor;
    require(mt.numel() == 6, "malformed field stack meta record");
    meta.rows = static_cast<std::size_t>(mt[0]);
    meta.cols = static_cast<std::size_t>(mt[1]);
    meta.channels = static_cast<std::size_t>(mt[2]);
    meta.count = static_cast<std::size_t>(mt[3]);
    meta.min_ppm = mt[4];
    meta.max_ppm = mt[5];

    std::vector<scene::Field> fields;
    fields.reserve(meta.count);
    char name[32];
    for (std::size_t i = 0; i < meta.count; ++i) {
        std::snprintf(name, sizeof name, "field_%05zu", i);
        const Tensor& t = find_record(records, name).tensor;
        require(t.rank() == 3 && t.dim(0) == meta.channels && t.dim(1) == meta.rows &&
                    t.dim(2) == meta.cols,
                "field stack record shape mismatch");
        scene::Field f(meta.rows, meta.cols, meta.channels);
        f.values = t.data;
        fields.push_back(std::move(f));
    }
    return fields;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw ConfigError("cannot create directory '" + path + "': " + ec.message());
}

}  // namespace lada::io
