#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lada/scene.hpp"

namespace lada::io {

// %.17g: round-trip exact for f64, locale-independent, so identical runs
// produce byte-identical files.
std::string fmt(double v);
std::string fmt(std::size_t v);

// Minimal CSV writer; commas and newlines are forbidden inside cells (values
// here are numbers and fixed labels).
class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& cells);
    void close();

  private:
    void* os_;  // std::ofstream, kept out of the header
    std::string path_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

// 8-bit binary PGM (P5). Field values are clamped to [0,1] and scaled to 255.
// Multi-channel fields are rejected; render through colormap+PPM instead.
void write_pgm(const std::string& path, const scene::Field& field);

// 24-bit binary PPM (P6) for RGB fields (channels == 3).
void write_ppm(const std::string& path, const scene::Field& rgb);

// Three fields side by side with a 2-pixel white separator, as one PGM.
void write_triptych_pgm(const std::string& path, const scene::Field& left,
                        const scene::Field& middle, const scene::Field& right);

// key=value lines in the given order.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);

// Field stack container: one "meta" record [rows, cols, channels, count,
// min_ppm, max_ppm] plus one record per field named field_%05zu.
struct FieldStackMeta {
    std::size_t rows = 0, cols = 0, channels = 1, count = 0;
    double min_ppm = 0.0, max_ppm = 1.0;
};

void save_field_stack(const std::string& path, const std::vector<scene::Field>& fields,
                      const FieldStackMeta& meta);
std::vector<scene::Field> load_field_stack(const std::string& path, FieldStackMeta& meta);

void ensure_dir(const std::string& path);

}  // namespace lada::io
