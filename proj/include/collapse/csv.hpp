#pragma once
// CSV emission helpers. Reals print with 17 significant digits ('.'
// decimal, no separators) so every double round-trips exactly.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace collapse {

inline std::string fmt_real(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

// Convenience builder for one row of mixed fields.
class CsvRow {
public:
    CsvRow& text(std::string value) {
        fields_.push_back(std::move(value));
        return *this;
    }
    CsvRow& real(double value) { return text(fmt_real(value)); }
    CsvRow& integer(long long value) { return text(std::to_string(value)); }
    CsvRow& integer(unsigned long long value) { return text(std::to_string(value)); }
    CsvRow& boolean(bool value) { return text(value ? "1" : "0"); }

    const std::vector<std::string>& fields() const { return fields_; }

private:
    std::vector<std::string> fields_;
};

}  // namespace collapse
