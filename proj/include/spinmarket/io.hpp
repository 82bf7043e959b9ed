// CSV and manifest plumbing. Reals are serialized with 17 significant digits
// so that identical doubles always produce identical bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace spinmarket {

std::string format_real(double x);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& header);

    void raw_row(const std::string& line);

    template <typename... Fields>
    void row(const Fields&... fields) {
        std::string line;
        append_fields(line, fields...);
        raw_row(line);
    }

private:
    static void append_one(std::string& line, double v) { line += format_real(v); }
    static void append_one(std::string& line, std::int64_t v) { line += std::to_string(v); }
    static void append_one(std::string& line, int v) { line += std::to_string(v); }
    static void append_one(std::string& line, const std::string& v) { line += v; }
    static void append_one(std::string& line, const char* v) { line += v; }

    template <typename Head, typename... Tail>
    static void append_fields(std::string& line, const Head& head, const Tail&... tail) {
        append_one(line, head);
        if constexpr (sizeof...(tail) > 0) {
            line += ',';
            append_fields(line, tail...);
        }
    }

    std::ofstream out_;
};

struct DailyRow {
    std::int64_t day = 0;
    double ln_price = 0.0;
    bool has_return = false;
    double ret = 0.0;
};

// Reads a daily.csv written by the simulator (day, ln_price, return; the
// day-0 row has an empty return field).
std::vector<DailyRow> read_daily_csv(const std::filesystem::path& path);

// Generic numeric CSV reader: returns the header fields and one row per line.
// Empty cells parse as NaN.
struct NumericCsv {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
NumericCsv read_numeric_csv(const std::filesystem::path& path);

} // namespace spinmarket
