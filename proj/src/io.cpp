#include "spinmarket/io.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spinmarket {

std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& header) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
    out_ << header << '\n';
}

void CsvWriter::raw_row(const std::string& line) { out_ << line << '\n'; }

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

} // namespace

std::vector<DailyRow> read_daily_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path.string());
    if (line != "day,ln_price,return") {
        throw std::runtime_error(path.string() + ": expected header 'day,ln_price,return', got '" + line +
                                 "'");
    }
    std::vector<DailyRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        DailyRow row;
        row.day = std::stoll(fields[0]);
        row.ln_price = std::stod(fields[1]);
        if (!fields[2].empty()) {
            row.has_return = true;
            row.ret = std::stod(fields[2]);
        }
        rows.push_back(row);
    }
    return rows;
}

NumericCsv read_numeric_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    NumericCsv csv;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path.string());
    csv.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            row.push_back(f.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f));
        }
        csv.rows.push_back(std::move(row));
    }
    return csv;
}

} // namespace spinmarket
