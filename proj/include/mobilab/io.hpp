#pragma once

// CSV interchange: lineage and panel files in, analysis tables out. Missing
// values are empty fields. Numbers are written in shortest round-trip form,
// so reading a written file reproduces the records exactly.

#include "mobilab/common.hpp"
#include "mobilab/synthkit.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mobilab {

std::string format_double(double v);  // shortest round trip; empty when missing
std::string format_fixed(double v, int significant = 10);

// Minimal CSV line splitting: commas, optional double quotes.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

// Column writer that joins fields with commas.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    CsvWriter& field(std::string_view s);
    CsvWriter& field(const char* s) { return field(std::string_view(s)); }
    CsvWriter& field(double v);
    CsvWriter& field(std::size_t v);
    CsvWriter& field(int v);
    CsvWriter& field(bool v);
    void end_row();
    void row(std::initializer_list<std::string_view> fields);

private:
    std::ostream& out_;
    bool first_ = true;
};

std::vector<std::string> lineage_header();
void write_lineage_csv(std::ostream& out, std::span<const LineageRecord> records);
void write_lineage_csv(const std::filesystem::path& path, std::span<const LineageRecord> records);

struct IngestOptions {
    // Stop at the first bad row (throwing a validation error) or skip and log.
    bool fail_fast = true;
    // Schooling must be one of the seven attainment codes.
    bool categorical_education = false;
};

struct RowError {
    std::size_t line = 0;
    std::string column;
    std::string message;
};

struct ColumnReport {
    std::string name;
    std::size_t present = 0;
    std::size_t missing = 0;
    std::size_t invalid = 0;
};

struct IngestReport {
    std::vector<LineageRecord> records;
    std::vector<RowError> errors;
    std::vector<ColumnReport> columns;
    std::size_t rows_read = 0;
};

IngestReport ingest_lineage_csv(std::istream& in, const IngestOptions& options = {});
IngestReport ingest_lineage_csv(const std::filesystem::path& path, const IngestOptions& options = {});
void write_ingest_report(std::ostream& out, const IngestReport& report);

void write_panel_csv(const std::filesystem::path& path, std::span<const EarningsPanelRow> rows);
std::vector<EarningsPanelRow> read_panel_csv(const std::filesystem::path& path);

// Plain table files used by the report presets.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;  // throws a validation error
    double number(std::size_t row, std::string_view name) const;
    const std::string& text(std::size_t row, std::string_view name) const;
};
Table read_table(const std::filesystem::path& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace mobilab
