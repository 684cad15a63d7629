#include "mobilab/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mobilab {

namespace {

constexpr std::array<const char*, 3> kOutcomeColumns{"schooling", "log_earnings", "earnings_rank"};
constexpr std::size_t kFixedColumns = 4;

template <class T>
bool parse_integer(std::string_view s, T& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path.string());
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read " + path.string());
    return in;
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

}  // namespace

std::string format_double(double v) {
    if (!present(v)) return {};
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

std::string format_fixed(double v, int significant) {
    if (!present(v)) return {};
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), "%.*g", significant, v);
    return buf.data();
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

CsvWriter& CsvWriter::field(std::string_view s) {
    if (!first_) out_ << ',';
    out_ << csv_escape(s);
    first_ = false;
    return *this;
}
CsvWriter& CsvWriter::field(double v) { return field(std::string_view(format_fixed(v))); }
CsvWriter& CsvWriter::field(std::size_t v) { return field(std::string_view(std::to_string(v))); }
CsvWriter& CsvWriter::field(int v) { return field(std::string_view(std::to_string(v))); }
CsvWriter& CsvWriter::field(bool v) { return field(std::string_view(v ? "1" : "0")); }
void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}
void CsvWriter::row(std::initializer_list<std::string_view> fields) {
    for (auto f : fields) field(f);
    end_row();
}

std::vector<std::string> lineage_header() {
    std::vector<std::string> h{"child_id", "region_id", "child_birth_year", "child_gender"};
    for (Relative r : kAllRelatives)
        for (const char* c : kOutcomeColumns) h.push_back(std::string(to_string(r)) + "_" + c);
    return h;
}

void write_lineage_csv(std::ostream& out, std::span<const LineageRecord> records) {
    CsvWriter w(out);
    for (const auto& h : lineage_header()) w.field(std::string_view(h));
    w.end_row();
    for (const auto& rec : records) {
        w.field(std::string_view(std::to_string(rec.child_id)))
            .field(std::string_view(std::to_string(rec.region_id)))
            .field(rec.child_birth_year)
            .field(to_string(rec.child_gender));
        for (Relative r : kAllRelatives) {
            const auto& o = rec.at(r);
            w.field(std::string_view(format_double(o.schooling)))
                .field(std::string_view(format_double(o.log_earnings)))
                .field(std::string_view(format_double(o.earnings_rank)));
        }
        w.end_row();
    }
}

void write_lineage_csv(const std::filesystem::path& path, std::span<const LineageRecord> records) {
    auto out = open_output(path);
    write_lineage_csv(out, records);
}

IngestReport ingest_lineage_csv(std::istream& in, const IngestOptions& options) {
    IngestReport report;
    const auto header = lineage_header();
    for (const auto& h : header) report.columns.push_back({h, 0, 0, 0});

    std::string line;
    if (!next_line(in, line)) throw validation_error("line 1: missing header");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto got = split_csv_line(line);
    if (got != header) {
        std::string msg = "line 1: header does not match the lineage schema";
        for (std::size_t i = 0; i < std::max(got.size(), header.size()); ++i) {
            if (i < got.size() && i < header.size() && got[i] == header[i]) continue;
            msg += "; column " + std::to_string(i + 1) + " expected '" +
                   (i < header.size() ? header[i] : std::string("<none>")) + "' got '" +
                   (i < got.size() ? got[i] : std::string("<none>")) + "'";
            break;
        }
        throw validation_error(msg);
    }

    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ++report.rows_read;
        const auto f = split_csv_line(line);
        std::vector<RowError> row_errors;
        auto fail = [&](std::size_t col, const std::string& msg) {
            row_errors.push_back({line_no, col < header.size() ? header[col] : "", msg});
            if (col < report.columns.size()) ++report.columns[col].invalid;
        };
        LineageRecord rec;
        if (f.size() != header.size()) {
            row_errors.push_back({line_no, "",
                                  "expected " + std::to_string(header.size()) + " fields, got " +
                                      std::to_string(f.size())});
        } else {
            for (std::size_t c = 0; c < kFixedColumns; ++c) {
                if (f[c].empty()) {
                    ++report.columns[c].missing;
                    fail(c, "required value is empty");
                } else {
                    ++report.columns[c].present;
                }
            }
            if (!f[0].empty() && !parse_integer(f[0], rec.child_id)) fail(0, "not an unsigned integer: '" + f[0] + "'");
            if (!f[1].empty() && !parse_integer(f[1], rec.region_id)) fail(1, "not an unsigned integer: '" + f[1] + "'");
            if (!f[2].empty() && !parse_integer(f[2], rec.child_birth_year)) fail(2, "not an integer: '" + f[2] + "'");
            if (!f[3].empty()) {
                if (auto g = parse_gender(f[3])) rec.child_gender = *g;
                else fail(3, "gender must be M or F: '" + f[3] + "'");
            }
            std::size_t col = kFixedColumns;
            for (Relative r : kAllRelatives) {
                auto& o = rec.at(r);
                std::array<double*, 3> slots{&o.schooling, &o.log_earnings, &o.earnings_rank};
                for (std::size_t k = 0; k < 3; ++k, ++col) {
                    const std::string& s = f[col];
                    if (s.empty()) {
                        ++report.columns[col].missing;
                        continue;
                    }
                    double v;
                    if (!parse_double(s, v)) {
                        fail(col, "not a finite number: '" + s + "'");
                        continue;
                    }
                    if (k == 0) {
                        if (options.categorical_education) {
                            if (std::find(kSchoolingCodes.begin(), kSchoolingCodes.end(), v) == kSchoolingCodes.end()) {
                                fail(col, "schooling " + s + " is not an attainment code");
                                continue;
                            }
                        } else if (v < 0.0 || v > 30.0) {
                            fail(col, "schooling " + s + " outside [0, 30]");
                            continue;
                        }
                    } else if (k == 2 && (v < 0.0 || v > 1.0)) {
                        fail(col, "rank " + s + " outside [0, 1]");
                        continue;
                    }
                    ++report.columns[col].present;
                    *slots[k] = v;
                }
            }
        }
        if (!row_errors.empty()) {
            if (options.fail_fast) {
                const RowError& e = row_errors.front();
                throw validation_error("line " + std::to_string(e.line) +
                                       (e.column.empty() ? "" : ", column " + e.column) + ": " + e.message);
            }
            report.errors.insert(report.errors.end(), row_errors.begin(), row_errors.end());
            continue;
        }
        report.records.push_back(rec);
    }
    return report;
}

IngestReport ingest_lineage_csv(const std::filesystem::path& path, const IngestOptions& options) {
    auto in = open_input(path);
    return ingest_lineage_csv(in, options);
}

void write_ingest_report(std::ostream& out, const IngestReport& report) {
    CsvWriter w(out);
    w.row({"column", "present", "missing", "invalid"});
    for (const auto& c : report.columns)
        w.field(std::string_view(c.name)).field(c.present).field(c.missing).field(c.invalid).end_row();
}

void write_panel_csv(const std::filesystem::path& path, std::span<const EarningsPanelRow> rows) {
    auto out = open_output(path);
    CsvWriter w(out);
    w.row({"person_id", "region_id", "gender", "edu_group", "birth_year", "year", "age", "log_earnings",
           "below_floor"});
    for (const auto& r : rows) {
        w.field(std::string_view(std::to_string(r.person_id)))
            .field(std::string_view(std::to_string(r.region_id)))
            .field(to_string(r.gender))
            .field(r.edu_group)
            .field(r.birth_year)
            .field(r.year)
            .field(r.age)
            .field(std::string_view(format_double(r.log_earnings)))
            .field(r.below_floor)
            .end_row();
    }
}

std::vector<EarningsPanelRow> read_panel_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    const std::vector<std::string> header{"person_id", "region_id", "gender", "edu_group", "birth_year",
                                          "year", "age", "log_earnings", "below_floor"};
    if (!next_line(in, line) || split_csv_line(line) != header)
        throw validation_error(path.string() + " line 1: header does not match the panel schema");
    std::vector<EarningsPanelRow> rows;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        auto bad = [&](const std::string& col) {
            return validation_error(path.string() + " line " + std::to_string(line_no) + ", column " + col +
                                    ": invalid value");
        };
        if (f.size() != header.size()) throw bad("*");
        EarningsPanelRow r;
        if (!parse_integer(f[0], r.person_id)) throw bad(header[0]);
        if (!parse_integer(f[1], r.region_id)) throw bad(header[1]);
        auto g = parse_gender(f[2]);
        if (!g) throw bad(header[2]);
        r.gender = *g;
        if (!parse_integer(f[3], r.edu_group) || r.edu_group < 0 || r.edu_group >= kEducationGroups)
            throw bad(header[3]);
        if (!parse_integer(f[4], r.birth_year)) throw bad(header[4]);
        if (!parse_integer(f[5], r.year)) throw bad(header[5]);
        if (!parse_integer(f[6], r.age)) throw bad(header[6]);
        if (!parse_double(f[7], r.log_earnings)) throw bad(header[7]);
        if (f[8] != "0" && f[8] != "1") throw bad(header[8]);
        r.below_floor = f[8] == "1";
        rows.push_back(r);
    }
    return rows;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw validation_error("table has no column '" + std::string(name) + "'");
}

double Table::number(std::size_t row, std::string_view name) const {
    const std::string& s = text(row, name);
    if (s.empty()) return kMissing;
    double v;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw validation_error("column '" + std::string(name) + "': not a number: '" + s + "'");
    return v;
}

const std::string& Table::text(std::size_t row, std::string_view name) const {
    const std::size_t c = column(name);
    if (c >= rows.at(row).size()) throw validation_error("short row in table");
    return rows[row][c];
}

Table read_table(const std::filesystem::path& path) {
    auto in = open_input(path);
    Table t;
    std::string line;
    if (!next_line(in, line)) throw validation_error(path.string() + ": empty table");
    t.header = split_csv_line(line);
    while (next_line(in, line))
        if (!line.empty()) t.rows.push_back(split_csv_line(line));
    return t;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(v));
    return buf.data();
}

}  // namespace mobilab
